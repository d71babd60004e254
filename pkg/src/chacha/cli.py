"""Command line entry point: ``chacha run|score|sweep``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from chacha import harness
from chacha.errors import ChachaError
from chacha.harness import Algorithm, RunSpec

log = logging.getLogger("chacha")


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", default="ni", help="ni or ni+lr")
    p.add_argument("--data", default=None, help="input file (not needed for synth formats)")
    p.add_argument("--format", dest="data_format", default="synth:interaction",
                   help="vw, csv or synth:{linear,interaction,drift}")
    p.add_argument("--target", dest="target_column", default=None, help="target column for csv input")
    p.add_argument("--budget", type=int, default=5)
    p.add_argument("--max-examples", type=int, default=100_000)
    p.add_argument("--n-min", type=int, default=None, help="initial lease; default 5 x features of the first example")
    p.add_argument("--bits", dest="bit_precision", type=int, default=18)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--loss-scale", dest="loss_scale_factor", type=float, default=0.05)
    p.add_argument("--no-log-transform", dest="log_transform", action="store_false",
                   help="keep the raw target even if it is large")
    synth = p.add_argument_group("synthetic streams")
    synth.add_argument("--data-seed", type=int, default=0)
    synth.add_argument("--noise", dest="noise_sigma", type=float, default=0.1)
    synth.add_argument("--namespaces", dest="synth_namespaces", type=int, default=3)
    synth.add_argument("--features", dest="synth_features", type=int, default=3)


def _spec_from(args, algorithm, seed) -> RunSpec:
    return RunSpec(
        algorithm=algorithm, task=args.task, budget=args.budget, max_examples=args.max_examples,
        seed=seed, data=args.data, data_format=args.data_format, target_column=args.target_column,
        n_min=args.n_min, bit_precision=args.bit_precision, delta=args.delta,
        loss_scale_factor=args.loss_scale_factor, data_seed=args.data_seed,
        noise_sigma=args.noise_sigma, synth_namespaces=args.synth_namespaces,
        synth_features=args.synth_features, log_transform=args.log_transform,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chacha", description="Online champion-challenger AutoML")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one algorithm over a stream and write its trace")
    p_run.add_argument("--algo", default="chacha", help=", ".join(a.value for a in Algorithm))
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True, help="trace CSV; the summary goes next to it")
    _add_run_options(p_run)

    p_score = sub.add_parser("score", help="normalized score of a trace against the two anchors")
    p_score.add_argument("--naive", required=True)
    p_score.add_argument("--exhaustive", required=True)
    p_score.add_argument("--alg", required=True)

    p_sweep = sub.add_parser("sweep", help="several seeds and algorithms; mean and stddev per algorithm")
    p_sweep.add_argument("--seeds", type=int, default=5)
    p_sweep.add_argument("--base-seed", type=int, default=0)
    p_sweep.add_argument("--algos", default="chacha,random_init,chacha_aggressive,chacha_no_champion",
                         help="comma separated; naive and exhaustive always run as anchors")
    p_sweep.add_argument("--out-dir", default=None, help="also write every trace here")
    p_sweep.add_argument("--out", default=None, help="write the table here instead of stdout")
    _add_run_options(p_sweep)
    return parser


def cmd_run(args) -> int:
    spec = _spec_from(args, args.algo, args.seed)
    trace = harness.run(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    harness.write_trace(trace, out)
    harness.write_summary(trace, harness.summary_path(out))
    print(f"{spec.algorithm.value}\tsteps={len(trace.records)}\tmse={trace.final_mse!r}\t"
          f"champion={trace.records[-1].champion_id}")
    return 0


def _final_mse(path: str) -> tuple[int, float]:
    records = harness.read_trace(path)
    if not records:
        raise ValueError(f"{path}: empty trace")
    return len(records), harness.progressive_mse(records)


def cmd_score(args) -> int:
    (n_naive, naive), (n_ex, exhaustive), (n_alg, alg) = (
        _final_mse(args.naive), _final_mse(args.exhaustive), _final_mse(args.alg))
    if not n_naive == n_ex == n_alg:
        raise ValueError(f"traces have different lengths: {n_naive}, {n_ex}, {n_alg}")
    score = harness.normalized_score(alg, naive, exhaustive)
    print("undefined" if score is None else repr(score))
    return 0


def cmd_sweep(args) -> int:
    algos = [Algorithm.parse(a) for a in args.algos.split(",") if a.strip()]
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    examples = harness.load_examples(_spec_from(args, Algorithm.NAIVE, args.base_seed))

    def one(algo, seed):
        trace = harness.run(_spec_from(args, algo, seed), examples)
        if out_dir:
            path = out_dir / f"{algo.value}_seed{seed}.csv"
            harness.write_trace(trace, path)
            harness.write_summary(trace, harness.summary_path(path))
        log.info("%s seed=%d mse=%.6g", algo.value, seed, trace.final_mse)
        return trace

    # the anchors are deterministic: one run each
    naive = one(Algorithm.NAIVE, args.base_seed)
    exhaustive = one(Algorithm.EXHAUSTIVE, args.base_seed)
    rows = []
    for algo, traces in [(Algorithm.NAIVE, [naive]), (Algorithm.EXHAUSTIVE, [exhaustive])]:
        rows.append((algo, harness.aggregate(traces, naive, exhaustive)))
    for algo in algos:
        if algo in (Algorithm.NAIVE, Algorithm.EXHAUSTIVE):
            continue
        traces = [one(algo, s) for s in harness.iter_seeds(args.base_seed, args.seeds)]
        rows.append((algo, harness.aggregate(traces, naive, exhaustive)))

    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "n", "loss_mean", "loss_std", "score_mean", "score_std"])
        for algo, agg in rows:
            score = agg.get("score")
            s_mean, s_std = score if score is not None else ("undefined", "undefined")
            writer.writerow([algo.value, agg["n"], repr(agg["loss"][0]), repr(agg["loss"][1]),
                             s_mean if isinstance(s_mean, str) else repr(s_mean),
                             s_std if isinstance(s_std, str) else repr(s_std)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "score": cmd_score, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except (ChachaError, ValueError, KeyError, OSError, ArithmeticError) as exc:
        print(f"chacha: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
