"""Experiment runner: ChaCha, its ablations, and the comparison baselines."""

from __future__ import annotations

import csv
import enum
import json
import math
import statistics
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from chacha.bounds import BoundParams
from chacha.config_oracle import OracleParams, TuningTask, oracle
from chacha.engine import TRACE_FIELDS, Engine, StepRecord
from chacha.ingest import Example, IngestPolicy, apply_target_transform, read_csv, read_vw
from chacha.learner import DEFAULT_BITS, DEFAULT_LR, Config


class Algorithm(enum.Enum):
    CHACHA = "chacha"
    NAIVE = "naive"
    EXHAUSTIVE = "exhaustive"
    RANDOM_INIT = "random_init"
    CHACHA_AGGRESSIVE = "chacha_aggressive"
    CHACHA_NO_CHAMPION = "chacha_no_champion"

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        key = text.strip().lower().replace("-", "_")
        for algo in cls:
            if algo.value == key or algo.name.lower() == key:
                return algo
        raise ValueError(f"unknown algorithm {text!r}")


class SynthKind(enum.Enum):
    LINEAR = "linear"
    INTERACTION = "interaction"
    DRIFT = "drift"


def _ns_names(n: int) -> list[str]:
    if n > len(string.ascii_lowercase):
        return [f"n{i}" for i in range(n)]
    return list(string.ascii_lowercase[:n])


def linear_weights(seed: int, n_namespaces: int = 3, features_per_namespace: int = 3) -> np.ndarray:
    """True weights of the LINEAR stream for ``seed``; independent of the stream length."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    return rng.normal(0.0, 1.0, size=(n_namespaces, features_per_namespace))


def synth_stream(
    kind: SynthKind | str,
    n_examples: int,
    noise_sigma: float = 0.1,
    seed: int = 0,
    n_namespaces: int = 3,
    features_per_namespace: int = 3,
) -> list[Example]:
    """Deterministic synthetic regression stream.

    Features are uniform on [-1, 1], ``features_per_namespace`` per namespace
    (namespaces ``a``, ``b``, ``c``, ...).

    * LINEAR: ``y = w . x`` with ``w`` from :func:`linear_weights`.
    * INTERACTION: ``y = x_a . x_b`` (dot product of the two blocks), which
      only a learner crossing ``a`` with ``b`` can represent.
    * DRIFT: INTERACTION for the first half, then ``y = x_a . x_c``.

    Gaussian noise with scale ``noise_sigma`` is added to every label.
    """
    kind = SynthKind(kind.lower()) if isinstance(kind, str) else kind
    if n_examples < 1:
        raise ValueError("n_examples must be >= 1")
    if n_namespaces < (3 if kind is SynthKind.DRIFT else 2) and kind is not SynthKind.LINEAR:
        raise ValueError("interaction streams need at least namespaces a, b (and c for drift)")
    rng = np.random.default_rng(seed)
    k = features_per_namespace
    names = _ns_names(n_namespaces)
    X = rng.uniform(-1.0, 1.0, size=(n_examples, n_namespaces, k))
    noise = rng.normal(0.0, noise_sigma, size=n_examples) if noise_sigma > 0 else np.zeros(n_examples)
    if kind is SynthKind.LINEAR:
        w = linear_weights(seed, n_namespaces, k)
        y = np.einsum("tnk,nk->t", X, w)
    else:
        y = np.einsum("tk,tk->t", X[:, 0], X[:, 1])
        if kind is SynthKind.DRIFT:
            half = n_examples // 2
            y[half:] = np.einsum("tk,tk->t", X[half:, 0], X[half:, 2])
    y = y + noise

    feat_names = [f"f{j}" for j in range(k)]
    out = []
    for t in range(n_examples):
        row = X[t].tolist()
        ns = {names[i]: list(zip(feat_names, row[i])) for i in range(n_namespaces)}
        out.append(Example(float(y[t]), ns))
    return out


@dataclass
class RunSpec:
    algorithm: Algorithm = Algorithm.CHACHA
    task: TuningTask = TuningTask.NI
    budget: int = 5
    max_examples: int = 100_000
    seed: int = 0
    data: str | None = None
    data_format: str = "synth:interaction"
    target_column: str | None = None
    n_min: int | None = None
    bit_precision: int = DEFAULT_BITS
    delta: float = 0.1
    loss_scale_factor: float = 0.05
    # synthetic streams only
    data_seed: int = 0
    noise_sigma: float = 0.1
    synth_namespaces: int = 3
    synth_features: int = 3
    log_transform: bool = True
    record_bounds: bool = False

    def __post_init__(self):
        if isinstance(self.algorithm, str):
            self.algorithm = Algorithm.parse(self.algorithm)
        if isinstance(self.task, str):
            self.task = TuningTask.parse(self.task)
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.max_examples < 1:
            raise ValueError("max_examples must be >= 1")


@dataclass
class RunTrace:
    records: list[StepRecord]
    promotions: list[tuple[int, str, str]] = field(default_factory=list)
    eliminations: list[tuple[int, str]] = field(default_factory=list)
    # final progressive raw MSE of every learner live at the end
    learner_mse: dict[str, float] = field(default_factory=dict)
    spec: RunSpec | None = None
    engine: Engine | None = field(default=None, repr=False)

    @property
    def final_mse(self) -> float:
        return progressive_mse(self.records)

    @property
    def final_clipped_mae(self) -> float:
        if not self.records:
            return math.nan
        return math.fsum(r.clipped_abs_err for r in self.records) / len(self.records)

    def summary(self) -> dict:
        out = {
            "steps": len(self.records),
            "final_mse": self.final_mse,
            "final_clipped_mae": self.final_clipped_mae,
            "final_champion": self.records[-1].champion_id if self.records else None,
            "promotions": [list(p) for p in self.promotions],
            "eliminations": [list(e) for e in self.eliminations],
            "learner_mse": self.learner_mse,
        }
        if self.spec is not None:
            spec = asdict(self.spec)
            spec["algorithm"] = self.spec.algorithm.value
            spec["task"] = self.spec.task.value
            out["spec"] = spec
        return out


def progressive_mse(records: Sequence[StepRecord]) -> float:
    if not records:
        return math.nan
    return math.fsum(r.sq_err for r in records) / len(records)


def load_examples(spec: RunSpec) -> list[Example]:
    fmt = spec.data_format.lower()
    if fmt.startswith("synth"):
        _, _, kind = fmt.partition(":")
        return synth_stream(
            kind or "interaction", spec.max_examples, spec.noise_sigma, spec.data_seed,
            spec.synth_namespaces, spec.synth_features,
        )
    if spec.data is None:
        raise ValueError(f"format {spec.data_format!r} needs a data path")
    if fmt == "vw":
        examples = read_vw(spec.data, spec.max_examples)
    elif fmt == "csv":
        if not spec.target_column:
            raise ValueError("csv input needs a target column")
        examples = read_csv(spec.data, spec.target_column, IngestPolicy(), spec.max_examples)
    else:
        raise ValueError(f"unknown data format {spec.data_format!r}")
    if spec.log_transform:
        examples = apply_target_transform(examples)
    return examples


def initial_config(examples: Sequence[Example]) -> Config:
    """No interactions, learning rate 0.5, over the first example's namespaces."""
    if not examples:
        raise ValueError("empty stream")
    return Config(frozenset(examples[0].namespaces), frozenset(), DEFAULT_LR)


def build_engine(spec: RunSpec, c_init: Config) -> Engine:
    common = dict(
        task=spec.task,
        bound_params=BoundParams(spec.delta, spec.loss_scale_factor),
        n_min=spec.n_min,
        bit_precision=spec.bit_precision,
        seed=spec.seed,
        record_bounds=spec.record_bounds,
    )
    algo = spec.algorithm
    if algo is Algorithm.NAIVE:
        return Engine(c_init, 1, fixed_challengers=[], **common)
    if algo is Algorithm.EXHAUSTIVE:
        return Engine(c_init, spec.budget, fixed_challengers=oracle(c_init, spec.task), **common)
    if algo is Algorithm.RANDOM_INIT:
        batch = oracle(c_init, spec.task)
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(1)[0])
        k = min(spec.budget - 1, len(batch))
        picks = sorted(rng.choice(len(batch), size=k, replace=False).tolist()) if k else []
        return Engine(c_init, spec.budget, fixed_challengers=[batch[i] for i in picks], **common)
    if algo is Algorithm.CHACHA_AGGRESSIVE:
        return Engine(c_init, spec.budget, aggressive=True, **common)
    if algo is Algorithm.CHACHA_NO_CHAMPION:
        return Engine(c_init, spec.budget, aggressive=True, reserve_champion=False, **common)
    return Engine(c_init, spec.budget, **common)


def run(spec: RunSpec, examples: Sequence[Example] | None = None) -> RunTrace:
    if examples is None:
        examples = load_examples(spec)
    examples = examples[: spec.max_examples]
    engine = build_engine(spec, initial_config(examples))
    records = engine.run(examples)
    learner_mse = {
        rec.id: rec.sq_err_sum / rec.loss.count for rec in engine.members() if rec.loss.count
    }
    return RunTrace(records, list(engine.promotions), list(engine.eliminations), learner_mse, spec, engine)


def normalized_score(loss_alg: float, loss_naive: float, loss_exhaustive: float) -> float | None:
    """0 for Naive, 1 for Exhaustive; ``None`` when the two anchors coincide."""
    denom = loss_naive - loss_exhaustive
    if denom == 0:
        return None
    return (loss_naive - loss_alg) / denom


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    values = list(values)
    if not values:
        raise ValueError("need at least one value")
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(traces: Sequence[RunTrace], naive: RunTrace | None = None,
              exhaustive: RunTrace | None = None) -> dict:
    """Mean and sample stddev of final losses (and scores, when anchors are given)."""
    if not traces:
        raise ValueError("need at least one trace")
    out = {"n": len(traces), "loss": mean_std([t.final_mse for t in traces])}
    if naive is not None and exhaustive is not None:
        scores = [normalized_score(t.final_mse, naive.final_mse, exhaustive.final_mse) for t in traces]
        out["score"] = None if any(s is None for s in scores) else mean_std(scores)
    return out


# -- trace files ---------------------------------------------------------


def write_trace(trace: RunTrace, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for rec in trace.records:
            writer.writerow([rec.t, rec.incumbent_id, repr(rec.prediction), repr(rec.label),
                             repr(rec.sq_err), repr(rec.clipped_abs_err), rec.champion_id,
                             rec.pool_size, rec.live_size])


def summary_path(trace_path: str | Path) -> Path:
    trace_path = Path(trace_path)
    return trace_path.with_name(trace_path.stem + ".summary.json")


def write_summary(trace: RunTrace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(trace.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_trace(path: str | Path) -> list[StepRecord]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        return [
            StepRecord(int(r["t"]), r["incumbent"], float(r["pred"]), float(r["label"]),
                       float(r["sq_err"]), float(r["clipped_abs_err"]), r["champion"],
                       int(r["pool_size"]), int(r["live_size"]))
            for r in reader
        ]


def iter_seeds(base_seed: int, n: int) -> Iterator[int]:
    return iter(range(base_seed, base_seed + n))
