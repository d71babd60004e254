import json
import math

import numpy as np
import pytest

from chacha import harness
from chacha.config_oracle import oracle
from chacha.harness import Algorithm, RunSpec, SynthKind, aggregate, normalized_score, synth_stream
from chacha.learner import Config, Featurizer, LearnerModel


def test_algorithm_parse():
    assert Algorithm.parse("ChaCha") is Algorithm.CHACHA
    assert Algorithm.parse("chacha-no-champion") is Algorithm.CHACHA_NO_CHAMPION
    with pytest.raises(ValueError):
        Algorithm.parse("grid")


@pytest.mark.parametrize("kw", [dict(budget=0), dict(max_examples=0)])
def test_runspec_validation(kw):
    with pytest.raises(ValueError):
        RunSpec(**kw)


def test_synth_streams_are_deterministic_and_shaped():
    a = synth_stream("interaction", 20, seed=1)
    b = synth_stream(SynthKind.INTERACTION, 20, seed=1)
    assert a == b
    assert a != synth_stream("interaction", 20, seed=2)
    assert list(a[0].namespaces) == ["a", "b", "c"]
    assert all(len(f) == 3 for f in a[0].namespaces.values())
    with pytest.raises(ValueError):
        synth_stream("interaction", 0)


def test_synth_interaction_labels_and_drift():
    ex = synth_stream("interaction", 50, noise_sigma=0.0, seed=4)
    for e in ex:
        xa = [v for _, v in e.namespaces["a"]]
        xb = [v for _, v in e.namespaces["b"]]
        assert e.label == pytest.approx(sum(p * q for p, q in zip(xa, xb)), abs=1e-12)
    drift = synth_stream("drift", 10, noise_sigma=0.0, seed=4)
    late = drift[-1]
    xa = [v for _, v in late.namespaces["a"]]
    xc = [v for _, v in late.namespaces["c"]]
    assert late.label == pytest.approx(sum(p * q for p, q in zip(xa, xc)), abs=1e-12)


def test_noiseless_interaction_is_learnable_by_the_crossed_config():
    stream = synth_stream("interaction", 4000, noise_sigma=0.0, seed=0)
    cfg = Config(frozenset("abc"), frozenset({("a", "b")}))
    m, fz = LearnerModel(cfg), Featurizer(18)
    errs = []
    for ex in stream:
        idx, vals = fz.view(ex).vector(cfg)
        p = m.predict_sparse(idx, vals)
        errs.append((p - ex.label) ** 2)
        m.update_sparse(idx, vals, ex.label, p)
    assert np.mean(errs[-500:]) < 1e-3 * np.mean(errs[:500])


def test_naive_never_promotes_and_trace_length():
    stream = synth_stream("interaction", 300, seed=0)
    tr = harness.run(RunSpec(Algorithm.NAIVE, max_examples=200), stream)
    assert tr.promotions == [] and len(tr.records) == 200
    tr = harness.run(RunSpec(Algorithm.NAIVE, max_examples=1000), stream)
    assert len(tr.records) == 300


def test_exhaustive_ignores_budget():
    stream = synth_stream("interaction", 50, seed=0)
    for b in (1, 2, 5):
        tr = harness.run(RunSpec(Algorithm.EXHAUSTIVE, budget=b), stream)
        assert {r.live_size for r in tr.records} == {4}
        assert tr.promotions == []


def test_random_init_picks_distinct_fixed_challengers():
    stream = synth_stream("interaction", 30, seed=0, n_namespaces=10, features_per_namespace=1)
    c_init = harness.initial_config(stream)
    assert len(oracle(c_init)) == 45
    picks = set()
    for seed in range(5):
        eng = harness.build_engine(RunSpec(Algorithm.RANDOM_INIT, budget=5, seed=seed), c_init)
        ids = [r.id for r in eng.live]
        assert len(ids) == len(set(ids)) == 4
        assert len(eng.members()) == 5
        picks.add(tuple(ids))
        eng.run(stream)
        assert [r.id for r in eng.live] == ids
    assert len(picks) > 1


def test_linear_stream_gives_interactions_no_edge():
    stream = synth_stream("linear", 5000, seed=3)
    naive = harness.run(RunSpec(Algorithm.NAIVE), stream)
    exhaustive = harness.run(RunSpec(Algorithm.EXHAUSTIVE), stream)
    assert exhaustive.final_mse > 0.9 * naive.final_mse


def test_normalized_score_examples():
    assert normalized_score(1.0, 1.0, 0.5) == 0.0
    assert normalized_score(0.5, 1.0, 0.5) == 1.0
    assert normalized_score(0.75, 1.0, 0.5) == 0.5
    assert normalized_score(0.3, 0.7, 0.7) is None


class _T:
    def __init__(self, mse):
        self.final_mse = mse


def test_aggregate_examples():
    out = aggregate([_T(1.0), _T(2.0), _T(3.0)])
    assert out["loss"] == (2.0, 1.0) and out["n"] == 3
    assert aggregate([_T(4.0)])["loss"] == (4.0, 0.0)
    assert aggregate([_T(0.3)] * 5)["loss"][1] == 0.0
    scored = aggregate([_T(0.75), _T(0.5)], naive=_T(1.0), exhaustive=_T(0.5))
    assert scored["score"][0] == 0.75
    assert aggregate([_T(0.75)], naive=_T(1.0), exhaustive=_T(1.0))["score"] is None
    with pytest.raises(ValueError):
        aggregate([])


def test_trace_round_trip_and_summary(tmp_path):
    stream = synth_stream("interaction", 400, seed=0)
    tr = harness.run(RunSpec(Algorithm.CHACHA, seed=3), stream)
    path = tmp_path / "run.csv"
    harness.write_trace(tr, path)
    assert path.read_text().splitlines()[0] == "t,incumbent,pred,label,sq_err,clipped_abs_err,champion,pool_size,live_size"
    assert [r.as_row() for r in harness.read_trace(path)] == [r.as_row() for r in tr.records]
    harness.write_summary(tr, harness.summary_path(path))
    summary = json.loads((tmp_path / "run.summary.json").read_text())
    assert summary["steps"] == 400
    assert summary["final_mse"] == tr.final_mse
    assert summary["spec"]["algorithm"] == "chacha"
    assert summary["promotions"] == [list(p) for p in tr.promotions]


def test_read_trace_rejects_foreign_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        harness.read_trace(p)


def test_load_examples_from_files(tmp_path):
    vw = tmp_path / "d.vw"
    vw.write_text("1000 |a x:1\n1 |a x:2\n")
    exs = harness.load_examples(RunSpec(data=str(vw), data_format="vw"))
    assert [e.label for e in exs] == [math.log(1000.0), 0.0]
    raw = harness.load_examples(RunSpec(data=str(vw), data_format="vw", log_transform=False))
    assert raw[0].label == 1000.0
    csv_path = tmp_path / "d.csv"
    csv_path.write_text("f1,f2,y\n1,2,3\n4,5,6\n")
    exs = harness.load_examples(RunSpec(data=str(csv_path), data_format="csv", target_column="y"))
    assert exs[1].namespaces == {"ns0": [("f1", 4.0)], "ns1": [("f2", 5.0)]}
    with pytest.raises(ValueError):
        harness.load_examples(RunSpec(data=str(csv_path), data_format="csv"))
    with pytest.raises(ValueError):
        harness.load_examples(RunSpec(data_format="vw"))
    with pytest.raises(ValueError):
        harness.load_examples(RunSpec(data=str(csv_path), data_format="parquet"))


def test_run_is_deterministic():
    spec = RunSpec(Algorithm.CHACHA, max_examples=1500, seed=2, synth_namespaces=5)
    a, b = harness.run(spec), harness.run(spec)
    assert [r.as_row() for r in a.records] == [r.as_row() for r in b.records]
    assert a.summary() == {**b.summary()}
