import math

import pytest

from chacha.config_oracle import TuningTask, oracle
from chacha.engine import Engine
from chacha.errors import InvalidBudget, NumericOverflow
from chacha.harness import initial_config, synth_stream
from chacha.ingest import Example
from chacha.learner import Config, featurize

from oracles import RefLearner

ABC = frozenset("abc")


@pytest.fixture(scope="module")
def six_ns_run():
    stream = synth_stream("interaction", 4000, seed=2, n_namespaces=6)
    engine = Engine(initial_config(stream), budget=5, seed=1, record_bounds=True)
    snapshots = []
    for ex in stream:
        engine.predict(ex)
        live_ids = [r.id for r in engine.live]
        members = engine.members()
        champ = engine.champion
        snapshots.append(dict(
            champion_id=champ.id, champion_ok=champ.live and champ.model is not None,
            live_ok=all(r.live and r.model is not None for r in engine.live), live_ids=live_ids,
            incumbent=engine.incumbent_id, member_ids={r.id for r in members},
            pool=set(engine.pool),
        ))
        engine.learn(ex.label)
    return stream, engine, snapshots


def test_init_pool_and_budget():
    eng = Engine(Config(ABC), budget=5)
    assert len(eng.pool) == 3
    assert eng.incumbent_id == Config(ABC).id
    with pytest.raises(InvalidBudget):
        Engine(Config(ABC), budget=0)


def test_large_budget_runs_whole_pool():
    stream = synth_stream("interaction", 50, seed=0)
    eng = Engine(initial_config(stream), budget=1000)
    eng.step(stream[0])
    assert len(eng.live) == 3


def test_budget_one_is_plain_online_learning():
    stream = synth_stream("interaction", 2000, seed=7)
    cfg = initial_config(stream)
    eng = Engine(cfg, budget=1)
    ref = RefLearner(cfg.learning_rate)
    for ex in stream:
        x = featurize(ex, cfg, eng.bit_precision)
        q = ref.predict(x)
        p, rec = eng.step(ex)
        assert p == q
        assert rec.incumbent_id == cfg.id and rec.live_size == 1
        ref.update(x, ex.label, q)
    assert eng.live == [] and eng.promotions == []


def _with_uppers(eng, values):
    eng.upper_bound = lambda rec: values[rec.id]


def test_select_incumbent_rules():
    stream = synth_stream("interaction", 5, seed=0)
    eng = Engine(initial_config(stream), budget=5)
    eng.predict(stream[0])
    champ = eng.champion.id
    c1, c2, c3 = (r.id for r in eng.live)
    _with_uppers(eng, {champ: 0.4, c1: 0.3, c2: 0.5, c3: math.inf})
    assert eng.select_incumbent().id == c1
    _with_uppers(eng, {champ: math.inf, c1: math.inf, c2: math.inf, c3: math.inf})
    assert eng.select_incumbent().id == champ
    _with_uppers(eng, {champ: 0.3, c1: 0.3, c2: 0.5, c3: 0.3})
    assert eng.select_incumbent().id == champ
    _with_uppers(eng, {champ: 0.9, c1: 0.5, c2: 0.3, c3: 0.3})
    assert eng.select_incumbent().id == min(c2, c3)


def test_learn_requires_predict():
    eng = Engine(Config(ABC))
    with pytest.raises(RuntimeError):
        eng.learn(1.0)


def test_engine_invariants_every_step(six_ns_run):
    stream, engine, snaps = six_ns_run
    eliminated = {cid for _, cid in engine.eliminations}
    for s in snaps:
        assert s["champion_ok"] and s["live_ok"]
        assert len(s["live_ids"]) <= engine.budget - 1
        assert s["champion_id"] not in s["live_ids"]
        assert s["incumbent"] in s["member_ids"]
    assert not eliminated & set(engine.pool)
    assert engine.promotions, "expected at least one promotion on a six-namespace stream"


def test_pool_bookkeeping_replays_from_the_logs(six_ns_run):
    stream, engine, snaps = six_ns_run
    # rebuild |S| after every step from the promotion/elimination logs and the oracle
    c_init = initial_config(stream)
    seen = {c_init.id} | {c.id for c in oracle(c_init)}
    pool = {c.id for c in oracle(c_init)}
    promos = {t: (old, new) for t, old, new in engine.promotions}
    elims: dict[int, list[str]] = {}
    for t, cid in engine.eliminations:
        elims.setdefault(t, []).append(cid)
    configs = {c.id: c for c in oracle(c_init)}
    configs[c_init.id] = c_init
    sizes = []
    for t in range(1, len(stream) + 1):
        for cid in elims.get(t, []):
            pool.remove(cid)
        if t in promos:
            old, new = promos[t]
            pool.remove(new)
            pool.add(old)
            for c in oracle(configs[new]):
                configs.setdefault(c.id, c)
                if c.id not in seen:
                    seen.add(c.id)
                    pool.add(c.id)
        sizes.append(len(pool))
    assert pool == set(engine.pool)
    assert seen == engine.seen_ids
    # sizes[t] is |S| after step t+1; the step record reports the same
    trace_sizes = [s["pool"] for s in snaps]
    assert [len(p) for p in trace_sizes[1:]] == sizes[:-1]


def test_promoted_challenger_keeps_its_statistics():
    stream = synth_stream("interaction", 3000, seed=0)
    eng = Engine(initial_config(stream), budget=5)
    for ex in stream:
        eng.predict(ex)
        eng.learn(ex.label)
        if eng.promotions:
            t, old, new = eng.promotions[0]
            assert eng.champion.id == new
            assert eng.champion.loss.count > 1
            demoted = eng.pool[old]
            assert demoted.live and demoted.model is not None
            break
    else:
        pytest.fail("no promotion")


def test_prediction_does_not_read_the_label():
    stream = synth_stream("interaction", 400, seed=3)
    a, b = Engine(initial_config(stream), seed=5), Engine(initial_config(stream), seed=5)
    for i, ex in enumerate(stream):
        twin = Example(1e6 if i == 300 else ex.label, ex.namespaces)
        pa, pb = a.predict(ex), b.predict(twin)
        assert pa == pb
        if i == 300:
            break
        a.learn(ex.label)
        b.learn(twin.label)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_overflow_propagates():
    huge = [Example(1.0, {"a": [("x", 1e300)]}) for _ in range(3)]
    eng = Engine(Config(frozenset("a")), budget=1)
    with pytest.raises(NumericOverflow):
        for ex in huge:
            eng.step(ex)


def test_identical_seeds_identical_records():
    stream = synth_stream("interaction", 1500, seed=9, n_namespaces=5)
    runs = [Engine(initial_config(stream), seed=4).run(stream) for _ in range(2)]
    assert [r.as_row() for r in runs[0]] == [r.as_row() for r in runs[1]]


def test_static_pool_has_no_tests_or_oracle():
    stream = synth_stream("interaction", 500, seed=1)
    c_init = initial_config(stream)
    eng = Engine(c_init, budget=2, fixed_challengers=oracle(c_init))
    eng.run(stream)
    assert len(eng.members()) == 4
    assert eng.promotions == [] and eng.eliminations == []


def test_no_champion_mode_shares_all_slots():
    stream = synth_stream("interaction", 3000, seed=1, n_namespaces=6)
    eng = Engine(initial_config(stream), budget=5, reserve_champion=False, aggressive=True)
    idle_champion_steps = 0
    for ex in stream:
        eng.predict(ex)
        assert len(eng.members()) <= 5
        if eng.champion not in eng.members():
            assert not eng.champion.live and eng.champion.model is None
            idle_champion_steps += 1
        eng.learn(ex.label)
    # the champion gets swapped out like any challenger
    assert idle_champion_steps > 0


def test_ni_lr_task_grows_learning_rate_candidates():
    eng = Engine(Config(ABC), task=TuningTask.NI_LR)
    assert len(eng.pool) == 11
