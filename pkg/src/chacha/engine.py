"""The champion/challenger loop over a stream of examples.

Per example: schedule the live challengers, predict with the live learner
that has the smallest loss upper bound, then on the label update every live
learner, eliminate challengers that are provably worse than the champion and
promote one that is provably better. A promotion seeds new challengers from
the oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from chacha import bounds
from chacha.bounds import BoundParams, LabelRange
from chacha.config_oracle import OracleParams, TuningTask, oracle
from chacha.errors import InvalidBudget
from chacha.ingest import Example
from chacha.learner import DEFAULT_BITS, Config, DimensionTracker, Featurizer, LearnerBank, dimension
from chacha.scheduler import ChallengerRecord, Scheduler, SchedulerParams

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("t", "incumbent", "pred", "label", "sq_err", "clipped_abs_err", "champion", "pool_size", "live_size")


@dataclass(slots=True)
class StepRecord:
    t: int
    incumbent_id: str
    prediction: float
    label: float
    sq_err: float
    clipped_abs_err: float
    champion_id: str
    pool_size: int
    live_size: int

    def as_row(self) -> tuple:
        return (self.t, self.incumbent_id, self.prediction, self.label, self.sq_err,
                self.clipped_abs_err, self.champion_id, self.pool_size, self.live_size)


@dataclass(slots=True)
class BoundSnapshot:
    """Bounds seen by the promotion/elimination tests at one step."""

    t: int
    champion_id: str
    champion: tuple[float, float, float]  # lower, upper, eps
    challengers: list[tuple[str, float, float]]  # id, lower, upper


class Engine:
    """Online AutoML over one stream.

    ``reserve_champion=False`` and ``aggressive=True`` give the two scheduling
    ablations. Passing ``fixed_challengers`` turns the engine into a static
    pool: the champion plus those configs are live from the first example,
    with no scheduling, tests or oracle calls (budget is then ignored).
    """

    def __init__(
        self,
        c_init: Config,
        budget: int = 5,
        task: TuningTask = TuningTask.NI,
        bound_params: BoundParams | None = None,
        oracle_params: OracleParams | None = None,
        n_min: int | None = None,
        bit_precision: int = DEFAULT_BITS,
        seed: int = 0,
        aggressive: bool = False,
        reserve_champion: bool = True,
        fixed_challengers: Sequence[Config] | None = None,
        record_bounds: bool = False,
    ):
        if budget < 1:
            raise InvalidBudget(f"budget must be >= 1, got {budget}")
        self.budget = budget
        self.task = task
        self.bound_params = bound_params or BoundParams()
        self.oracle_params = oracle_params or OracleParams()
        self.bit_precision = bit_precision
        self.reserve_champion = reserve_champion
        self.static = fixed_challengers is not None

        self.range = LabelRange()
        self.tracker = DimensionTracker()
        self.featurizer = Featurizer(bit_precision)
        self._dims: dict[str, int] = {}
        self._dims_version = -1
        # bumped whenever pool size, label range or dimensions change; cached
        # intervals from an older epoch are stale
        self._epoch = 0
        self._n_min_fixed = n_min is not None
        # at most b learners are live; one spare covers the promotion hand-over
        capacity = 1 + len(fixed_challengers) if self.static else budget + 1
        self.bank = LearnerBank(capacity, bit_precision)
        self.scheduler = Scheduler(
            SchedulerParams(n_min if n_min is not None else 1, seed),
            upper_bound=self.upper_bound,
            admit=self._install_model,
            release=self._release_model,
            rng=np.random.default_rng(np.random.SeedSequence(seed)),
            aggressive=aggressive,
        )

        self.t = 0
        self.seen_ids: set[str] = {c_init.id}
        self.pool: dict[str, ChallengerRecord] = {}
        self.live: list[ChallengerRecord] = []
        self.promotions: list[tuple[int, str, str]] = []
        self.eliminations: list[tuple[int, str]] = []
        self.bound_log: list[BoundSnapshot] | None = [] if record_bounds else None

        self.champion = ChallengerRecord(c_init)
        if reserve_champion or self.static:
            self.scheduler._activate(self.champion)
        self.incumbent_id = c_init.id

        if self.static:
            for cfg in fixed_challengers:
                if cfg.id in self.seen_ids:
                    continue
                rec = self._add_candidate(cfg)
                self.scheduler._activate(rec)
                self.live.append(rec)
        else:
            for cfg in oracle(c_init, task, self.oracle_params):
                self._add_candidate(cfg)

        self._pending: tuple | None = None

    @property
    def n_min(self) -> int:
        return self.scheduler.params.n_min

    def _add_candidate(self, cfg: Config) -> ChallengerRecord:
        rec = ChallengerRecord(cfg)
        self.pool[cfg.id] = rec
        self.seen_ids.add(cfg.id)
        self._epoch += 1
        return rec

    def _install_model(self, rec: ChallengerRecord) -> None:
        rec.model = self.bank.new_model(rec.config)

    def _release_model(self, rec: ChallengerRecord) -> None:
        self.bank.release(rec.model)

    # -- bounds -----------------------------------------------------------

    def dim(self, config: Config) -> int:
        if self._dims_version != self.tracker.version:
            self._dims.clear()
            self._dims_version = self.tracker.version
        d = self._dims.get(config.id)
        if d is None:
            d = self._dims[config.id] = max(1, dimension(config, self.tracker, self.bit_precision))
        return d

    def interval(self, rec: ChallengerRecord) -> tuple[float, float, float]:
        """``(lower, upper, eps)`` of a record under the current pool size and label range."""
        n = rec.loss.count
        if n == 0:
            return -bounds.INF, bounds.INF, bounds.INF
        total = rec.loss.sum_clipped_abs_error
        hit = rec.cached_interval
        if hit is not None and hit[0] == self._epoch and hit[1] == n and hit[2] == total:
            return hit[3]
        # same arithmetic as bounds.epsilon, inlined for the hot path
        params = self.bound_params
        a = params.loss_scale_factor * (self.range.y_max - self.range.y_min)
        if a == 0.0:
            eps = 0.0
        else:
            d = self._dims.get(rec.config.id) if self._dims_version == self.tracker.version else None
            if d is None:
                d = self.dim(rec.config)
            eps = a * math.sqrt(d * math.log(n * max(len(self.pool), 1) / params.delta) / n)
        mean = total / n
        out = (mean - eps, mean + eps, eps)
        rec.cached_interval = (self._epoch, n, total, out)
        return out

    def upper_bound(self, rec: ChallengerRecord) -> float:
        return self.interval(rec)[1]

    # -- the loop ---------------------------------------------------------

    def members(self) -> list[ChallengerRecord]:
        """Live learners: the champion (when it holds a slot) plus B."""
        if self.reserve_champion or self.static:
            return [self.champion, *self.live]
        return list(self.live)

    def select_incumbent(self) -> ChallengerRecord:
        members = self.members()
        champ = self.champion

        def key(rec):
            return (self.upper_bound(rec), rec is not champ, rec.id)

        return min(members, key=key)

    def _schedule(self) -> None:
        if self.static:
            return
        if self.reserve_champion:
            self.live = self.scheduler.schedule(self.budget, self.live, self.pool)
        else:
            candidates = dict(self.pool)
            candidates[self.champion.id] = self.champion
            self.live = self.scheduler.schedule(self.budget + 1, self.live, candidates)

    def predict(self, example: Example) -> float:
        """Schedule and predict; the example's label is not read."""
        if self.t == 0 and not self._n_min_fixed:
            self.scheduler.params.n_min = max(1, 5 * example.n_features())
        view = self.featurizer.view(example)
        version = self.tracker.version
        self.tracker.observe_view(view)
        if self.tracker.version != version:
            self._epoch += 1
        self._schedule()
        incumbent = self.select_incumbent()
        members = self.members()
        preds, state = self.bank.predict([rec.model for rec in members], view)
        self.incumbent_id = incumbent.id
        prediction = preds[members.index(incumbent)]
        self._pending = (members, preds, state, prediction)
        return prediction

    def learn(self, label: float) -> StepRecord:
        if self._pending is None:
            raise RuntimeError("learn() called without a preceding predict()")
        members, preds, state, prediction = self._pending
        self._pending = None
        y = float(label)
        rng = self.range
        if y < rng.y_min or y > rng.y_max:
            rng.update(y)
            self._epoch += 1
        lo, hi = rng.y_min, rng.y_max
        for rec, p in zip(members, preds):
            clipped = lo if p < lo else (hi if p > hi else p)
            acc = rec.loss
            acc.sum_clipped_abs_error += abs(clipped - y)
            acc.count += 1
            rec.sq_err_sum += (p - y) * (p - y)
        self.bank.update([rec.model for rec in members], state, y, preds)

        if not self.static:
            self._run_tests()

        self.t += 1
        clipped = lo if prediction < lo else (hi if prediction > hi else prediction)
        return StepRecord(
            self.t, self.incumbent_id, prediction, y, (prediction - y) ** 2, abs(clipped - y),
            self.champion.id, len(self.pool), len(self.members()),
        )

    def step(self, example: Example) -> tuple[float, StepRecord]:
        prediction = self.predict(example)
        return prediction, self.learn(example.label)

    def run(self, examples: Iterable[Example]) -> list[StepRecord]:
        return [self.step(ex)[1] for ex in examples]

    def _run_tests(self) -> None:
        champ = self.champion
        c_lower, c_upper, c_eps = self.interval(champ)
        worse, better = [], []
        # only live challengers have data; the rest hold vacuous bounds
        if champ.loss.count > 0:
            for rec in self.live:
                if rec is champ or rec.loss.count == 0:
                    continue
                lower, upper, _ = self.interval(rec)
                if bounds.worse_than((lower, upper), (c_lower, c_upper)):
                    worse.append(rec)
                elif bounds.better_than((lower, upper), (c_lower, c_upper), c_eps):
                    better.append((upper, rec.id, rec))
        if self.bound_log is not None:
            snapshot = []
            for cid in sorted(self.pool):
                lower, upper, _ = self.interval(self.pool[cid])
                snapshot.append((cid, lower, upper))
            self.bound_log.append(BoundSnapshot(self.t + 1, champ.id, (c_lower, c_upper, c_eps), snapshot))

        if worse:
            self._epoch += 1
        for rec in worse:
            rec.eliminated = True
            del self.pool[rec.id]
            if rec.live:
                self.live = [r for r in self.live if r is not rec]
                self.scheduler._evict(rec)
            self.eliminations.append((self.t + 1, rec.id))

        if better:
            _, _, new = min(better, key=lambda item: (item[0], item[1]))
            self._promote(new)

    def _promote(self, new: ChallengerRecord) -> None:
        old = self.champion
        self._epoch += 1
        del self.pool[new.id]
        if self.reserve_champion:
            self.live = [r for r in self.live if r is not new]
            if old.lease is None:
                old.set_lease(self.n_min)
            self.live.append(old)
            self.live.sort(key=lambda r: r.id)
        self.pool[old.id] = old
        self.champion = new
        self.promotions.append((self.t + 1, old.id, new.id))
        logger.debug("t=%d promoted %s over %s", self.t + 1, new.id, old.id)
        for cfg in oracle(new.config, self.task, self.oracle_params):
            if cfg.id not in self.seen_ids:
                self._add_candidate(cfg)
