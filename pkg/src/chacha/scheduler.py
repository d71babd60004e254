"""Live-challenger scheduling with doubling resource leases.

Every challenger gets a lease of ``n_min`` samples on first admission. When
a live challenger has consumed its lease, the lease doubles and the
challenger may be swapped out if its loss upper bound is in the worse half
of the live set. Free slots go to never-leased challengers first, then to
the one with the smallest lease. Models of swapped-out challengers are
dropped; a readmitted challenger trains from scratch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from chacha.bounds import LossAccumulator
from chacha.errors import EmptyCandidateSet, EmptySet
from chacha.learner import Config, LearnerModel


@dataclass(eq=False)
class ChallengerRecord:
    config: Config
    id: str = field(init=False)
    model: LearnerModel | None = None
    loss: LossAccumulator = field(default_factory=LossAccumulator)
    lease: int | None = None
    live: bool = False
    eliminated: bool = False
    # raw squared error over the current live stint, for reporting only
    sq_err_sum: float = 0.0
    lease_history: list[int] = field(default_factory=list)
    admissions: int = 0
    # (epoch, count, loss sum, interval) memo owned by the engine
    cached_interval: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.id = self.config.id

    @property
    def consumed(self) -> int:
        return self.loss.count

    def set_lease(self, value: int) -> None:
        self.lease = value
        self.lease_history.append(value)

    def __repr__(self):
        state = "live" if self.live else ("eliminated" if self.eliminated else "idle")
        return f"<{self.id} {state} n={self.consumed} lease={self.lease}>"


@dataclass
class SchedulerParams:
    n_min: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")


@dataclass
class CallStats:
    """What one ``schedule`` call did; kept for inspection and tests."""

    expiring: list[str] = field(default_factory=list)
    evicted: list[str] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)
    admitted: list[str] = field(default_factory=list)


def median_upper(values: Iterable[float]) -> float:
    """Median with the lower middle value for even sizes."""
    ordered = sorted(values)
    if not ordered:
        raise EmptySet("median of an empty live set")
    return ordered[(len(ordered) - 1) // 2]


class Scheduler:
    """Decides which challengers hold the ``b - 1`` non-champion slots.

    ``upper_bound`` maps a record to its current loss upper bound and
    ``admit`` installs a fresh model on a record entering the live set.
    With ``aggressive=True`` every lease-expiring challenger is swapped out
    regardless of its loss.
    """

    def __init__(
        self,
        params: SchedulerParams,
        upper_bound: Callable[[ChallengerRecord], float],
        admit: Callable[[ChallengerRecord], None] | None = None,
        release: Callable[[ChallengerRecord], None] | None = None,
        rng: np.random.Generator | None = None,
        aggressive: bool = False,
    ):
        self.params = params
        self.upper_bound = upper_bound
        self.admit = admit
        self.release = release
        self.rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
        self.aggressive = aggressive
        self.last_call = CallStats()

    def choose(self, candidates: Iterable[ChallengerRecord]) -> ChallengerRecord:
        pool = sorted(candidates, key=lambda r: r.id)
        if not pool:
            raise EmptyCandidateSet("no candidate to admit")
        pending = [r for r in pool if r.lease is None]
        if pending:
            rec = pending[int(self.rng.integers(len(pending)))]
            rec.set_lease(self.params.n_min)
            return rec
        return min(pool, key=lambda r: r.lease)  # stable: smallest id among ties

    def _drop_model(self, rec: ChallengerRecord) -> None:
        if rec.model is not None and self.release is not None:
            self.release(rec)
        rec.model = None

    def _evict(self, rec: ChallengerRecord) -> None:
        # no persistence: the model and everything it has seen are gone
        rec.live = False
        self._drop_model(rec)
        rec.loss.reset()
        rec.sq_err_sum = 0.0

    def _activate(self, rec: ChallengerRecord) -> None:
        rec.live = True
        rec.loss.reset()
        rec.sq_err_sum = 0.0
        rec.admissions += 1
        self._drop_model(rec)
        if self.admit is not None:
            self.admit(rec)

    def schedule(
        self,
        b: int,
        live: Iterable[ChallengerRecord],
        candidates: Mapping[str, ChallengerRecord],
    ) -> list[ChallengerRecord]:
        live = list(live)
        if len(live) >= b - 1 and all(
            not r.eliminated and r.loss.count < r.lease and candidates.get(r.id) is r for r in live
        ):
            # nothing expired, dropped or free: B is unchanged
            self.last_call = CallStats()
            return live
        stats = self.last_call = CallStats()
        n_candidates = len(candidates)
        crowded = n_candidates > b

        kept = []
        for rec in live:
            if rec.eliminated or candidates.get(rec.id) is not rec:
                self._evict(rec)
                stats.dropped.append(rec.id)
            else:
                kept.append(rec)
        kept.sort(key=lambda r: r.id)

        expiring = [r for r in kept if r.lease is not None and r.consumed >= r.lease]
        if expiring:
            uppers = {r.id: self.upper_bound(r) for r in kept}
            for rec in expiring:
                rec.set_lease(2 * rec.lease)
            stats.expiring = [r.id for r in expiring]
            if crowded:
                if self.aggressive:
                    victims = expiring
                else:
                    med = median_upper(uppers.values())
                    above = [r for r in expiring if uppers[r.id] > med]
                    # worst first; at most half (ceiling) of the expiring set
                    above.sort(key=lambda r: (-uppers[r.id], r.id))
                    victims = above[: math.ceil(len(expiring) / 2)]
                gone = {r.id for r in victims}
                for rec in victims:
                    self._evict(rec)
                stats.evicted = sorted(gone)
                kept = [r for r in kept if r.id not in gone]

        if len(kept) < b - 1:
            idle = {
                r.id: r for r in candidates.values() if not r.live and not r.eliminated
            }
            while len(kept) < b - 1 and idle:
                rec = self.choose(idle.values())
                del idle[rec.id]
                self._activate(rec)
                kept.append(rec)
                stats.admitted.append(rec.id)
        kept.sort(key=lambda r: r.id)
        return kept
