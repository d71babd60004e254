"""Challenger generation around a champion configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from chacha.learner import Config, all_pairs


class TuningTask(enum.Enum):
    NI = "ni"
    NI_LR = "ni+lr"

    @classmethod
    def parse(cls, text: str) -> "TuningTask":
        key = text.strip().lower().replace("_", "+")
        for task in cls:
            if task.value == key:
                return task
        raise ValueError(f"unknown tuning task {text!r}")


@dataclass
class OracleParams:
    lr_factors: list[float] = field(default_factory=lambda: [0.5, 2.0])
    lr_min: float = 2.0 ** -10
    lr_max: float = 8.0

    def __post_init__(self):
        if not self.lr_min < self.lr_max:
            raise ValueError("lr_min must be below lr_max")
        if any(f <= 0 or f == 1 for f in self.lr_factors):
            raise ValueError("learning-rate factors must be positive and != 1")


def interaction_neighbors(champion: Config) -> list[Config]:
    """Every config with exactly one more pair of base namespaces crossed."""
    return [
        champion.with_interaction(u, v)
        for u, v in all_pairs(champion.base_namespaces)
        if (u, v) not in champion.interactions
    ]


def lr_neighbors(champion: Config, params: OracleParams | None = None) -> list[Config]:
    params = params or OracleParams()
    out: dict[str, Config] = {}
    for f in params.lr_factors:
        lr = min(max(f * champion.learning_rate, params.lr_min), params.lr_max)
        if lr == champion.learning_rate:
            continue
        cfg = champion.with_learning_rate(lr)
        out.setdefault(cfg.id, cfg)
    return list(out.values())


def oracle(champion: Config, task: TuningTask = TuningTask.NI, params: OracleParams | None = None) -> list[Config]:
    """Candidate set for ``champion``, deduplicated and sorted by id."""
    found = {c.id: c for c in interaction_neighbors(champion)}
    if task is TuningTask.NI_LR:
        rates = lr_neighbors(champion, params)
        for c in rates:
            found.setdefault(c.id, c)
        for c in list(interaction_neighbors(champion)):
            for r in rates:
                moved = c.with_learning_rate(r.learning_rate)
                found.setdefault(moved.id, moved)
    found.pop(champion.id, None)
    return [found[k] for k in sorted(found)]
