"""Progressive-validation loss tracking and confidence-bound tests.

The empirical loss is the clipped absolute error: predictions are clipped
into the running label range before taking ``|pred - label|``, so every
per-step loss is at most ``y_max - y_min``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

INF = math.inf


@dataclass
class LossAccumulator:
    sum_clipped_abs_error: float = 0.0
    count: int = 0

    @property
    def mean(self) -> float:
        if self.count == 0:
            raise ValueError("mean of an empty accumulator")
        return self.sum_clipped_abs_error / self.count

    def reset(self) -> None:
        self.sum_clipped_abs_error = 0.0
        self.count = 0


@dataclass
class LabelRange:
    y_min: float = INF
    y_max: float = -INF

    @property
    def initialized(self) -> bool:
        return self.y_min <= self.y_max

    @property
    def width(self) -> float:
        return self.y_max - self.y_min if self.initialized else 0.0

    def update(self, y: float) -> None:
        if y < self.y_min:
            self.y_min = y
        if y > self.y_max:
            self.y_max = y

    def clip(self, prediction: float) -> float:
        return min(max(self.y_min, prediction), self.y_max)


@dataclass
class BoundParams:
    delta: float = 0.1
    loss_scale_factor: float = 0.05

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.loss_scale_factor <= 0:
            raise ValueError("loss_scale_factor must be positive")


def clipped_abs_error(prediction: float, label: float, range_: LabelRange) -> float:
    return abs(range_.clip(prediction) - label)


def record_loss(acc: LossAccumulator, prediction: float, label: float, range_: LabelRange) -> LossAccumulator:
    if not range_.initialized:
        raise ValueError("label range must include the current label before recording")
    acc.sum_clipped_abs_error += abs(range_.clip(prediction) - label)
    acc.count += 1
    return acc


def epsilon(acc: LossAccumulator, d: int, pool_size: int, params: BoundParams, range_: LabelRange) -> float:
    """Confidence radius ``a * sqrt(d * ln(n * |S| / delta) / n)``, ``a`` scaled by the label range."""
    n = acc.count
    if n == 0:
        return INF
    a = params.loss_scale_factor * range_.width
    if a == 0.0:
        return 0.0
    return a * math.sqrt(d * math.log(n * max(pool_size, 1) / params.delta) / n)


def upper_bound(acc: LossAccumulator, d: int, pool_size: int, params: BoundParams, range_: LabelRange) -> float:
    if acc.count == 0:
        return INF
    return acc.mean + epsilon(acc, d, pool_size, params, range_)


def lower_bound(acc: LossAccumulator, d: int, pool_size: int, params: BoundParams, range_: LabelRange) -> float:
    if acc.count == 0:
        return -INF
    return acc.mean - epsilon(acc, d, pool_size, params, range_)


def interval(acc: LossAccumulator, d: int, pool_size: int, params: BoundParams,
             range_: LabelRange) -> tuple[float, float, float]:
    """``(lower, upper, eps)`` in one pass."""
    if acc.count == 0:
        return -INF, INF, INF
    eps = epsilon(acc, d, pool_size, params, range_)
    mean = acc.mean
    return mean - eps, mean + eps, eps


def better_than(challenger: tuple[float, float], champion: tuple[float, float], champion_eps: float) -> bool:
    """Promotion test: challenger's upper bound clears the champion's lower bound by a margin of eps."""
    c_lower, c_upper = challenger
    C_lower, _ = champion
    if math.isinf(c_upper) or math.isinf(C_lower) or math.isinf(champion_eps):
        return False
    return c_upper < C_lower - champion_eps


def worse_than(challenger: tuple[float, float], champion: tuple[float, float]) -> bool:
    c_lower, _ = challenger
    _, C_upper = champion
    if math.isinf(c_lower) or math.isinf(C_upper):
        return False
    return c_lower > C_upper
