"""Hashed linear regressor with namespace crossing, trained by online GD.

Weights live in a dense array of ``2**bit_precision`` floats. Index 0 is
reserved for the bias feature; other features are hashed with 64-bit
BLAKE2b over the joined ``(namespace, feature)`` parts and masked.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from chacha.errors import NumericOverflow
from chacha.ingest import Example

BIAS_INDEX = 0
DEFAULT_BITS = 18
DEFAULT_LR = 0.5
CLIP_BOUND = 1e3
_SEP = "\x1f"

Pair = tuple[str, str]
SparseVector = list[tuple[int, float]]


def _pair(u: str, v: str) -> Pair:
    if u == v:
        raise ValueError(f"self-interaction {u!r} is not representable")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Config:
    """Namespace interactions plus learning rate.

    Equality and hashing go through ``id``, which ignores ``base_namespaces``
    (those are fixed for a run).
    """

    base_namespaces: frozenset[str]
    interactions: frozenset[Pair] = frozenset()
    learning_rate: float = DEFAULT_LR
    id: str = field(init=False, compare=True)
    # the part of ``id`` that determines features (everything but the rate)
    feature_key: str = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        base = frozenset(self.base_namespaces)
        pairs = frozenset(_pair(u, v) for u, v in self.interactions)
        for u, v in pairs:
            if u not in base or v not in base:
                raise ValueError(f"interaction {u}*{v} uses unknown namespace")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be positive and finite")
        object.__setattr__(self, "base_namespaces", base)
        object.__setattr__(self, "interactions", pairs)
        terms = "+".join(f"{u}*{v}" for u, v in sorted(pairs)) or "-"
        object.__setattr__(self, "id", f"{terms}|lr={self.learning_rate!r}")
        object.__setattr__(self, "feature_key", terms)

    def __eq__(self, other):
        return isinstance(other, Config) and self.id == other.id

    def __hash__(self):
        return hash(self.id)

    def with_interaction(self, u: str, v: str) -> "Config":
        return Config(self.base_namespaces, self.interactions | {_pair(u, v)}, self.learning_rate)

    def with_learning_rate(self, lr: float) -> "Config":
        return Config(self.base_namespaces, self.interactions, lr)

    def sorted_interactions(self) -> list[Pair]:
        return sorted(self.interactions)


def hash_index(parts: Sequence[str], bit_precision: int = DEFAULT_BITS) -> int:
    if not parts:
        raise ValueError("hash_index needs at least one part")
    digest = hashlib.blake2b(_SEP.join(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & ((1 << bit_precision) - 1)


def cross_index(ns_u: str, name_u: str, ns_v: str, name_v: str, bit_precision: int = DEFAULT_BITS) -> int:
    first, second = sorted([(ns_u, name_u), (ns_v, name_v)])
    return hash_index([*first, *second], bit_precision)


def featurize(example: Example, config: Config, bit_precision: int = DEFAULT_BITS) -> SparseVector:
    """Bias, base features of the config's namespaces, then pairwise crosses."""
    out: SparseVector = [(BIAS_INDEX, 1.0)]
    ns = example.namespaces
    for name, feats in ns.items():
        if name in config.base_namespaces:
            out.extend((hash_index([name, f], bit_precision), v) for f, v in feats)
    for u, v in config.sorted_interactions():
        for fu, xu in ns.get(u, ()):
            for fv, xv in ns.get(v, ()):
                out.append((cross_index(u, fu, v, fv, bit_precision), xu * xv))
    return out


class Featurizer:
    """Memoizing featurizer shared by all learners of one run.

    A namespace's ordered tuple of feature names is a *block*; hashed
    indices are cached per block and per pair of blocks, so a stream whose
    feature names repeat pays for hashing only once. ``view`` returns a
    per-example helper that builds each interaction block once, however
    many configs use it.
    """

    max_cached_blocks = 1 << 16

    def __init__(self, bit_precision: int = DEFAULT_BITS):
        self.bit_precision = bit_precision
        self._blocks: dict[tuple[str, tuple[str, ...]], tuple[int, np.ndarray]] = {}
        self._cross: dict[tuple[int, int], np.ndarray] = {}
        self._concat: dict[tuple, np.ndarray] = {}
        self._next_id = 0

    def block(self, ns: str, names: tuple[str, ...]) -> tuple[int, np.ndarray]:
        key = (ns, names)
        hit = self._blocks.get(key)
        if hit is None:
            if len(self._blocks) >= self.max_cached_blocks:
                self._blocks.clear()
                self._cross.clear()
                self._concat.clear()
            idx = np.fromiter((hash_index([ns, f], self.bit_precision) for f in names),
                              dtype=np.intp, count=len(names))
            hit = self._blocks[key] = (self._next_id, idx)
            self._next_id += 1
        return hit

    def cross(self, u: str, bu: int, names_u, v: str, bv: int, names_v) -> np.ndarray:
        key = (bu, bv)
        idx = self._cross.get(key)
        if idx is None:
            bits = self.bit_precision
            idx = np.fromiter((cross_index(u, a, v, b, bits) for a in names_u for b in names_v),
                              dtype=np.intp, count=len(names_u) * len(names_v))
            idx = self._cross[key] = idx
        return idx

    def concat(self, key: tuple, parts) -> np.ndarray:
        idx = self._concat.get(key)
        if idx is None:
            if len(self._concat) >= self.max_cached_blocks:
                self._concat.clear()
            idx = self._concat[key] = np.concatenate(parts)
        return idx

    def view(self, example: Example) -> "ExampleView":
        return ExampleView(self, example)


_BIAS_IDX = np.zeros(1, dtype=np.intp)
_BIAS_VAL = np.ones(1)


class ExampleView:
    """Feature vectors of one example under any number of configs."""

    def __init__(self, featurizer: Featurizer, example: Example):
        self.featurizer = featurizer
        self._pairs: dict[Pair, tuple] = {}
        self._vectors: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._base: dict[frozenset, tuple] = {}
        nss = example.namespaces
        # ns -> (block id, names, hashed indices, start, stop) into self.values
        self._ns: dict[str, tuple[int, tuple[str, ...], np.ndarray, int, int]] = {}
        blocks = featurizer._blocks
        flat: list[float] = []
        sig = []
        start = 0
        for ns, feats in nss.items():
            if feats:
                names, vals = zip(*feats)
            else:
                names, vals = (), ()
            flat.extend(vals)
            hit = blocks.get((ns, names))
            bid, idx = hit if hit is not None else featurizer.block(ns, names)
            stop = start + len(names)
            self._ns[ns] = (bid, names, idx, start, stop)
            sig.append(bid)
            start = stop
        self.values = np.array(flat, dtype=float)
        self.signature = tuple(sig)

    def _base_parts(self, base: frozenset):
        """Key, index array and value array of bias plus base features."""
        hit = self._base.get(base)
        if hit is None:
            key, idx_parts, val_parts = [], [_BIAS_IDX], [_BIAS_VAL]
            for ns, (bid, _, idx, start, stop) in self._ns.items():
                if ns in base:
                    key.append(bid)
                    idx_parts.append(idx)
                    val_parts.append(self.values[start:stop])
            key = tuple(key)
            hit = self._base[base] = (
                key, self.featurizer.concat(key, idx_parts), np.concatenate(val_parts))
        return hit

    def _pair_block(self, u: str, v: str):
        block = self._pairs.get((u, v))
        if block is None:
            nu, nv = self._ns.get(u), self._ns.get(v)
            if nu is None or nv is None:
                block = (-1, np.zeros(0, dtype=np.intp), np.zeros(0))
            else:
                idx = self.featurizer.cross(u, nu[0], nu[1], v, nv[0], nv[1])
                vals = np.multiply.outer(self.values[nu[3]:nu[4]], self.values[nv[3]:nv[4]]).ravel()
                block = ((nu[0], nv[0]), idx, vals)
            self._pairs[(u, v)] = block
        return block

    def vector(self, config: Config) -> tuple[np.ndarray, np.ndarray]:
        """Index and value arrays; same entries and order as :func:`featurize`."""
        # the learning rate does not affect features
        fkey = config.feature_key
        cached = self._vectors.get(fkey)
        if cached is not None:
            return cached
        key, base_idx, base_vals = self._base_parts(config.base_namespaces)
        if config.interactions:
            key = [key]
            idx_parts, val_parts = [base_idx], [base_vals]
            for u, v in config.sorted_interactions():
                bid, idx, vals = self._pair_block(u, v)
                key.append(bid)
                idx_parts.append(idx)
                val_parts.append(vals)
            cached = (self.featurizer.concat(tuple(key), idx_parts), np.concatenate(val_parts))
        else:
            cached = (base_idx, base_vals)
        self._vectors[fkey] = cached
        return cached


def sequential_dot(weights: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> float:
    """``sum(w[i] * v)`` accumulated strictly left to right.

    bincount adds in input order, so the result does not depend on memory
    layout and matches the batched path in :class:`LearnerBank` bit for bit.
    """
    return float(np.bincount(np.zeros(len(idx), dtype=np.intp), weights=weights[idx] * vals, minlength=1)[0])


@dataclass
class LearnerModel:
    config: Config
    bit_precision: int = DEFAULT_BITS
    clip_bound: float = CLIP_BOUND
    update_count: int = 0
    weights: np.ndarray = field(default=None, repr=False)
    # row in the owning LearnerBank, if any
    slot: int | None = None

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.zeros(1 << self.bit_precision)

    def predict_sparse(self, idx: np.ndarray, vals: np.ndarray) -> float:
        return sequential_dot(self.weights, idx, vals)

    def step_size(self, y: float, pred: float) -> float:
        """Clipped ``eta_t * (pred - y)``; advances the decay schedule."""
        if not math.isfinite(pred):
            # weights touched by this example went non-finite on an earlier step
            raise NumericOverflow(f"non-finite prediction in {self.config.id}")
        eta = self.config.learning_rate / math.sqrt(self.update_count + 1)
        g = eta * (pred - y)
        if g > self.clip_bound:
            g = self.clip_bound
        elif g < -self.clip_bound:
            g = -self.clip_bound
        self.update_count += 1
        return g

    def update_sparse(self, idx: np.ndarray, vals: np.ndarray, y: float, pred: float) -> None:
        g = self.step_size(y, pred)
        # subtract.at accumulates correctly when hashed indices collide
        np.subtract.at(self.weights, idx, g * vals)


class LearnerBank:
    """Weight rows for up to ``capacity`` learners, predicted and updated together.

    Each model gets a row of one matrix. Per example, the feature vectors of
    all members are laid out back to back so that prediction is one gather
    plus one bincount, and the update one scatter, whatever the number of
    members. Layouts are cached by (slots, configs, feature blocks).
    """

    max_plans = 4096

    def __init__(self, capacity: int, bit_precision: int = DEFAULT_BITS):
        self.bit_precision = bit_precision
        self.width = 1 << bit_precision
        self.weights = np.zeros((capacity, self.width))
        self._flat = self.weights.reshape(-1)
        self._free = list(range(capacity - 1, -1, -1))
        self._plans: dict[tuple, tuple] = {}

    @property
    def capacity(self) -> int:
        return self.weights.shape[0]

    def new_model(self, config: Config) -> LearnerModel:
        if not self._free:
            raise RuntimeError("learner bank is full")
        slot = self._free.pop()
        row = self.weights[slot]
        row.fill(0.0)
        return LearnerModel(config, self.bit_precision, weights=row, slot=slot)

    def release(self, model: LearnerModel) -> None:
        if model.slot is not None:
            self._free.append(model.slot)
            model.slot = None

    def _plan(self, models: list[LearnerModel], view: ExampleView) -> tuple:
        key = (view.signature, tuple((m.slot, m.config.feature_key) for m in models))
        plan = self._plans.get(key)
        if plan is not None:
            return plan
        # value layout: [bias, all example values, pair blocks in first-use order]
        n_vals = 1 + len(view.values)
        pair_at: dict[Pair, int] = {}
        pairs: list[tuple[int, int, int, int]] = []
        idx_parts, pos_parts, lengths = [], [], []
        for m in models:
            cfg = m.config
            pos = [np.zeros(1, dtype=np.intp)]
            idx = [_BIAS_IDX]
            for ns, (_, _, bidx, start, stop) in view._ns.items():
                if ns in cfg.base_namespaces:
                    idx.append(bidx)
                    pos.append(np.arange(start + 1, stop + 1, dtype=np.intp))
            for u, v in cfg.sorted_interactions():
                nu, nv = view._ns.get(u), view._ns.get(v)
                if nu is None or nv is None:
                    continue
                size = (nu[4] - nu[3]) * (nv[4] - nv[3])
                if (u, v) not in pair_at:
                    pair_at[(u, v)] = n_vals
                    pairs.append((nu[3], nu[4], nv[3], nv[4]))
                    n_vals += size
                idx.append(view.featurizer.cross(u, nu[0], nu[1], v, nv[0], nv[1]))
                pos.append(np.arange(pair_at[(u, v)], pair_at[(u, v)] + size, dtype=np.intp))
            flat = np.concatenate(idx) + m.slot * self.width
            idx_parts.append(flat)
            pos_parts.append(np.concatenate(pos))
            lengths.append(len(flat))
        seg = np.repeat(np.arange(len(models), dtype=np.intp), lengths)
        plan = (np.concatenate(idx_parts), np.concatenate(pos_parts), seg, tuple(pairs))
        if len(self._plans) >= self.max_plans:
            self._plans.clear()
        self._plans[key] = plan
        return plan

    def predict(self, models: list[LearnerModel], view: ExampleView) -> tuple[list[float], tuple]:
        """Predictions of every model on one example, plus state for :meth:`update`."""
        flat_idx, pos, seg, pairs = self._plan(models, view)
        values = view.values
        if pairs:
            parts = [_BIAS_VAL, values]
            for su, eu, sv, ev in pairs:
                parts.append(np.multiply.outer(values[su:eu], values[sv:ev]).ravel())
            ext = np.concatenate(parts)
        else:
            ext = np.concatenate((_BIAS_VAL, values))
        vals = ext[pos]
        preds = np.bincount(seg, weights=self._flat[flat_idx] * vals, minlength=len(models))
        return preds.tolist(), (flat_idx, vals, seg)

    def update(self, models: list[LearnerModel], state: tuple, y: float, preds: list[float]) -> None:
        flat_idx, vals, seg = state
        steps = np.array([m.step_size(y, p) for m, p in zip(models, preds)])
        np.subtract.at(self._flat, flat_idx, steps[seg] * vals)


def _arrays(x: SparseVector) -> tuple[np.ndarray, np.ndarray]:
    idx = np.fromiter((i for i, _ in x), dtype=np.intp, count=len(x))
    vals = np.fromiter((v for _, v in x), dtype=float, count=len(x))
    return idx, vals


def predict(model: LearnerModel, x: SparseVector) -> float:
    return model.predict_sparse(*_arrays(x))


def update(model: LearnerModel, x: SparseVector, y: float) -> LearnerModel:
    """One squared-loss GD step, ``lr / sqrt(n + 1)`` decay. Mutates and returns ``model``."""
    if not math.isfinite(y):
        raise ValueError("label must be finite")
    idx, vals = _arrays(x)
    model.update_sparse(idx, vals, y, model.predict_sparse(idx, vals))
    if not np.isfinite(model.weights[idx]).all():
        raise NumericOverflow(f"non-finite weights in {model.config.id} after {model.update_count} updates")
    return model


class DimensionTracker:
    """Distinct feature names seen so far in each namespace."""

    def __init__(self):
        self._seen: dict[str, set[str]] = {}
        self._seen_blocks: set[int] = set()
        self.counts: dict[str, int] = {}
        self.version = 0

    def observe_view(self, view: ExampleView) -> None:
        """Like :meth:`observe`, skipping namespace blocks already counted."""
        blocks = self._seen_blocks
        for ns, (bid, names, *_) in view._ns.items():
            if bid not in blocks:
                blocks.add(bid)
                self._add(ns, names)

    def _add(self, ns: str, names) -> None:
        seen = self._seen.get(ns)
        if seen is None:
            seen = self._seen[ns] = set()
        n = len(seen)
        seen.update(names)
        if len(seen) != n:
            self.counts[ns] = len(seen)
            self.version += 1

    def observe(self, example: Example) -> None:
        for ns, feats in example.namespaces.items():
            seen = self._seen.get(ns)
            if seen is None:
                seen = self._seen[ns] = set()
            n = len(seen)
            seen.update(f for f, _ in feats)
            if len(seen) != n:
                self.counts[ns] = len(seen)
                self.version += 1


def dimension(config: Config, tracker: DimensionTracker | dict[str, int],
              bit_precision: int = DEFAULT_BITS) -> int:
    counts = tracker.counts if isinstance(tracker, DimensionTracker) else tracker
    d = 1 + sum(counts.get(ns, 0) for ns in config.base_namespaces)
    d += sum(counts.get(u, 0) * counts.get(v, 0) for u, v in config.interactions)
    return min(d, 1 << bit_precision)


def all_pairs(namespaces: Iterable[str]) -> list[Pair]:
    return list(combinations(sorted(namespaces), 2))
