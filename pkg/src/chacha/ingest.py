"""Reading labeled examples from VW-style text and CSV, and target preparation.

Features are grouped into namespaces. A VW line looks like::

    2.5 |a x:1 y:0.5 |b z

where ``z`` carries the implicit value 1.0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from chacha.errors import MalformedLine, MissingTarget, NonNumericCell

Feature = tuple[str, float]


@dataclass
class Example:
    """One labeled instance; ``namespaces`` maps namespace id to its features.

    A dict keeps insertion order, so namespace order is preserved and ids are
    distinct by construction.
    """

    label: float
    namespaces: dict[str, list[Feature]] = field(default_factory=dict)

    def n_features(self) -> int:
        return sum(len(f) for f in self.namespaces.values())


@dataclass
class IngestPolicy:
    max_namespaces: int = 10
    log_transform_threshold: float = 100.0
    target_shift: float = 0.0

    def __post_init__(self):
        if self.max_namespaces < 1:
            raise ValueError("max_namespaces must be >= 1")


def _to_float(token: str, line: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedLine(f"unparsable number {token!r} in {line!r}") from None
    if not math.isfinite(value):
        raise MalformedLine(f"non-finite value {token!r} in {line!r}")
    return value


def parse_vw_line(line: str) -> Example:
    """Parse one line of VW-style text.

    The label is the first token before the first ``|``; any further tokens
    there (importance, tag) are ignored. Each ``|ns`` opens a namespace.
    """
    text = line.strip()
    if not text:
        raise MalformedLine("empty line")
    head, *blocks = text.split("|")
    head_tokens = head.split()
    if not head_tokens:
        raise MalformedLine(f"missing label in {line!r}")
    label = _to_float(head_tokens[0], line)

    namespaces: dict[str, list[Feature]] = {}
    for block in blocks:
        if not block or block[0].isspace():
            raise MalformedLine(f"empty namespace key in {line!r}")
        tokens = block.split()
        ns = tokens[0]
        feats = namespaces.setdefault(ns, [])
        for tok in tokens[1:]:
            name, sep, raw = tok.rpartition(":")
            if sep and name:
                feats.append((name, _to_float(raw, line)))
            else:
                feats.append((tok, 1.0))
    return Example(label, namespaces)


def format_vw_line(example: Example) -> str:
    parts = [repr(float(example.label))]
    for ns, feats in example.namespaces.items():
        body = " ".join(f"{name}:{value!r}" for name, value in feats)
        parts.append(f"|{ns} {body}" if body else f"|{ns}")
    return " ".join(parts)


def read_vw(path, max_examples: int | None = None) -> list[Example]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            out.append(parse_vw_line(line))
            if max_examples is not None and len(out) >= max_examples:
                break
    return out


def group_sizes(n_columns: int, max_namespaces: int) -> list[int]:
    """Near-equal contiguous group sizes, larger groups first."""
    n_groups = min(n_columns, max_namespaces)
    if n_groups == 0:
        return []
    base, extra = divmod(n_columns, n_groups)
    return [base + 1 if i < extra else base for i in range(n_groups)]


def _cell_feature(column: str, cell: str | None) -> Feature:
    if cell is None or not cell.strip():
        raise NonNumericCell(f"empty cell in column {column!r}")
    try:
        value = float(cell)
    except ValueError:
        # categorical: one-hot inside the column's namespace
        return (f"{column}={cell.strip()}", 1.0)
    if not math.isfinite(value):
        raise NonNumericCell(f"non-finite cell {cell!r} in column {column!r}")
    return (column, value)


def csv_to_examples(
    rows: Iterable[dict[str, str]],
    target_column: str,
    policy: IngestPolicy | None = None,
    columns: Sequence[str] | None = None,
) -> Iterator[Example]:
    """Turn CSV rows (as produced by :class:`csv.DictReader`) into examples.

    Non-target columns are split, in header order, into up to
    ``policy.max_namespaces`` contiguous groups named ``ns0``, ``ns1``, ...
    """
    policy = policy or IngestPolicy()
    rows = iter(rows)
    first = None
    if columns is None:
        first = next(rows, None)
        if first is None:
            return
        columns = list(first.keys())
    if target_column not in columns:
        raise MissingTarget(target_column)

    features = [c for c in columns if c != target_column]
    layout: list[tuple[str, list[str]]] = []
    start = 0
    for i, size in enumerate(group_sizes(len(features), policy.max_namespaces)):
        layout.append((f"ns{i}", features[start:start + size]))
        start += size

    def convert(row):
        raw = row.get(target_column)
        try:
            label = float(raw)
        except (TypeError, ValueError):
            raise NonNumericCell(f"target cell {raw!r} is not numeric") from None
        if not math.isfinite(label):
            raise NonNumericCell(f"target cell {raw!r} is not finite")
        ns = {name: [_cell_feature(c, row.get(c)) for c in cols] for name, cols in layout}
        return Example(label, ns)

    if first is not None:
        yield convert(first)
    for row in rows:
        yield convert(row)


def read_csv(path, target_column: str, policy: IngestPolicy | None = None,
             max_examples: int | None = None) -> list[Example]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        out = []
        for ex in csv_to_examples(reader, target_column, policy, columns=reader.fieldnames):
            out.append(ex)
            if max_examples is not None and len(out) >= max_examples:
                break
        return out


def transform_target(raw_labels: Sequence[float], policy: IngestPolicy | None = None) -> list[float]:
    """Log-transform the whole label column when its maximum exceeds the threshold.

    Columns containing non-positive labels are first shifted so the minimum is
    exactly 1. The chosen shift is stored on ``policy.target_shift``.
    """
    policy = policy or IngestPolicy()
    labels = [float(y) for y in raw_labels]
    if not labels or max(labels) <= policy.log_transform_threshold:
        policy.target_shift = 0.0
        return labels
    low = min(labels)
    shift = 1.0 - low if low <= 0 else 0.0
    policy.target_shift = shift
    return [math.log(y + shift) for y in labels]


def apply_target_transform(examples: list[Example], policy: IngestPolicy | None = None) -> list[Example]:
    labels = transform_target([e.label for e in examples], policy)
    return [Example(y, e.namespaces) for y, e in zip(labels, examples)]
