"""Audit data model: prediction records, CSV I/O, and the fit/report split.

A prediction file holds one row per example: its membership split, true
label, and the model's softmax vector. Nonmembers are shuffled with a
seeded PCG64 generator and cut into a selection half (used to fit
thresholds and polytopes) and an evaluation half (used for the reported
advantage).
"""

from __future__ import annotations

import dataclasses

import numpy as np

SPLIT_MEMBER = "member"
SPLIT_NONMEMBER = "nonmember"

# Accept float32-ish exports; renormalize exactly after load.
PROB_SUM_TOLERANCE = 1e-4


class PredictionFormatError(ValueError):
    """Malformed prediction file; message carries the 1-based line number."""


@dataclasses.dataclass(frozen=True)
class PredictionRecord:
    """One example's softmax vector, true label, and membership split."""

    probs: np.ndarray
    label: int
    split: str

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        if self.split not in (SPLIT_MEMBER, SPLIT_NONMEMBER):
            raise ValueError(f"unknown split {self.split!r}")
        if not (0 <= self.label < probs.size):
            raise ValueError(f"label {self.label} out of range for C={probs.size}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("probabilities must be finite and nonnegative")

    @property
    def num_classes(self) -> int:
        return int(self.probs.size)

    @property
    def is_member(self) -> bool:
        return self.split == SPLIT_MEMBER


@dataclasses.dataclass(frozen=True)
class AuditDataset:
    """Members plus the two halves of the nonmember pool.

    Immutable after construction; safe to share across concurrent readers.
    The ``*_indices`` tuples give each record's 0-based row position in the
    record list the dataset was built from, so file-keyed scores (the mixed
    prediction format) can be joined back onto the split.
    """

    num_classes: int
    members: tuple[PredictionRecord, ...]
    selection: tuple[PredictionRecord, ...]
    evaluation: tuple[PredictionRecord, ...]
    split_seed: int
    member_indices: tuple[int, ...]
    selection_indices: tuple[int, ...]
    evaluation_indices: tuple[int, ...]


def _parse_header(header: str) -> int:
    cols = header.rstrip("\n").split(",")
    if len(cols) < 3 or cols[0] != "split" or cols[1] != "label":
        raise PredictionFormatError(
            "malformed header, line 1: expected 'split,label,p_0,...'"
        )
    expected = [f"p_{i}" for i in range(len(cols) - 2)]
    if cols[2:] != expected:
        raise PredictionFormatError(
            "malformed header, line 1: probability columns must be p_0..p_{C-1}"
        )
    return len(cols) - 2


def load_predictions(path) -> tuple[int, list[PredictionRecord]]:
    """Load and validate a prediction CSV.

    Returns ``(num_classes, records)``. Probabilities are renormalized to
    sum exactly to 1 (within 1e-12); rows whose sum is off by more than
    ``PROB_SUM_TOLERANCE`` are rejected. All errors carry 1-based line
    numbers.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        # Canonical files are LF; tolerate CRLF rather than failing on the
        # stray carriage return.
        lines = fh.read().replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise PredictionFormatError("malformed header, line 1: empty file")
    num_classes = _parse_header(lines[0])

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != num_classes + 2:
            raise PredictionFormatError(
                f"wrong column count ({len(cells)} != {num_classes + 2}), line {lineno}"
            )
        split = cells[0]
        if split not in (SPLIT_MEMBER, SPLIT_NONMEMBER):
            raise PredictionFormatError(f"unknown split {split!r}, line {lineno}")
        try:
            label = int(cells[1])
        except ValueError:
            raise PredictionFormatError(
                f"non-numeric label {cells[1]!r}, line {lineno}"
            ) from None
        if not (0 <= label < num_classes):
            raise PredictionFormatError(f"label {label} out of range, line {lineno}")
        try:
            probs = np.array([float(c) for c in cells[2:]], dtype=np.float64)
        except ValueError:
            raise PredictionFormatError(f"non-numeric cell, line {lineno}") from None
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise PredictionFormatError(
                f"probabilities must be finite and >= 0, line {lineno}"
            )
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_TOLERANCE:
            raise PredictionFormatError(
                f"probability-sum violation (sum={total!r}), line {lineno}"
            )
        # Renormalize, but leave already-canonical rows untouched so that
        # reloading a saved file is a bitwise no-op.
        if abs(total - 1.0) > 1e-13:
            probs = probs / total
        records.append(PredictionRecord(probs, label, split))
    return num_classes, records


def save_predictions(path, num_classes: int, records) -> None:
    """Write records in the canonical prediction CSV format (LF, no quoting)."""
    header = "split,label," + ",".join(f"p_{i}" for i in range(num_classes))
    out = [header]
    for rec in records:
        if rec.num_classes != num_classes:
            raise ValueError("record class count does not match header")
        probs = ",".join(repr(float(p)) for p in rec.probs)
        out.append(f"{rec.split},{rec.label},{probs}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def make_audit_dataset(records, split_seed: int) -> AuditDataset:
    """Split the nonmember pool into selection/evaluation halves.

    Nonmembers are shuffled by ``numpy.random.default_rng(split_seed)``
    (PCG64) and cut in two; the selection half gets the extra record when
    the pool is odd. Members keep their original order.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    num_classes = records[0].num_classes
    if any(r.num_classes != num_classes for r in records):
        raise ValueError("records disagree on the number of classes")

    member_idx = [i for i, r in enumerate(records) if r.is_member]
    nonmember_idx = [i for i, r in enumerate(records) if not r.is_member]
    if len(member_idx) < 1 or len(nonmember_idx) < 2:
        raise ValueError(
            "too few records: need at least 1 member and 2 nonmembers, got "
            f"{len(member_idx)} and {len(nonmember_idx)}"
        )

    rng = np.random.default_rng(split_seed)
    order = rng.permutation(len(nonmember_idx))
    shuffled = [nonmember_idx[i] for i in order]
    n_sel = (len(shuffled) + 1) // 2
    sel_idx = shuffled[:n_sel]
    eval_idx = shuffled[n_sel:]

    return AuditDataset(
        num_classes=num_classes,
        members=tuple(records[i] for i in member_idx),
        selection=tuple(records[i] for i in sel_idx),
        evaluation=tuple(records[i] for i in eval_idx),
        split_seed=split_seed,
        member_indices=tuple(member_idx),
        selection_indices=tuple(sel_idx),
        evaluation_indices=tuple(eval_idx),
    )


def to_feature_vector(record: PredictionRecord, num_classes: int) -> np.ndarray:
    """Concatenate (probs, one_hot(label)) into the 2C attack-space point."""
    if record.num_classes != num_classes:
        raise ValueError("record class count mismatch")
    a = np.zeros(2 * num_classes, dtype=np.float64)
    a[:num_classes] = record.probs
    a[num_classes + record.label] = 1.0
    return a


def feature_matrix(records, num_classes: int) -> np.ndarray:
    """Stack feature vectors for a sequence of records, shape (n, 2C)."""
    if not records:
        return np.zeros((0, 2 * num_classes), dtype=np.float64)
    return np.stack([to_feature_vector(r, num_classes) for r in records])
