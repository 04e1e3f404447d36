"""Export jobs: plain prediction dumps and mixup-mixed prediction dumps.

Output formats are the audit toolkit's contracts:

  prediction CSV        split,label,p_0,...,p_{C-1}   (members first)
  mixed-prediction CSV  query_id,r,aux_id,lambda,p_0,...,p_{C-1}

where query_id/aux_id are 0-based row indices into the prediction CSV
emitted by the same job. The lambda sequence is
``numpy.random.default_rng(seed).uniform(lambda_low, lambda_high, R)`` and
the auxiliary rows are ``numpy.random.default_rng(seed).choice(pool,
aux_size, replace=False)``, matching the audit toolkit exactly. Writes are
atomic (temp file + rename).
"""

from __future__ import annotations

import dataclasses
import os
import tempfile

import numpy as np

from .models import load_model
from .sources import load_source


class ExportError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class ExportJob:
    """Model identifier, the two data sources, and inference parameters."""

    model: str
    members: str
    nonmembers: str
    out: str
    batch_size: int = 256
    device: str = "cpu"

    def __post_init__(self):
        if os.path.abspath(self.members) == os.path.abspath(self.nonmembers):
            raise ExportError("member and nonmember sources must be disjoint")
        if self.batch_size < 1:
            raise ExportError("batch size must be positive")


@dataclasses.dataclass(frozen=True)
class MixedExportConfig:
    """Lambda draws and auxiliary selection for the mixed export."""

    out: str
    num_r: int = 10
    aux_from: str = "nonmember"
    aux_size: int = 30
    seed: int = 0
    lambda_low: float = 0.5
    lambda_high: float = 1.0

    def __post_init__(self):
        if self.num_r < 1 or self.aux_size < 1:
            raise ExportError("R and aux size must be positive")
        if self.aux_from not in ("member", "nonmember"):
            raise ExportError("aux_from must be member or nonmember")
        if not (0.0 <= self.lambda_low <= self.lambda_high <= 1.0):
            raise ExportError("need 0 <= lambda_low <= lambda_high <= 1")
        if self.seed < 0:
            raise ExportError("seed must be >= 0")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _batched_probs(model, features: np.ndarray, batch_size: int) -> np.ndarray:
    chunks = [
        model.predict(features[start : start + batch_size])
        for start in range(0, features.shape[0], batch_size)
    ]
    return np.concatenate(chunks)


def _load_job_data(job: ExportJob):
    member_x, member_y = load_source(job.members)
    nonmember_x, nonmember_y = load_source(job.nonmembers)
    if member_x.shape[1] != nonmember_x.shape[1]:
        raise ExportError(
            f"sources {job.members!r} and {job.nonmembers!r} disagree on dimension"
        )
    features = np.concatenate([member_x, nonmember_x])
    labels = np.concatenate([member_y, nonmember_y])
    splits = ["member"] * member_x.shape[0] + ["nonmember"] * nonmember_x.shape[0]
    return features, labels, splits


def _checked_probs(model, features, labels, batch_size, source_hint):
    probs = _batched_probs(model, features, batch_size)
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ExportError(
            f"labels in {source_hint} exceed the model's {probs.shape[1]} classes"
        )
    return probs


def _prediction_lines(probs: np.ndarray, labels, splits) -> str:
    num_classes = probs.shape[1]
    lines = ["split,label," + ",".join(f"p_{i}" for i in range(num_classes))]
    for i in range(probs.shape[0]):
        row = ",".join(repr(float(p)) for p in probs[i])
        lines.append(f"{splits[i]},{labels[i]},{row}")
    return "\n".join(lines) + "\n"


def export_model_predictions(job: ExportJob) -> int:
    """Write the plain prediction CSV; returns the number of rows."""
    model = load_model(job.model, job.device)
    features, labels, splits = _load_job_data(job)
    probs = _checked_probs(
        model, features, labels, job.batch_size, f"{job.members}/{job.nonmembers}"
    )
    _atomic_write(job.out, _prediction_lines(probs, labels, splits))
    return probs.shape[0]


def export_mixed_predictions(job: ExportJob, mixed: MixedExportConfig) -> int:
    """Write the plain CSV plus the mixed CSV; returns the mixed row count.

    Every dataset row is a query; each query is mixed with every selected
    auxiliary row at each lambda, and the model is evaluated on the mixes.
    """
    model = load_model(job.model, job.device)
    features, labels, splits = _load_job_data(job)
    probs = _checked_probs(
        model, features, labels, job.batch_size, f"{job.members}/{job.nonmembers}"
    )
    _atomic_write(job.out, _prediction_lines(probs, labels, splits))
    num_classes = probs.shape[1]

    is_member = np.array([s == "member" for s in splits])
    pool = np.flatnonzero(is_member == (mixed.aux_from == "member"))
    if pool.size == 0:
        raise ExportError(f"no {mixed.aux_from} rows to draw auxiliaries from")
    if mixed.aux_size > pool.size:
        raise ExportError(
            f"aux size {mixed.aux_size} exceeds the {pool.size} {mixed.aux_from} rows"
        )
    aux_ids = np.sort(
        np.random.default_rng(mixed.seed).choice(pool, mixed.aux_size, replace=False)
    )
    lambdas = np.random.default_rng(mixed.seed).uniform(
        mixed.lambda_low, mixed.lambda_high, mixed.num_r
    )

    header = "query_id,r,aux_id,lambda," + ",".join(
        f"p_{i}" for i in range(num_classes)
    )
    lines = [header]
    n = features.shape[0]
    for query in range(n):
        for r, lam in enumerate(lambdas):
            mixes = lam * features[query][None, :] + (1.0 - lam) * features[aux_ids]
            mix_probs = model.predict(mixes)
            for j, aux in enumerate(aux_ids):
                row = ",".join(repr(float(p)) for p in mix_probs[j])
                lines.append(f"{query},{r},{aux},{float(lam)!r},{row}")
    _atomic_write(mixed.out, "\n".join(lines) + "\n")
    return len(lines) - 1
