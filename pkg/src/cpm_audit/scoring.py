"""Membership scores computed from a softmax vector and a label.

Every score follows the convention "lower score means predicted member",
so a threshold attack always tests ``score < tau``. Logs of probabilities
clamp their argument to [1e-12, 1] to keep all scores finite.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.special import xlogy

from .data import PredictionRecord

EPS_CLAMP = 1e-12

RECORD_SCORES = ("msp", "ent", "ce", "me", "relaxloss")


def _log_clamped(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, EPS_CLAMP, 1.0))


@dataclasses.dataclass(frozen=True)
class RelaxLossScoreConfig:
    """Loss target alpha and label-softening cap mu for the RelaxLoss score."""

    alpha: float
    mu: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError("alpha must be finite and >= 0")
        if not (0 < self.mu <= 1):
            raise ValueError("mu must be in (0, 1]")


@dataclasses.dataclass(frozen=True)
class MixupScoreConfig:
    """Interpolation-draw count, lambda range, auxiliary ids, and seed."""

    R: int
    aux_ids: tuple[int, ...]
    seed: int
    lambda_low: float = 0.5
    lambda_high: float = 1.0

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if not self.aux_ids:
            raise ValueError("auxiliary set must be non-empty")
        if not (0.0 <= self.lambda_low <= self.lambda_high <= 1.0):
            raise ValueError("need 0 <= lambda_low <= lambda_high <= 1")


def msp_score(probs) -> float:
    """Negative maximum softmax probability."""
    return -float(np.max(probs))


def ent_score(probs) -> float:
    """Shannon entropy of the softmax vector (natural log)."""
    q = np.clip(probs, EPS_CLAMP, 1.0)
    return -float(np.sum(q * np.log(q)))


def ce_score(probs, label: int) -> float:
    """Cross-entropy loss against the true label."""
    return -float(_log_clamped(np.asarray(probs))[label])


def me_score(probs, label: int) -> float:
    """Modified entropy: entropy-like loss that also penalizes off-label mass."""
    p = np.asarray(probs, dtype=np.float64)
    log_p = _log_clamped(p)
    log_1mp = _log_clamped(1.0 - p)
    total = float(np.sum(p * log_1mp)) - float(p[label] * log_1mp[label])
    total += float((1.0 - p[label]) * log_p[label])
    return -total


def ce_convexified(probs_relaxed, y_relaxed) -> float:
    """Convex extension of the cross-entropy score to fractional labels.

    Adds the label's own entropy term so the function agrees with
    ``ce_score`` on one-hot labels while being jointly convex on
    (0, 1]^C x [0, 1]^C.
    """
    p = np.asarray(probs_relaxed, dtype=np.float64)
    y = np.asarray(y_relaxed, dtype=np.float64)
    return -float(np.sum(y * _log_clamped(p))) + float(np.sum(xlogy(y, y)))


def me_convexified(probs_relaxed, y_relaxed) -> float:
    """Convex extension of the modified-entropy score to fractional labels."""
    p = np.asarray(probs_relaxed, dtype=np.float64)
    y = np.asarray(y_relaxed, dtype=np.float64)
    raw = -float(np.sum((1.0 - p) * _log_clamped(p) * y))
    raw -= float(np.sum(p * _log_clamped(1.0 - p) * (1.0 - y)))
    penalty = 5.0 * float(np.sum(xlogy(y, y)))
    penalty += 5.0 * float(np.sum(xlogy(1.0 - y, 1.0 - y)))
    return raw + penalty


def softened_label(probs, label: int, mu: float) -> np.ndarray:
    """Soft label capping the true-class mass at min(p_label, mu).

    The remaining mass is spread uniformly over the other classes; the
    result always sums to 1.
    """
    p = np.asarray(probs, dtype=np.float64)
    num_classes = p.size
    if num_classes < 2:
        raise ValueError("soft label undefined for a single class")
    top = min(float(p[label]), mu)
    soft = np.full(num_classes, (1.0 - top) / (num_classes - 1), dtype=np.float64)
    soft[label] = top
    return soft


def relaxloss_score(probs, label: int, cfg: RelaxLossScoreConfig) -> float:
    """Score aligned with the RelaxLoss training dynamic.

    ``|CE - alpha|`` plus a correctness-weighted blend of the plain and
    soft-label cross-entropies; the 0/1 error uses argmax with ties broken
    to the lowest class index.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.size < 2:
        raise ValueError("relaxloss score undefined for a single class")
    ce = ce_score(p, label)
    l01 = 0.0 if int(np.argmax(p)) == label else 1.0
    soft = softened_label(p, label, cfg.mu)
    ce_soft = -float(np.sum(soft * _log_clamped(p)))
    return abs(ce - cfg.alpha) + (1.5 - l01) * ce + (0.5 + l01) * ce_soft


def _one_hot(label: int, num_classes: int) -> np.ndarray:
    y = np.zeros(num_classes, dtype=np.float64)
    y[label] = 1.0
    return y


def relaxed_cross_entropy(probs, y_mix) -> float:
    """Cross-entropy against a possibly fractional label vector."""
    return -float(np.sum(np.asarray(y_mix) * _log_clamped(np.asarray(probs))))


def mixup_lambdas(cfg: MixupScoreConfig) -> np.ndarray:
    """The seeded lambda sequence shared by every query of an audit run."""
    rng = np.random.default_rng(cfg.seed)
    return rng.uniform(cfg.lambda_low, cfg.lambda_high, size=cfg.R)


def _model_probs_batch(model, x_batch: np.ndarray, num_classes: int) -> np.ndarray:
    """Evaluate the oracle on a batch, falling back to per-row calls."""
    try:
        probs = np.asarray(model(x_batch), dtype=np.float64)
        if probs.shape == (x_batch.shape[0], num_classes):
            return probs
    except Exception:
        pass
    return np.stack([np.asarray(model(row), dtype=np.float64) for row in x_batch])


def mixup_score(query, aux, model, cfg: MixupScoreConfig, num_classes: int) -> float:
    """Average cross-entropy of the model on mixes of the query with aux points.

    ``query`` is a raw example ``(x, label)``; ``aux`` is a non-empty list
    of raw examples; ``model`` maps a feature vector (or a batch of them)
    to softmax probs. The lambda draws come from ``mixup_lambdas(cfg)``.
    """
    if not aux:
        raise ValueError("auxiliary set must be non-empty")
    x, label = query
    x = np.asarray(x, dtype=np.float64)
    y = _one_hot(label, num_classes)
    x_aux = np.stack([np.asarray(a, dtype=np.float64) for a, _ in aux])
    y_aux = np.stack([_one_hot(lab, num_classes) for _, lab in aux])
    lambdas = mixup_lambdas(cfg)
    total = 0.0
    for lam in lambdas:
        x_mix = lam * x + (1.0 - lam) * x_aux
        y_mix = lam * y + (1.0 - lam) * y_aux
        probs = _model_probs_batch(model, x_mix, num_classes)
        total += float(np.sum(-y_mix * _log_clamped(probs)))
    return total / (len(lambdas) * len(aux))


def record_score(record: PredictionRecord, name: str, relax_cfg=None) -> float:
    """Dispatch one of the record-computable scores by name."""
    if name == "msp":
        return msp_score(record.probs)
    if name == "ent":
        return ent_score(record.probs)
    if name == "ce":
        return ce_score(record.probs, record.label)
    if name == "me":
        return me_score(record.probs, record.label)
    if name == "relaxloss":
        if relax_cfg is None:
            raise ValueError("relaxloss score needs a RelaxLossScoreConfig (alpha, mu)")
        return relaxloss_score(record.probs, record.label, relax_cfg)
    raise ValueError(f"unknown score {name!r}")


def mixup_scores_from_file(path, records) -> np.ndarray:
    """Per-record Mixup scores from a mixed-prediction CSV.

    File rows are ``query_id,r,aux_id,lambda,p_0,...,p_{C-1}`` where
    ``query_id`` and ``aux_id`` are 0-based row indices into the prediction
    file the ``records`` came from. Returns an array aligned with
    ``records``; entries with no rows are NaN.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    num_classes = records[0].num_classes
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    expected = "query_id,r,aux_id,lambda," + ",".join(
        f"p_{i}" for i in range(num_classes)
    )
    if not lines or lines[0] != expected:
        raise ValueError(f"malformed mixed-prediction header, expected {expected!r}")

    totals = np.zeros(len(records))
    counts = np.zeros(len(records), dtype=np.int64)
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != num_classes + 4:
            raise ValueError(f"wrong column count, line {lineno}")
        try:
            query_id = int(cells[0])
            aux_id = int(cells[2])
            lam = float(cells[3])
            probs = np.array([float(c) for c in cells[4:]], dtype=np.float64)
        except ValueError:
            raise ValueError(f"non-numeric cell, line {lineno}") from None
        if not (0 <= query_id < len(records) and 0 <= aux_id < len(records)):
            raise ValueError(f"query/aux id out of range, line {lineno}")
        if not (0.0 <= lam <= 1.0):
            raise ValueError(f"lambda out of [0, 1], line {lineno}")
        y_mix = lam * _one_hot(records[query_id].label, num_classes)
        y_mix += (1.0 - lam) * _one_hot(records[aux_id].label, num_classes)
        totals[query_id] += relaxed_cross_entropy(probs, y_mix)
        counts[query_id] += 1

    scores = np.full(len(records), np.nan)
    seen = counts > 0
    scores[seen] = totals[seen] / counts[seen]
    return scores
