"""Threshold attacks and their empirical advantage.

An attack predicts "member" when a score falls strictly below a threshold.
The advantage is the member rate minus the nonmember rate of that
prediction. Thresholds are fitted on the selection half and the reported
advantage comes from the held-out evaluation half.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from . import scoring
from .data import AuditDataset


@dataclasses.dataclass(frozen=True)
class AttackResult:
    """Fitted threshold plus the advantages on both nonmember halves."""

    score_name: str
    tau: float
    selection_advantage: float
    evaluation_advantage: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def empirical_advantage(member_scores, nonmember_scores, tau: float) -> float:
    """fraction(member score < tau) minus fraction(nonmember score < tau)."""
    members = np.asarray(member_scores, dtype=np.float64)
    nonmembers = np.asarray(nonmember_scores, dtype=np.float64)
    if members.size == 0 or nonmembers.size == 0:
        raise ValueError("score lists must be non-empty")
    return float(np.mean(members < tau) - np.mean(nonmembers < tau))


def best_threshold(member_scores, nonmember_scores) -> tuple[float, float]:
    """Exhaustive threshold sweep maximizing the empirical advantage.

    Candidates are the midpoints of consecutive distinct pooled scores plus
    the -inf/+inf sentinels; ties break toward the smaller threshold, so a
    signal-free instance returns (-inf, 0.0).
    """
    members = np.sort(np.asarray(member_scores, dtype=np.float64))
    nonmembers = np.sort(np.asarray(nonmember_scores, dtype=np.float64))
    if members.size == 0 or nonmembers.size == 0:
        raise ValueError("score lists must be non-empty")

    pooled = np.unique(np.concatenate([members, nonmembers]))
    mids = (pooled[:-1] + pooled[1:]) / 2.0
    candidates = np.concatenate([[-math.inf], mids, [math.inf]])

    frac_m = np.searchsorted(members, candidates, side="left") / members.size
    frac_n = np.searchsorted(nonmembers, candidates, side="left") / nonmembers.size
    adv = frac_m - frac_n
    best = int(np.argmax(adv))
    return float(candidates[best]), float(adv[best])


def run_threshold_attack(
    dataset: AuditDataset,
    score_name: str,
    relax_cfg: scoring.RelaxLossScoreConfig | None = None,
    record_scores: np.ndarray | None = None,
) -> AttackResult:
    """Fit a threshold on (members, selection) and report on (members, evaluation).

    ``record_scores``, when given, is an array aligned with the record list
    the dataset was built from (the file-based Mixup path); otherwise the
    score is computed per record from its probs and label.
    """
    if record_scores is not None:
        record_scores = np.asarray(record_scores, dtype=np.float64)
        member_s = record_scores[list(dataset.member_indices)]
        selection_s = record_scores[list(dataset.selection_indices)]
        evaluation_s = record_scores[list(dataset.evaluation_indices)]
        if not (
            np.all(np.isfinite(member_s))
            and np.all(np.isfinite(selection_s))
            and np.all(np.isfinite(evaluation_s))
        ):
            raise ValueError("missing or non-finite scores for some dataset records")
    else:
        if score_name not in scoring.RECORD_SCORES:
            raise ValueError(
                f"score {score_name!r} is not record-computable; "
                "pass record_scores for file-based scores"
            )
        member_s = np.array(
            [scoring.record_score(r, score_name, relax_cfg) for r in dataset.members]
        )
        selection_s = np.array(
            [scoring.record_score(r, score_name, relax_cfg) for r in dataset.selection]
        )
        evaluation_s = np.array(
            [scoring.record_score(r, score_name, relax_cfg) for r in dataset.evaluation]
        )

    tau, selection_advantage = best_threshold(member_s, selection_s)
    evaluation_advantage = empirical_advantage(member_s, evaluation_s, tau)
    return AttackResult(score_name, tau, selection_advantage, evaluation_advantage)
