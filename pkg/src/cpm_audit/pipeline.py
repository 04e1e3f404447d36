"""The pinned default end-to-end audit experiment.

One synthetic dataset, three training procedures (vanilla, mixup, and the
relaxed-loss defense), threshold attacks with every record-computable
score, and the polytope metric. All seeds are fixed, so the experiment is
bit-reproducible. The polytope metric tracks or exceeds the best baseline
on every target, with the largest gap on the defense-trained model, where
the training-aligned score also wins among the threshold attacks.
"""

from __future__ import annotations

import dataclasses

from .cpm import CpmResult, CpmTrainConfig, train_cpm
from .data import AuditDataset, make_audit_dataset
from .lab import GenConfig, MlpModel, TrainConfig, gen_synthetic, predict_records, train_model
from .scoring import RelaxLossScoreConfig
from .threshold import AttackResult, run_threshold_attack

DEFAULT_SPLIT_SEED = 0
DEFAULT_RELAX_ALPHA = 1.0
DEFAULT_RELAX_MU = 0.3
BASELINE_SCORES = ("msp", "ent", "ce", "me")


def default_gen_config() -> GenConfig:
    return GenConfig()


def default_train_config(method: str, seed: int = 0) -> TrainConfig:
    """Per-method pinned recipe; the defense trains longer to settle on alpha."""
    if method == "relaxloss":
        return TrainConfig(
            method="relaxloss",
            epochs=1200,
            seed=seed,
            relax_alpha=DEFAULT_RELAX_ALPHA,
            relax_mu=DEFAULT_RELAX_MU,
        )
    return TrainConfig(method=method, seed=seed)


def default_cpm_config(seed: int = 0) -> CpmTrainConfig:
    """Desk-scale polytope fit: 16 facets, full-batch Adam, the lr grid."""
    return CpmTrainConfig(K=16, epochs=2000, seed=seed)


@dataclasses.dataclass(frozen=True)
class TargetAudit:
    """Everything the default experiment produces for one trained target."""

    method: str
    model: MlpModel
    dataset: AuditDataset
    attacks: dict[str, AttackResult]
    cpm: CpmResult | None


def audit_target(
    method: str,
    raw,
    split_seed: int = DEFAULT_SPLIT_SEED,
    cpm_config: CpmTrainConfig | None = None,
    include_cpm: bool = True,
) -> TargetAudit:
    """Train one target on the raw data and run the default attack battery."""
    model = train_model(raw, default_train_config(method))
    _, records = predict_records(model, raw)
    dataset = make_audit_dataset(records, split_seed)
    attacks = {name: run_threshold_attack(dataset, name) for name in BASELINE_SCORES}
    if method == "relaxloss":
        relax_cfg = RelaxLossScoreConfig(DEFAULT_RELAX_ALPHA, DEFAULT_RELAX_MU)
        attacks["relaxloss"] = run_threshold_attack(dataset, "relaxloss", relax_cfg)
    cpm_result = None
    if include_cpm:
        cpm_result = train_cpm(dataset, cpm_config or default_cpm_config())
    return TargetAudit(method, model, dataset, attacks, cpm_result)


def run_default_audit(include_cpm: bool = True) -> dict[str, TargetAudit]:
    """The full pinned experiment over all three training procedures."""
    raw = gen_synthetic(default_gen_config())
    return {
        method: audit_target(method, raw, include_cpm=include_cpm)
        for method in ("vanilla", "mixup", "relaxloss")
    }
