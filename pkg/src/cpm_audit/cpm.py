"""Convex-polytope leakage metric fitted with a logistic surrogate.

A polytope over the (probs, one-hot label) space is parameterized by K
affine facets; its score is the facet maximum g(a) and a point counts as
"member" when sign * g(a) < 0. Training minimizes the mean logistic loss
pushing members inside and the selection half outside, with minibatch Adam
over a (sign, learning-rate, restart) grid; the run with the lowest final
objective wins.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import math
import os

import numpy as np
from scipy.special import expit

from .data import AuditDataset, feature_matrix


@dataclasses.dataclass(frozen=True)
class Polytope:
    """K facets (weights, biases) and an orientation sign."""

    weights: np.ndarray  # (K, dim)
    biases: np.ndarray  # (K,)
    sign: int

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        biases = np.array(self.biases, dtype=np.float64)
        if weights.ndim != 2 or biases.shape != (weights.shape[0],):
            raise ValueError("weights must be (K, dim) with K biases")
        if weights.shape[0] < 1:
            raise ValueError("need at least one facet")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise ValueError("polytope parameters must be finite")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        weights.flags.writeable = False
        biases.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def num_facets(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])


@dataclasses.dataclass(frozen=True)
class CpmTrainConfig:
    """Facet count, optimizer grid, and Adam hyperparameters."""

    K: int = 1000
    learning_rates: tuple[float, ...] = (0.1, 0.01, 0.001)
    epochs: int = 200
    batch_size: int = 10000
    restarts: int = 1
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float = 0.1

    def __post_init__(self):
        if self.K < 1 or self.epochs < 1 or self.batch_size < 1 or self.restarts < 1:
            raise ValueError("K, epochs, batch_size, restarts must be positive")
        if not self.learning_rates or any(lr <= 0 for lr in self.learning_rates):
            raise ValueError("learning_rates must be non-empty and positive")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        object.__setattr__(self, "learning_rates", tuple(self.learning_rates))


@dataclasses.dataclass(frozen=True)
class CpmResult:
    """Fitted polytope plus its objective and both split advantages."""

    polytope: Polytope
    final_objective: float
    selection_advantage: float
    evaluation_advantage: float
    lr_chosen: float


def facet_values(polytope: Polytope, features: np.ndarray) -> np.ndarray:
    """All facet affine values, shape (n, K)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != polytope.dim:
        raise ValueError(
            f"feature dim {features.shape[-1]} does not match polytope dim {polytope.dim}"
        )
    return features @ polytope.weights.T + polytope.biases


def polytope_g(polytope: Polytope, a) -> tuple[float, int]:
    """Max facet value and the achieving facet (lowest index on ties)."""
    vals = facet_values(polytope, np.asarray(a, dtype=np.float64)[None, :])[0]
    idx = int(np.argmax(vals))
    return float(vals[idx]), idx


def polytope_g_batch(polytope: Polytope, features) -> tuple[np.ndarray, np.ndarray]:
    vals = facet_values(polytope, features)
    idx = np.argmax(vals, axis=1)
    return vals[np.arange(vals.shape[0]), idx], idx


def member_decision(polytope: Polytope, a) -> int:
    """1 iff sign * g(a) < 0 (strictly inside the oriented polytope)."""
    g, _ = polytope_g(polytope, a)
    return int(polytope.sign * g < 0)


def member_decisions(polytope: Polytope, features) -> np.ndarray:
    g, _ = polytope_g_batch(polytope, features)
    return polytope.sign * g < 0


def logistic_loss(v, t) -> float:
    """ln(1 + exp(-t*v)) in the overflow-safe softplus form."""
    return float(np.logaddexp(0.0, -np.float64(t) * np.float64(v)))


def cpm_objective(
    polytope: Polytope, member_features, nonmember_features
) -> float:
    """Mean logistic loss pulling members inside and nonmembers outside."""
    member_features = np.asarray(member_features, dtype=np.float64)
    nonmember_features = np.asarray(nonmember_features, dtype=np.float64)
    if member_features.shape[0] == 0 or nonmember_features.shape[0] == 0:
        raise ValueError("both point sets must be non-empty")
    s = polytope.sign
    g_m, _ = polytope_g_batch(polytope, member_features)
    g_n, _ = polytope_g_batch(polytope, nonmember_features)
    loss_m = np.logaddexp(0.0, s * g_m).mean()
    loss_n = np.logaddexp(0.0, -s * g_n).mean()
    return float(loss_m + loss_n)


def _scatter_by_facet(num_facets, idx, coef, features):
    """Accumulate coef-weighted rows onto their argmax facets via one matmul."""
    selector = np.zeros((num_facets, idx.size))
    selector[idx, np.arange(idx.size)] = coef
    return selector @ features, selector.sum(axis=1)


def cpm_subgradient(
    polytope: Polytope, member_features, nonmember_features
) -> tuple[np.ndarray, np.ndarray]:
    """Subgradient of the objective; each sample feeds only its argmax facet."""
    member_features = np.asarray(member_features, dtype=np.float64)
    nonmember_features = np.asarray(nonmember_features, dtype=np.float64)
    s = polytope.sign
    k = polytope.num_facets

    g_m, idx_m = polytope_g_batch(polytope, member_features)
    coef_m = s * expit(s * g_m) / member_features.shape[0]
    grad_w, grad_b = _scatter_by_facet(k, idx_m, coef_m, member_features)

    g_n, idx_n = polytope_g_batch(polytope, nonmember_features)
    coef_n = -s * expit(-s * g_n) / nonmember_features.shape[0]
    dw, db = _scatter_by_facet(k, idx_n, coef_n, nonmember_features)
    return grad_w + dw, grad_b + db


def cpm_advantage(polytope: Polytope, member_features, eval_features) -> float:
    """Member-decision rate on members minus on the evaluation points."""
    member_features = np.asarray(member_features, dtype=np.float64)
    eval_features = np.asarray(eval_features, dtype=np.float64)
    if member_features.shape[0] == 0 or eval_features.shape[0] == 0:
        raise ValueError("both point sets must be non-empty")
    return float(
        member_decisions(polytope, member_features).mean()
        - member_decisions(polytope, eval_features).mean()
    )


def pad_polytope(polytope: Polytope, num_facets: int) -> Polytope:
    """Grow to num_facets by cycling existing facets; g is unchanged."""
    if num_facets < polytope.num_facets:
        raise ValueError("cannot shrink a polytope by padding")
    idx = np.arange(num_facets) % polytope.num_facets
    return Polytope(polytope.weights[idx], polytope.biases[idx], polytope.sign)


class _Adam:
    """Plain Adam over the (weights, biases) pair."""

    def __init__(self, shape_w, shape_b, beta1, beta2, eps):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m_w = np.zeros(shape_w)
        self.v_w = np.zeros(shape_w)
        self.m_b = np.zeros(shape_b)
        self.v_b = np.zeros(shape_b)

    def step(self, w, b, grad_w, grad_b, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m_w = b1 * self.m_w + (1 - b1) * grad_w
        self.v_w = b2 * self.v_w + (1 - b2) * grad_w**2
        self.m_b = b1 * self.m_b + (1 - b1) * grad_b
        self.v_b = b2 * self.v_b + (1 - b2) * grad_b**2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        w -= lr * (self.m_w / c1) / (np.sqrt(self.v_w / c2) + self.eps)
        b -= lr * (self.m_b / c1) / (np.sqrt(self.v_b / c2) + self.eps)


@dataclasses.dataclass(frozen=True)
class _RunSpec:
    sign: int
    lr: float
    seed_key: tuple[int, int, int]
    warm_from: Polytope | None = None


def _run_one(
    spec: _RunSpec,
    member_features: np.ndarray,
    selection_features: np.ndarray,
    cfg: CpmTrainConfig,
) -> tuple[Polytope, float]:
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed,) + spec.seed_key))
    dim = member_features.shape[1]
    if spec.warm_from is not None:
        start = pad_polytope(spec.warm_from, cfg.K)
        w = np.array(start.weights)
        b = np.array(start.biases)
    else:
        w = rng.uniform(-cfg.init_scale, cfg.init_scale, size=(cfg.K, dim))
        b = np.zeros(cfg.K)

    n_m = member_features.shape[0]
    n_s = selection_features.shape[0]
    b_m = min(cfg.batch_size, n_m)
    b_s = min(cfg.batch_size, n_s)
    steps = max(math.ceil(n_m / b_m), math.ceil(n_s / b_s))
    adam = _Adam(w.shape, b.shape, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    for _ in range(cfg.epochs):
        for _ in range(steps):
            batch_m = (
                member_features
                if b_m == n_m
                else member_features[rng.choice(n_m, size=b_m, replace=False)]
            )
            batch_s = (
                selection_features
                if b_s == n_s
                else selection_features[rng.choice(n_s, size=b_s, replace=False)]
            )
            poly = Polytope(w, b, spec.sign)
            grad_w, grad_b = cpm_subgradient(poly, batch_m, batch_s)
            adam.step(w, b, grad_w, grad_b, spec.lr)

    final = Polytope(w, b, spec.sign)
    return final, cpm_objective(final, member_features, selection_features)


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("CPM_AUDIT_THREADS", "1"))
    return max(1, threads)


def train_cpm(
    dataset: AuditDataset,
    cfg: CpmTrainConfig,
    warm_start: tuple[Polytope, float] | None = None,
    threads: int | None = None,
) -> CpmResult:
    """Fit the polytope on (members, selection) over the full run grid.

    Runs both orientations, every learning rate, and every restart with
    private PRNG streams keyed by (seed, sign, lr, restart); the run with
    the minimum final objective on the fitting split wins (first in grid
    order on ties), so the result is deterministic no matter how many
    threads execute the grid. ``warm_start`` adds one extra run seeded from
    a donor polytope padded to K facets, at the donor's learning rate.
    """
    member_features = feature_matrix(dataset.members, dataset.num_classes)
    selection_features = feature_matrix(dataset.selection, dataset.num_classes)
    evaluation_features = feature_matrix(dataset.evaluation, dataset.num_classes)

    specs = []
    for sign_idx, sign in enumerate((1, -1)):
        for lr_idx, lr in enumerate(cfg.learning_rates):
            for restart in range(cfg.restarts):
                specs.append(_RunSpec(sign, lr, (sign_idx, lr_idx, restart)))
    if warm_start is not None:
        donor, donor_lr = warm_start
        if donor_lr not in cfg.learning_rates:
            raise ValueError("warm-start learning rate must be in the grid")
        sign_idx = 0 if donor.sign == 1 else 1
        lr_idx = cfg.learning_rates.index(donor_lr)
        specs.append(
            _RunSpec(donor.sign, donor_lr, (sign_idx, lr_idx, cfg.restarts), donor)
        )

    threads = _resolve_threads(threads)
    if threads == 1:
        outcomes = [
            _run_one(spec, member_features, selection_features, cfg) for spec in specs
        ]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(
                pool.map(
                    lambda spec: _run_one(
                        spec, member_features, selection_features, cfg
                    ),
                    specs,
                )
            )

    best_idx = 0
    for i in range(1, len(outcomes)):
        if outcomes[i][1] < outcomes[best_idx][1]:
            best_idx = i
    polytope, objective = outcomes[best_idx]
    return CpmResult(
        polytope=polytope,
        final_objective=objective,
        selection_advantage=cpm_advantage(
            polytope, member_features, selection_features
        ),
        evaluation_advantage=cpm_advantage(
            polytope, member_features, evaluation_features
        ),
        lr_chosen=specs[best_idx].lr,
    )


def k_ablation(
    dataset: AuditDataset,
    base_cfg: CpmTrainConfig,
    k_values,
    threads: int | None = None,
) -> list[tuple[int, CpmResult]]:
    """Train one CPM per facet count, warm-starting each from the last best.

    Every run after the first adds one restart initialized from the
    previous best polytope padded with duplicated facets, which keeps the
    fitted family nested the way the exact bound is.
    """
    k_values = list(k_values)
    if not k_values:
        raise ValueError("k_values must be non-empty")
    if any(k < 1 for k in k_values) or any(
        a >= b for a, b in zip(k_values, k_values[1:])
    ):
        raise ValueError("k_values must be positive and strictly ascending")

    results = []
    warm = None
    for k in k_values:
        cfg_k = dataclasses.replace(base_cfg, K=k)
        res = train_cpm(dataset, cfg_k, warm_start=warm, threads=threads)
        results.append((k, res))
        warm = (res.polytope, res.lr_chosen)
    return results


def polytope_to_json(polytope: Polytope) -> str:
    return json.dumps(
        {
            "K": polytope.num_facets,
            "s": polytope.sign,
            "weights": polytope.weights.tolist(),
            "biases": polytope.biases.tolist(),
        },
        sort_keys=True,
    )


def polytope_from_json(text: str) -> Polytope:
    obj = json.loads(text)
    poly = Polytope(
        np.array(obj["weights"], dtype=np.float64),
        np.array(obj["biases"], dtype=np.float64),
        int(obj["s"]),
    )
    if poly.num_facets != int(obj["K"]):
        raise ValueError("facet count K does not match the weights array")
    return poly
