"""Synthetic audit targets: Gaussian-mixture data and tiny MLP classifiers.

The lab produces everything an end-to-end audit needs without external
datasets: class-conditional Gaussian features on a regular simplex frame,
an MLP trained with one of three procedures (vanilla cross-entropy, mixup
interpolation, or the relaxed-loss defense), and prediction exports in the
audit CSV format.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .data import (
    SPLIT_MEMBER,
    SPLIT_NONMEMBER,
    PredictionRecord,
    save_predictions,
)
from .scoring import softened_label

TRAIN_METHODS = ("vanilla", "mixup", "relaxloss")


@dataclasses.dataclass(frozen=True)
class GenConfig:
    """Shape and geometry of the synthetic classification mixture."""

    num_classes: int = 3
    dim: int = 8
    n_member: int = 500
    n_nonmember: int = 3000
    class_separation: float = 1.5
    covariance_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.dim < 2:
            raise ValueError("need num_classes >= 2 and dim >= 2")
        if self.dim < self.num_classes - 1:
            raise ValueError("dim must be >= num_classes - 1 for the simplex frame")
        if self.n_member < 1 or self.n_nonmember < 1:
            raise ValueError("need at least one member and one nonmember")
        if self.class_separation < 0 or self.covariance_scale <= 0:
            raise ValueError("separation must be >= 0 and covariance scale > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclasses.dataclass(frozen=True)
class RawDataset:
    """Raw features with labels and member/nonmember flags."""

    features: np.ndarray
    labels: np.ndarray
    is_member: np.ndarray
    gen_config: GenConfig | None = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        flags = np.array(self.is_member, dtype=bool)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ValueError("features must be (n, d) with one label per row")
        if flags.shape != labels.shape:
            raise ValueError("one member flag per row required")
        for arr in (features, labels, flags):
            arr.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "is_member", flags)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def member_rows(self) -> np.ndarray:
        return np.flatnonzero(self.is_member)


def class_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Regular simplex of class means with pairwise distance ``separation``."""
    scaled = np.eye(num_classes) * (separation / np.sqrt(2.0))
    centered = scaled - scaled.mean(axis=0)
    # Orthonormal basis of the sum-zero subspace; projection keeps all
    # pairwise distances.
    ones = np.ones((num_classes, 1)) / np.sqrt(num_classes)
    q, _ = np.linalg.qr(np.eye(num_classes) - ones @ ones.T)
    basis = q[:, : num_classes - 1]
    coords = centered @ basis
    means = np.zeros((num_classes, dim))
    means[:, : num_classes - 1] = coords
    return means


def gen_synthetic(cfg: GenConfig) -> RawDataset:
    """Draw members and nonmembers from one Gaussian mixture, balanced labels."""
    rng = np.random.default_rng(cfg.seed)
    means = class_means(cfg.num_classes, cfg.dim, cfg.class_separation)
    n_total = cfg.n_member + cfg.n_nonmember
    labels = np.concatenate(
        [
            np.arange(cfg.n_member) % cfg.num_classes,
            np.arange(cfg.n_nonmember) % cfg.num_classes,
        ]
    )
    noise = rng.standard_normal((n_total, cfg.dim))
    features = means[labels] + cfg.covariance_scale * noise
    flags = np.zeros(n_total, dtype=bool)
    flags[: cfg.n_member] = True
    return RawDataset(features, labels, flags, cfg)


@dataclasses.dataclass(frozen=True)
class MlpModel:
    """Fully-connected ReLU network with a softmax head."""

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("one weight matrix and bias per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} shapes do not chain")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]


def init_mlp(layer_dims, rng: np.random.Generator) -> MlpModel:
    """He-initialized weights, zero biases."""
    dims = list(layer_dims)
    weights = []
    biases = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / d_in))
        biases.append(np.zeros(d_out))
    return MlpModel(tuple(dims), tuple(weights), tuple(biases))


def _logits(model: MlpModel, x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return h @ model.weights[-1] + model.biases[-1]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    """Softmax output for one d-vector or a batch of them."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.layer_dims[0]:
        raise ValueError(
            f"input dim {x.shape[1]} does not match model input {model.layer_dims[0]}"
        )
    probs = _softmax(_logits(model, x))
    return probs[0] if single else probs


def model_oracle(model: MlpModel):
    """Callable evaluating the model on arbitrary feature vectors."""
    return lambda x: mlp_forward(model, x)


def loss_and_grads(model: MlpModel, x, targets, signs):
    """Mean signed cross-entropy against per-example target rows, with grads.

    ``signs`` of -1 turn an example's contribution into gradient ascent.
    Targets may be fractional rows summing to 1; they are treated as
    constants.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    signs = np.asarray(signs, dtype=np.float64)
    batch = x.shape[0]

    activations = [x]
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    ce = -(targets * log_probs).sum(axis=1)
    loss = float(np.mean(signs * ce))

    probs = np.exp(log_probs)
    delta = signs[:, None] * (probs - targets) / batch
    grads_w = []
    grads_b = []
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w.append(activations[layer].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (activations[layer] > 0)
    return loss, list(reversed(grads_w)), list(reversed(grads_b))


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Method, schedule, and the relaxed-loss hyperparameters when needed."""

    method: str
    epochs: int = 600
    batch_size: int = 64
    learning_rate: float = 0.08
    seed: int = 0
    hidden_dims: tuple[int, ...] = (64,)
    relax_alpha: float | None = None
    relax_mu: float | None = None

    def __post_init__(self):
        if self.method not in TRAIN_METHODS:
            raise ValueError(f"method must be one of {TRAIN_METHODS}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("epochs and batch_size must be positive, lr >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.method == "relaxloss":
            if self.relax_alpha is None or self.relax_mu is None:
                raise ValueError("relaxloss training needs relax_alpha and relax_mu")
            if not (np.isfinite(self.relax_alpha) and self.relax_alpha >= 0):
                raise ValueError("relax_alpha must be finite and >= 0")
            if not (0 < self.relax_mu <= 1):
                raise ValueError("relax_mu must be in (0, 1]")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))


def relax_branches(model: MlpModel, x, labels, alpha: float, mu: float):
    """Per-example targets and signs for one relaxed-loss step.

    Loss above alpha descends on plain CE; at or below alpha a correct
    prediction ascends on CE, an incorrect one descends on the
    softened-label CE.
    """
    probs = mlp_forward(model, x)
    batch = probs.shape[0]
    num_classes = probs.shape[1]
    eye = np.eye(num_classes)
    ce = -np.log(np.clip(probs[np.arange(batch), labels], 1e-300, 1.0))
    correct = np.argmax(probs, axis=1) == labels

    targets = eye[labels].copy()
    signs = np.ones(batch)
    relaxed = ce <= alpha
    ascend = relaxed & correct
    smooth = relaxed & ~correct
    signs[ascend] = -1.0
    for i in np.flatnonzero(smooth):
        targets[i] = softened_label(probs[i], int(labels[i]), mu)
    return targets, signs


def train_model(data: RawDataset, cfg: TrainConfig) -> MlpModel:
    """Minibatch SGD on the member rows with the configured procedure."""
    rows = data.member_rows
    x_all = data.features[rows]
    labels_all = data.labels[rows]
    # Class count from the whole dataset: member rows alone may miss a class.
    num_classes = int(data.labels.max()) + 1
    if data.gen_config is not None:
        num_classes = data.gen_config.num_classes
    eye = np.eye(num_classes)

    rng = np.random.default_rng(cfg.seed)
    model = init_mlp((data.dim, *cfg.hidden_dims, num_classes), rng)
    weights = [np.array(w) for w in model.weights]
    biases = [np.array(b) for b in model.biases]
    n = x_all.shape[0]

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            x = x_all[idx]
            labels = labels_all[idx]
            current = MlpModel(model.layer_dims, tuple(weights), tuple(biases))

            if cfg.method == "vanilla":
                targets = eye[labels]
                signs = np.ones(idx.size)
            elif cfg.method == "mixup":
                pair = rng.permutation(idx.size)
                lam = rng.uniform(0.0, 1.0, idx.size)
                x = lam[:, None] * x + (1.0 - lam)[:, None] * x[pair]
                y = eye[labels]
                targets = lam[:, None] * y + (1.0 - lam)[:, None] * y[pair]
                signs = np.ones(idx.size)
            else:
                targets, signs = relax_branches(
                    current, x, labels, cfg.relax_alpha, cfg.relax_mu
                )

            _, grads_w, grads_b = loss_and_grads(current, x, targets, signs)
            for layer in range(len(weights)):
                weights[layer] -= cfg.learning_rate * grads_w[layer]
                biases[layer] -= cfg.learning_rate * grads_b[layer]

        check = MlpModel(model.layer_dims, tuple(weights), tuple(biases))
        loss, _, _ = loss_and_grads(
            check, x_all, eye[labels_all], np.ones(n)
        )
        if not np.isfinite(loss):
            raise FloatingPointError("training diverged: mean cross-entropy not finite")

    return MlpModel(model.layer_dims, tuple(weights), tuple(biases))


def predict_records(model: MlpModel, data: RawDataset):
    """(num_classes, records) of model outputs for every dataset row."""
    probs = mlp_forward(model, data.features)
    records = [
        PredictionRecord(
            probs[i],
            int(data.labels[i]),
            SPLIT_MEMBER if data.is_member[i] else SPLIT_NONMEMBER,
        )
        for i in range(probs.shape[0])
    ]
    return model.num_classes, records


def export_predictions(model: MlpModel, data: RawDataset, path) -> None:
    """Write model outputs for every dataset row in the prediction CSV format."""
    num_classes, records = predict_records(model, data)
    save_predictions(path, num_classes, records)


def save_model(path, model: MlpModel) -> None:
    obj = {
        "layer_dims": list(model.layer_dims),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return MlpModel(
        tuple(obj["layer_dims"]),
        tuple(np.array(w, dtype=np.float64) for w in obj["weights"]),
        tuple(np.array(b, dtype=np.float64) for b in obj["biases"]),
    )


def save_raw_dataset(path, data: RawDataset) -> None:
    """Write rows as ``split,label,x_0..x_{d-1}`` (LF, no quoting)."""
    header = "split,label," + ",".join(f"x_{i}" for i in range(data.dim))
    lines = [header]
    for i in range(data.features.shape[0]):
        split = SPLIT_MEMBER if data.is_member[i] else SPLIT_NONMEMBER
        feats = ",".join(repr(float(v)) for v in data.features[i])
        lines.append(f"{split},{int(data.labels[i])},{feats}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_raw_dataset(path) -> RawDataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ValueError("empty raw dataset file")
    cols = lines[0].split(",")
    if cols[:2] != ["split", "label"] or len(cols) < 3:
        raise ValueError("malformed raw dataset header")
    dim = len(cols) - 2
    features = []
    labels = []
    flags = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != dim + 2:
            raise ValueError(f"wrong column count, line {lineno}")
        if cells[0] not in (SPLIT_MEMBER, SPLIT_NONMEMBER):
            raise ValueError(f"unknown split {cells[0]!r}, line {lineno}")
        flags.append(cells[0] == SPLIT_MEMBER)
        labels.append(int(cells[1]))
        features.append([float(c) for c in cells[2:]])
    return RawDataset(np.array(features), np.array(labels), np.array(flags), None)
