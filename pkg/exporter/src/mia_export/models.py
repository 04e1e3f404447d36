"""Model backends resolved from an identifier string.

Supported identifiers:
  constant:<C>        uniform softmax over C classes (stub for format tests)
  json:<path>         MLP weights JSON ({layer_dims, weights, biases}),
                      evaluated with this package's own forward pass
  torchvision:<name>  a torchvision classifier with its default weights
                      (requires the ``torch`` extra and downloadable weights)
"""

from __future__ import annotations

import json

import numpy as np


class ModelLoadError(RuntimeError):
    pass


class ConstantModel:
    """Uniform probabilities; every exported row is identical."""

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ModelLoadError("constant model needs at least one class")
        self.num_classes = num_classes

    def predict(self, features: np.ndarray) -> np.ndarray:
        n = features.shape[0]
        return np.full((n, self.num_classes), 1.0 / self.num_classes)


class JsonMlpModel:
    """ReLU MLP with a softmax head loaded from a weights JSON file."""

    def __init__(self, path: str):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
            self.dims = [int(d) for d in obj["layer_dims"]]
            self.weights = [np.array(w, dtype=np.float64) for w in obj["weights"]]
            self.biases = [np.array(b, dtype=np.float64) for b in obj["biases"]]
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ModelLoadError(f"cannot load model JSON {path!r}: {exc}") from exc
        if len(self.weights) != len(self.dims) - 1:
            raise ModelLoadError(f"model JSON {path!r}: layer count mismatch")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i], self.dims[i + 1]) or b.shape != (self.dims[i + 1],):
                raise ModelLoadError(f"model JSON {path!r}: layer {i} shapes do not chain")
        self.num_classes = self.dims[-1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        h = np.asarray(features, dtype=np.float64)
        if h.shape[1] != self.dims[0]:
            raise ModelLoadError(
                f"feature dim {h.shape[1]} does not match model input {self.dims[0]}"
            )
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        logits = h @ self.weights[-1] + self.biases[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


class TorchvisionModel:
    """Pretrained torchvision classifier over image tensors (lazy import)."""

    def __init__(self, name: str, device: str = "cpu"):
        try:
            import torch
            import torchvision.models as tvm
        except ImportError as exc:
            raise ModelLoadError(
                "torchvision backend needs the 'torch' extra installed"
            ) from exc
        try:
            weights = tvm.get_model_weights(name).DEFAULT
            self.model = tvm.get_model(name, weights=weights).to(device).eval()
            self.transform = weights.transforms()
        except Exception as exc:
            raise ModelLoadError(f"cannot load torchvision model {name!r}: {exc}") from exc
        self.torch = torch
        self.device = device
        self.num_classes = None  # known after the first batch

    def predict(self, batch) -> np.ndarray:
        with self.torch.no_grad():
            logits = self.model(batch.to(self.device))
            probs = self.torch.softmax(logits, dim=1).cpu().numpy()
        self.num_classes = probs.shape[1]
        return probs


def load_model(identifier: str, device: str = "cpu"):
    if ":" not in identifier:
        raise ModelLoadError(
            f"model identifier {identifier!r} must look like constant:<C>, "
            "json:<path>, or torchvision:<name>"
        )
    kind, arg = identifier.split(":", 1)
    if kind == "constant":
        try:
            return ConstantModel(int(arg))
        except ValueError as exc:
            raise ModelLoadError(f"bad class count in {identifier!r}") from exc
    if kind == "json":
        return JsonMlpModel(arg)
    if kind == "torchvision":
        return TorchvisionModel(arg, device)
    raise ModelLoadError(f"unknown model backend {kind!r}")
