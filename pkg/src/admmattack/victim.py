"""Bundled query-able victim classifiers and a self-contained trainer.

A softmax-regression model and a one-hidden-layer ReLU MLP, trained by
mini-batch SGD on cross-entropy, with bit-exact binary weight
serialization. A procedurally generated 8x8 "digits" dataset (10 class
templates plus seeded pixel noise, clipped to [0,1]) stands in for MNIST
at desk scale.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream

MAGIC = b"SPAV1"
FORMAT_VERSION = 1

_MODEL_CODES = {"softmax": 0, "mlp": 1}
_CODE_MODELS = {v: k for k, v in _MODEL_CODES.items()}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass
class SoftmaxModel:
    weights: np.ndarray  # (K, d)
    biases: np.ndarray   # (K,)

    kind = "softmax"

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(x, dtype=np.float64) + self.biases

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        if np.asarray(x).shape[-1] != self.dim:
            raise ValueError("input dimension mismatch")
        return softmax(self.logits(x))

    def predict_label(self, x: np.ndarray) -> int:
        return int(np.argmax(self.predict_scores(x)))

    def arrays(self):
        return [self.weights, self.biases]

    def copy(self) -> "SoftmaxModel":
        return SoftmaxModel(self.weights.copy(), self.biases.copy())

    @staticmethod
    def init(d: int, k: int, rng: RngStream, scale: float = 0.01) -> "SoftmaxModel":
        return SoftmaxModel(scale * rng.standard_normal((k, d)), np.zeros(k))


@dataclass
class MlpModel:
    w1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (K, h)
    b2: np.ndarray  # (K,)

    kind = "mlp"

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w2.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(self.w1 @ np.asarray(x, dtype=np.float64) + self.b1, 0.0)
        return self.w2 @ h + self.b2

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        if np.asarray(x).shape[-1] != self.dim:
            raise ValueError("input dimension mismatch")
        return softmax(self.logits(x))

    def predict_label(self, x: np.ndarray) -> int:
        return int(np.argmax(self.predict_scores(x)))

    def arrays(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "MlpModel":
        return MlpModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    @staticmethod
    def init(d: int, k: int, h: int, rng: RngStream, scale: float = 0.1) -> "MlpModel":
        return MlpModel(
            scale * rng.standard_normal((h, d)),
            np.zeros(h),
            scale * rng.standard_normal((k, h)),
            np.zeros(k),
        )


@dataclass
class Dataset:
    inputs: np.ndarray  # (n, d) in [0,1]
    labels: np.ndarray  # (n,) int class indices

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on sample count")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def to_csv(self, path) -> None:
        """One row per sample: d values then the label."""
        with open(path, "w") as fh:
            for x, y in zip(self.inputs, self.labels):
                fh.write(",".join(repr(float(v)) for v in x) + f",{int(y)}\n")

    @staticmethod
    def from_csv(path) -> "Dataset":
        rows, labels = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                rows.append([float(v) for v in parts[:-1]])
                labels.append(int(parts[-1]))
        if not rows:
            raise ValueError(f"no samples in {path}")
        return Dataset(np.array(rows), np.array(labels))


def digits8x8(
    n_per_class: int = 60,
    seed: int = 1234,
    noise_sd: float = 0.15,
    num_classes: int = 10,
) -> Dataset:
    """Procedural 8x8 dataset: fixed class templates + Gaussian pixel noise."""
    rng = RngStream(seed)
    template_rng = rng.child(0)
    templates = template_rng.uniform(0.0, 1.0, size=(num_classes, 64))
    sample_rng = rng.child(1)
    xs, ys = [], []
    for c in range(num_classes):
        noise = sample_rng.standard_normal((n_per_class, 64)) * noise_sd
        xs.append(np.clip(templates[c][None, :] + noise, 0.0, 1.0))
        ys.append(np.full(n_per_class, c))
    inputs = np.concatenate(xs)
    labels = np.concatenate(ys)
    order = rng.child(2).permutation(inputs.shape[0])
    return Dataset(inputs[order], labels[order])


# -- training ----------------------------------------------------------


def _grads_softmax(model: SoftmaxModel, X: np.ndarray, Y: np.ndarray):
    """Cross-entropy gradients for a minibatch; Y is int labels."""
    n = X.shape[0]
    logits = X @ model.weights.T + model.biases
    p = softmax(logits)
    p[np.arange(n), Y] -= 1.0
    p /= n
    return [p.T @ X, p.sum(axis=0)]


def _grads_mlp(model: MlpModel, X: np.ndarray, Y: np.ndarray):
    n = X.shape[0]
    pre = X @ model.w1.T + model.b1
    h = np.maximum(pre, 0.0)
    logits = h @ model.w2.T + model.b2
    p = softmax(logits)
    p[np.arange(n), Y] -= 1.0
    p /= n
    g_w2 = p.T @ h
    g_b2 = p.sum(axis=0)
    dh = (p @ model.w2) * (pre > 0.0)
    g_w1 = dh.T @ X
    g_b1 = dh.sum(axis=0)
    return [g_w1, g_b1, g_w2, g_b2]


def cross_entropy(model, X: np.ndarray, Y: np.ndarray) -> float:
    logits = np.array([model.logits(x) for x in X])
    p = softmax(logits)
    return float(-np.mean(np.log(np.clip(p[np.arange(len(Y)), Y], 1e-300, None))))


def train(model, data: Dataset, epochs: int, lr: float, rng: RngStream, batch_size: int = 32):
    """Mini-batch SGD on cross-entropy; returns a trained copy."""
    if data.n == 0:
        raise ValueError("empty dataset")
    model = model.copy()
    grads_fn = _grads_softmax if isinstance(model, SoftmaxModel) else _grads_mlp
    for _ in range(epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, batch_size):
            idx = order[start : start + batch_size]
            gs = grads_fn(model, data.inputs[idx], data.labels[idx])
            for arr, g in zip(model.arrays(), gs):
                arr -= lr * g
    return model


def accuracy(model, data: Dataset) -> float:
    correct = sum(model.predict_label(x) == y for x, y in zip(data.inputs, data.labels))
    return correct / data.n


# -- serialization -----------------------------------------------------


class WeightFormatError(ValueError):
    """Malformed, truncated, or wrong-version weight file."""


def save_weights(model, path) -> None:
    """Versioned little-endian binary plus a JSON sidecar of hyperparameters."""
    path = Path(path)
    arrays = model.arrays()
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", _MODEL_CODES[model.kind])
    blob += struct.pack("<I", len(arrays))
    for arr in arrays:
        blob += struct.pack("<I", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<I", dim)
    for arr in arrays:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    path.write_bytes(bytes(blob))

    sidecar = {"model": model.kind, "d": model.dim, "num_classes": model.num_classes}
    if model.kind == "mlp":
        sidecar["hidden"] = model.hidden
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_weights(path):
    """Inverse of :func:`save_weights`; bit-exact round trip."""
    data = Path(path).read_bytes()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(data):
            raise WeightFormatError(
                f"truncated weight file: needed {n} bytes for {what} at offset {off}, "
                f"file has {len(data)} bytes"
            )
        chunk = data[off : off + n]
        off += n
        return chunk

    magic = take(len(MAGIC), "magic")
    if magic != MAGIC:
        if magic[:4] == MAGIC[:4]:
            raise WeightFormatError(
                f"unsupported weight format version {magic[4:].decode(errors='replace')!r}, "
                f"this build reads version {MAGIC[4:].decode()!r}"
            )
        raise WeightFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (model_code,) = struct.unpack("<I", take(4, "model code"))
    if model_code not in _CODE_MODELS:
        raise WeightFormatError(f"unknown model code {model_code}")
    (n_arrays,) = struct.unpack("<I", take(4, "array count"))
    shapes = []
    for i in range(n_arrays):
        (ndim,) = struct.unpack("<I", take(4, f"array {i} ndim"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, f"array {i} shape"))
        shapes.append(dims)
    arrays = []
    for i, shape in enumerate(shapes):
        count = int(np.prod(shape)) if shape else 1
        raw = take(8 * count, f"array {i} data")
        arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())

    kind = _CODE_MODELS[model_code]
    try:
        if kind == "softmax":
            return SoftmaxModel(*arrays)
        return MlpModel(*arrays)
    except TypeError as exc:
        raise WeightFormatError(f"array count mismatch for {kind}: {exc}") from exc
