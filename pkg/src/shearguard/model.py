"""Small numpy convnet with an optional frozen decryption front-end.

Architecture: [shrec] -> conv 3x3 (8 filters, zero padding) -> ReLU ->
2x2 average pool -> dense(64) -> ReLU -> dense(num_classes).
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codec import CoefficientSet, shrec_batch
from .errors import (
    FormatError,
    IntegrityError,
    InvalidInputError,
    InvalidParameterError,
    KeyMismatchError,
    LengthError,
)
from .shearlet_core import ShearletSystem

NUM_FILTERS = 8
HIDDEN = 64
PARAM_NAMES = ("conv_w", "conv_b", "dense1_w", "dense1_b", "dense2_w", "dense2_b")

ModelInput = Union[np.ndarray, CoefficientSet, Sequence[CoefficientSet]]


@dataclass(frozen=True, eq=False)
class Model:
    height: int
    width: int
    num_classes: int
    params: dict[str, np.ndarray]
    front_end: ShearletSystem | None = None
    clamp: bool = True

    @property
    def decrypts(self) -> bool:
        return self.front_end is not None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())


def parameter_shapes(height: int, width: int, num_classes: int) -> dict[str, tuple[int, ...]]:
    flat = NUM_FILTERS * (height // 2) * (width // 2)
    return {
        "conv_w": (NUM_FILTERS, 3, 3),
        "conv_b": (NUM_FILTERS,),
        "dense1_w": (flat, HIDDEN),
        "dense1_b": (HIDDEN,),
        "dense2_w": (HIDDEN, num_classes),
        "dense2_b": (num_classes,),
    }


def init_model(
    height: int,
    width: int,
    num_classes: int,
    seed: int = 0,
    front_end: ShearletSystem | None = None,
) -> Model:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    if height < 2 or width < 2 or height % 2 or width % 2:
        raise InvalidParameterError("model input size must be even in both dimensions")
    if num_classes < 2:
        raise InvalidParameterError("need at least two classes")
    if front_end is not None and front_end.shape != (height, width):
        raise InvalidParameterError("front-end system size does not match the model input")
    rng = np.random.default_rng(seed)
    shapes = parameter_shapes(height, width, num_classes)
    fans = {
        "conv_w": (9, 9 * NUM_FILTERS),
        "dense1_w": shapes["dense1_w"],
        "dense2_w": shapes["dense2_w"],
    }
    params = {}
    for name in PARAM_NAMES:
        if name in fans:
            fan_in, fan_out = fans[name]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, shapes[name])
        else:
            params[name] = np.zeros(shapes[name])
    return Model(height, width, num_classes, params, front_end)


def strip_decryption(m: Model) -> Model:
    """Drop the decryption front-end so the model accepts raw images."""
    if m.front_end is None:
        warnings.warn("model has no decryption front-end; returning it unchanged", stacklevel=2)
        return m
    return replace(m, front_end=None)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _as_images(m: Model, x: ModelInput) -> tuple[np.ndarray, bool]:
    """Resolve the input to an ``(N, H, W)`` image batch; flag single inputs."""
    if isinstance(x, CoefficientSet):
        x, single = [x], True
    elif isinstance(x, np.ndarray):
        single = x.ndim == 2
    else:
        x, single = list(x), False
        if not x:
            raise InvalidParameterError("empty batch")
        if not all(isinstance(c, CoefficientSet) for c in x):
            x, single = np.asarray(x, dtype=float), False
    if isinstance(x, list):
        if m.front_end is None:
            raise InvalidInputError("raw-image model cannot consume shearlet coefficients")
        images = shrec_batch(x, m.front_end, clamp=m.clamp)
    else:
        if m.front_end is not None:
            raise InvalidInputError("decrypting model expects shearlet coefficients, got an image")
        images = np.asarray(x, dtype=float)
        if single:
            images = images[None]
    if images.ndim != 3 or images.shape[1:] != (m.height, m.width):
        raise InvalidParameterError(f"input size {images.shape[1:]} does not match model {(m.height, m.width)}")
    if images.shape[0] == 0:
        raise InvalidParameterError("empty batch")
    return images, single


def _patches(images: np.ndarray) -> np.ndarray:
    padded = np.pad(images, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(padded, (3, 3), axis=(1, 2))
    return win.reshape(*images.shape, 9)


def _forward(m: Model, images: np.ndarray) -> dict[str, np.ndarray]:
    p = m.params
    n = images.shape[0]
    patches = _patches(images)
    z1 = patches @ p["conv_w"].reshape(NUM_FILTERS, 9).T + p["conv_b"]
    a1 = np.maximum(z1, 0.0)
    h2, w2 = m.height // 2, m.width // 2
    pooled = a1.reshape(n, h2, 2, w2, 2, NUM_FILTERS).mean(axis=(2, 4))
    flat = pooled.reshape(n, -1)
    z2 = flat @ p["dense1_w"] + p["dense1_b"]
    a2 = np.maximum(z2, 0.0)
    logits = a2 @ p["dense2_w"] + p["dense2_b"]
    return {"patches": patches, "z1": z1, "flat": flat, "z2": z2, "a2": a2, "logits": logits}


def forward(m: Model, x: ModelInput) -> np.ndarray:
    """Logits for one input (``(C,)``) or a batch (``(N, C)``)."""
    images, single = _as_images(m, x)
    logits = _forward(m, images)["logits"]
    return logits[0] if single else logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def predict_proba(m: Model, x: ModelInput) -> np.ndarray:
    return softmax(forward(m, x))


def as_soft_labels(y, num_classes: int, n: int) -> np.ndarray:
    """Accept integer class indices or an ``(N, C)`` probability array."""
    y = np.asarray(y)
    if y.ndim == 0:
        y = y[None]
    if y.ndim == 1 and n == 1 and y.size == num_classes and not np.issubdtype(y.dtype, np.integer):
        y = y[None]
    if y.ndim == 1 and np.issubdtype(y.dtype, np.integer):
        if np.any((y < 0) | (y >= num_classes)):
            raise InvalidParameterError("class index out of range")
        y = np.eye(num_classes)[y]
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape != (n, num_classes):
        raise InvalidParameterError(f"labels have shape {y.shape}, expected {(n, num_classes)}")
    if np.any(y < 0) or np.any(np.abs(y.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidParameterError("soft labels must be non-negative and sum to 1")
    return y


def loss_and_gradient(m: Model, x: ModelInput, y) -> tuple[float, dict[str, np.ndarray]]:
    """Mean soft-label cross-entropy over the batch and its parameter gradient.

    The decryption front-end is fixed, so no gradient is produced for it.
    """
    images, _ = _as_images(m, x)
    n = images.shape[0]
    y = as_soft_labels(y, m.num_classes, n)
    cache = _forward(m, images)
    logp = log_softmax(cache["logits"])
    loss = float(-np.sum(y * logp) / n)

    p = m.params
    d_logits = (np.exp(logp) * y.sum(axis=1, keepdims=True) - y) / n
    grads = {
        "dense2_w": cache["a2"].T @ d_logits,
        "dense2_b": d_logits.sum(axis=0),
    }
    d_z2 = (d_logits @ p["dense2_w"].T) * (cache["z2"] > 0)
    grads["dense1_w"] = cache["flat"].T @ d_z2
    grads["dense1_b"] = d_z2.sum(axis=0)
    d_pooled = (d_z2 @ p["dense1_w"].T).reshape(n, m.height // 2, m.width // 2, NUM_FILTERS)
    d_a1 = np.repeat(np.repeat(d_pooled, 2, axis=1), 2, axis=2) * 0.25
    d_z1 = d_a1 * (cache["z1"] > 0)
    grads["conv_w"] = np.einsum("nhwk,nhwf->fk", cache["patches"], d_z1).reshape(NUM_FILTERS, 3, 3)
    grads["conv_b"] = d_z1.sum(axis=(0, 1, 2))
    return loss, {name: grads[name] for name in PARAM_NAMES}


def sgd_step(m: Model, x: ModelInput, y, learning_rate: float) -> tuple[Model, float]:
    """One plain SGD update; returns the new model and the pre-update batch loss."""
    if learning_rate < 0:
        raise InvalidParameterError("learning rate must be non-negative")
    loss, grads = loss_and_gradient(m, x, y)
    if learning_rate == 0:
        return m, loss
    params = {k: v - learning_rate * grads[k] for k, v in m.params.items()}
    return replace(m, params=params), loss


def _take(x: ModelInput, idx: np.ndarray) -> ModelInput:
    if isinstance(x, np.ndarray):
        return x[idx]
    return [x[i] for i in idx]


def fit(
    m: Model,
    x: ModelInput,
    y,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    seed: int = 0,
) -> tuple[Model, list[float]]:
    """Minibatch SGD with a seeded shuffle; returns the model and per-epoch mean loss."""
    n = len(x)
    y = as_soft_labels(y, m.num_classes, n)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            m, loss = sgd_step(m, _take(x, idx), y[idx], learning_rate)
            losses.append(loss * len(idx))
        history.append(sum(losses) / n)
    return m, history


def accuracy(m: Model, x: ModelInput, labels) -> float:
    return float(np.mean(np.argmax(forward(m, x), axis=-1) == np.asarray(labels)))


# ---------------------------------------------------------------------------
# SHMD checkpoints
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"SHMD"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<HHIIIIIQ")


def save_checkpoint(m: Model, path: str | Path) -> None:
    """Write ``m`` as: magic, header, f64 weights in declaration order, CRC-32."""
    flags = 1 if m.decrypts else 0
    fp = m.front_end.fingerprint if m.front_end is not None else 0
    body = CKPT_MAGIC + _CKPT_HEADER.pack(
        CKPT_VERSION, flags, m.height, m.width, m.num_classes, NUM_FILTERS, HIDDEN, fp
    )
    body += b"".join(np.ascontiguousarray(m.params[k], dtype="<f8").tobytes() for k in PARAM_NAMES)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path: str | Path, front_end: ShearletSystem | None = None) -> Model:
    """Read an SHMD file.  A decrypting checkpoint needs the matching system;
    without one the model is loaded stripped."""
    data = Path(path).read_bytes()
    head = len(CKPT_MAGIC) + _CKPT_HEADER.size
    if len(data) < head + 4:
        raise LengthError("checkpoint truncated")
    if data[:4] != CKPT_MAGIC:
        raise FormatError("not an SHMD checkpoint")
    if zlib.crc32(data[:-4]) != struct.unpack("<I", data[-4:])[0]:
        raise IntegrityError("checkpoint CRC-32 mismatch")
    version, flags, h, w, c, nf, hidden, fp = _CKPT_HEADER.unpack_from(data, 4)
    if version != CKPT_VERSION or nf != NUM_FILTERS or hidden != HIDDEN:
        raise FormatError("unsupported checkpoint layout")
    shapes = parameter_shapes(h, w, c)
    total = sum(int(np.prod(s)) for s in shapes.values())
    if len(data) != head + 8 * total + 4:
        raise LengthError("checkpoint size does not match its architecture")
    flat = np.frombuffer(data, dtype="<f8", count=total, offset=head)
    params, pos = {}, 0
    for name in PARAM_NAMES:
        size = int(np.prod(shapes[name]))
        params[name] = flat[pos : pos + size].reshape(shapes[name]).astype(float)
        pos += size
    system = None
    if flags & 1 and front_end is not None:
        if front_end.fingerprint != fp:
            raise KeyMismatchError("checkpoint was trained with a different key")
        system = front_end
    return Model(h, w, c, params, system)
