"""Deterministic simulation of owners encrypting images for a trainer.

Owners hold private images and the shared key; they only ever hand out
SHC1 payload bytes.  The trainer holds a model whose frozen front-end
decrypts coefficients, and its operations (the ``trainer_*`` functions and
``TrainerState`` methods) take payload bytes, hyperparameters and models,
never images.  Evaluation on raw test images happens in the harness, on the
owners' side, after the decryption stage has been stripped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import model as nn
from .codec import shdec
from .errors import InvalidParameterError, ProtocolError, WireError
from .rasters import read_idx_images, read_idx_labels
from .shearlet_core import BoundaryMode, GeneratorSpec, ShearletSystem, build_system, derive_key
from .wire import decode_payload, encode_payload

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


def generate_shapes_dataset(n: int, height: int = 32, width: int = 32, seed: int = 0):
    """Balanced disks (label 0) and axis-aligned squares (label 1).

    Shapes are drawn at value 1.0 over a background of ``0.1 * U(0, 1)``
    noise.  Returns ``(images, labels)`` with shapes ``(n, H, W)``, ``(n,)``.
    """
    if n < 1:
        raise InvalidParameterError("dataset size must be positive")
    if height < 16 or width < 16:
        raise InvalidParameterError("shape images need to be at least 16x16")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    rows, cols = np.mgrid[:height, :width]
    smallest = min(height, width)
    images = np.empty((n, height, width))
    for i, label in enumerate(labels):
        size = rng.uniform(0.25 * smallest, 0.35 * smallest)
        margin = size + 1
        cy = rng.uniform(margin, height - 1 - margin)
        cx = rng.uniform(margin, width - 1 - margin)
        img = 0.1 * rng.random((height, width))
        if label == 0:
            inside = (rows - cy) ** 2 + (cols - cx) ** 2 <= size**2
        else:
            inside = (np.abs(rows - cy) <= size) & (np.abs(cols - cx) <= size)
        img[inside] = 1.0
        images[i] = img
    return images, labels.astype(np.int64)


# ---------------------------------------------------------------------------
# Owners
# ---------------------------------------------------------------------------


@dataclass
class Owner:
    owner_id: int
    images: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    key: GeneratorSpec = field(repr=False)
    sequence: int = 0

    def __len__(self) -> int:
        return len(self.labels)


def owner_emit_batch(o: Owner, system: ShearletSystem, indices: Sequence[int]) -> list[bytes]:
    """Encrypt and serialize the selected private images."""
    if system.fingerprint != o.key.fingerprint:
        raise ProtocolError("owner key and shearlet system disagree")
    out = []
    for i in indices:
        if not 0 <= i < len(o):
            raise IndexError(f"owner {o.owner_id} has no sample {i}")
        c = shdec(o.images[i], system)
        out.append(encode_payload(c, int(o.labels[i]), o.owner_id, o.sequence))
        o.sequence += 1
    return out


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepMetrics:
    round: int
    loss: float
    accuracy: float
    batch_size: int
    dropped: int


@dataclass(frozen=True)
class TrainerState:
    model: nn.Model
    payload_log: tuple[tuple[int, int, int], ...] = ()
    round: int = 0
    history: tuple[StepMetrics, ...] = ()
    dropped: int = 0

    @property
    def fingerprint(self) -> int:
        return self.model.front_end.fingerprint

    def round_metrics(self) -> list[tuple[int, float, float]]:
        """Sample-weighted ``(round, loss, accuracy)`` for every round seen."""
        out = []
        for r in sorted({m.round for m in self.history}):
            steps = [m for m in self.history if m.round == r and m.batch_size]
            n = sum(m.batch_size for m in steps)
            if not n:
                continue
            out.append(
                (
                    r,
                    sum(m.loss * m.batch_size for m in steps) / n,
                    sum(m.accuracy * m.batch_size for m in steps) / n,
                )
            )
        return out


def trainer_init(m: nn.Model) -> TrainerState:
    if m.front_end is None:
        raise InvalidParameterError("the trainer only runs models with a decryption front-end")
    return TrainerState(model=m)


def _decode_batch(t: TrainerState, payloads: Sequence[bytes]):
    decoded, dropped = [], 0
    for raw in payloads:
        try:
            decoded.append(decode_payload(raw))
        except WireError as exc:
            dropped += 1
            logger.warning("dropping payload: %s", exc)
    fps = {p.key_fingerprint for p in decoded}
    if len(fps) > 1:
        raise ProtocolError(f"batch mixes {len(fps)} key fingerprints")
    if fps and fps != {t.fingerprint}:
        raise ProtocolError("payload fingerprint does not match the model's decryption key")
    decoded.sort(key=lambda p: (p.owner_id, p.sequence))
    return decoded, dropped


def trainer_ingest_and_step(
    t: TrainerState, payloads: Sequence[bytes], learning_rate: float
) -> TrainerState:
    """Decode a payload batch and take one SGD step on it.

    Payloads failing their integrity check are dropped and counted; a batch
    mixing keys is rejected outright.
    """
    decoded, dropped = _decode_batch(t, payloads)
    if not decoded:
        metrics = StepMetrics(t.round, float("nan"), float("nan"), 0, dropped)
        return replace(t, history=t.history + (metrics,), dropped=t.dropped + dropped)
    coeffs = [p.to_coefficient_set() for p in decoded]
    labels = np.array([p.label for p in decoded])
    acc = nn.accuracy(t.model, coeffs, labels)
    new_model, loss = nn.sgd_step(t.model, coeffs, labels, learning_rate)
    log = tuple((p.owner_id, p.sequence, p.key_fingerprint) for p in decoded)
    metrics = StepMetrics(t.round, loss, acc, len(decoded), dropped)
    return replace(
        t,
        model=new_model,
        payload_log=t.payload_log + log,
        history=t.history + (metrics,),
        dropped=t.dropped + dropped,
    )


def trainer_next_round(t: TrainerState) -> TrainerState:
    return replace(t, round=t.round + 1)


def trainer_predict(t: TrainerState, payloads: Sequence[bytes]) -> np.ndarray:
    """Predicted classes for payloads, in (owner_id, sequence) order."""
    decoded, _ = _decode_batch(t, payloads)
    if not decoded:
        return np.zeros(0, dtype=np.int64)
    logits = nn.forward(t.model, [p.to_coefficient_set() for p in decoded])
    return np.argmax(logits, axis=-1)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    num_owners: int = 4
    samples_per_owner: int = 250
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.05
    master_seed: int = 0
    dataset: str = "shapes"
    image_size: int = 32
    test_samples: int = 200
    key: GeneratorSpec | None = None
    idx_images: str | None = None
    idx_labels: str | None = None

    def __post_init__(self):
        for name in ("num_owners", "samples_per_owner", "epochs", "batch_size", "image_size"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise InvalidParameterError("learning_rate must be positive")
        if self.batch_size > self.num_owners * self.samples_per_owner:
            raise InvalidParameterError("batch_size exceeds the number of training samples")
        if self.dataset not in ("shapes", "idx"):
            raise InvalidParameterError(f"unknown dataset kind {self.dataset!r}")
        if self.dataset == "idx" and not (self.idx_images and self.idx_labels):
            raise InvalidParameterError("idx dataset needs image and label files")


@dataclass
class SimReport:
    rounds: list[tuple[int, float, float]]
    raw_rounds: list[tuple[int, float, float]]
    test_accuracy: float
    raw_test_accuracy: float
    coefficient_test_accuracy: float
    label_agreement: float
    payload_bytes: int
    payload_count: int
    dropped: int
    fingerprint: int
    config: SimConfig
    model: nn.Model = field(repr=False, default=None)

    def to_text(self) -> str:
        lines = [
            f"round={r} loss={loss:.6f} accuracy={acc:.4f} raw_loss={rl:.6f} raw_accuracy={ra:.4f}"
            for (r, loss, acc), (_, rl, ra) in zip(self.rounds, self.raw_rounds)
        ]
        cfg = self.config
        summary = {
            "owners": cfg.num_owners,
            "samples_per_owner": cfg.samples_per_owner,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "seed": cfg.master_seed,
            "key_fingerprint": f"{self.fingerprint:016x}",
            "test_accuracy": f"{self.test_accuracy:.4f}",
            "raw_test_accuracy": f"{self.raw_test_accuracy:.4f}",
            "coefficient_test_accuracy": f"{self.coefficient_test_accuracy:.4f}",
            "label_agreement": f"{self.label_agreement:.4f}",
            "payload_count": self.payload_count,
            "payload_bytes": self.payload_bytes,
            "dropped": self.dropped,
        }
        lines.append("[summary]")
        lines += [f"{k}={v}" for k, v in summary.items()]
        return "\n".join(lines) + "\n"


def _seeds(master_seed: int, count: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(count)]


def _load_data(cfg: SimConfig, data_seed: int, test_seed: int):
    n_train = cfg.num_owners * cfg.samples_per_owner
    if cfg.dataset == "shapes":
        train = generate_shapes_dataset(n_train, cfg.image_size, cfg.image_size, data_seed)
        test = generate_shapes_dataset(cfg.test_samples, cfg.image_size, cfg.image_size, test_seed)
        return train, test
    images = read_idx_images(cfg.idx_images)
    labels = read_idx_labels(cfg.idx_labels)
    if len(images) != len(labels):
        raise InvalidParameterError("IDX image and label counts differ")
    if len(images) <= n_train:
        raise InvalidParameterError(f"IDX set has {len(images)} samples, need more than {n_train}")
    end = min(len(images), n_train + cfg.test_samples)
    return (images[:n_train], labels[:n_train]), (images[n_train:end], labels[n_train:end])


def run_simulation(cfg: SimConfig) -> SimReport:
    """Train over encrypted payloads and, alongside, a raw-image twin.

    Both pipelines share the initialization and the batch schedule, so their
    trajectories differ only by the float32 quantization on the wire.
    """
    data_seed, test_seed, init_seed, order_seed, key_seed = _seeds(cfg.master_seed, 5)
    (x_train, y_train), (x_test, y_test) = _load_data(cfg, data_seed, test_seed)
    height, width = x_train.shape[1:]
    num_classes = int(max(y_train.max(), y_test.max())) + 1

    key = cfg.key or derive_key(key_seed, 2, (3, 5), BoundaryMode.TRUNCATED, True)
    system = build_system(key, height, width)

    owners = [
        Owner(
            owner_id=o + 1,
            images=x_train[o * cfg.samples_per_owner : (o + 1) * cfg.samples_per_owner],
            labels=y_train[o * cfg.samples_per_owner : (o + 1) * cfg.samples_per_owner],
            key=key,
        )
        for o in range(cfg.num_owners)
    ]

    initial = nn.init_model(height, width, num_classes, init_seed, front_end=system)
    trainer = trainer_init(initial)
    raw_model = nn.strip_decryption(initial)
    raw_history = []

    rng = np.random.default_rng(order_seed)
    n_train = len(y_train)
    payload_bytes = payload_count = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        raw_losses, raw_correct = [], 0
        for start in range(0, n_train, cfg.batch_size):
            batch = np.sort(order[start : start + cfg.batch_size])
            payloads = []
            for o in owners:
                lo = (o.owner_id - 1) * cfg.samples_per_owner
                local = [int(i - lo) for i in batch if lo <= i < lo + cfg.samples_per_owner]
                if local:
                    payloads += owner_emit_batch(o, system, local)
            payload_bytes += sum(len(p) for p in payloads)
            payload_count += len(payloads)
            trainer = trainer_ingest_and_step(trainer, payloads, cfg.learning_rate)

            raw_correct += int(np.sum(np.argmax(nn.forward(raw_model, x_train[batch]), -1) == y_train[batch]))
            raw_model, loss = nn.sgd_step(raw_model, x_train[batch], y_train[batch], cfg.learning_rate)
            raw_losses.append(loss * len(batch))
        raw_history.append((epoch, sum(raw_losses) / n_train, raw_correct / n_train))
        trainer = trainer_next_round(trainer)

    # owners' side harness: strip the front-end and evaluate on raw images
    stripped = nn.strip_decryption(trainer.model)
    stripped_pred = np.argmax(nn.forward(stripped, x_test), axis=-1)
    test_owner = Owner(owner_id=0, images=x_test, labels=y_test, key=key)
    coeff_pred = trainer_predict(trainer, owner_emit_batch(test_owner, system, range(len(y_test))))

    return SimReport(
        rounds=trainer.round_metrics(),
        raw_rounds=raw_history,
        test_accuracy=float(np.mean(stripped_pred == y_test)),
        raw_test_accuracy=nn.accuracy(raw_model, x_test, y_test),
        coefficient_test_accuracy=float(np.mean(coeff_pred == y_test)),
        label_agreement=float(np.mean(coeff_pred == stripped_pred)),
        payload_bytes=payload_bytes,
        payload_count=payload_count,
        dropped=trainer.dropped,
        fingerprint=system.fingerprint,
        config=cfg,
        model=trainer.model,
    )
