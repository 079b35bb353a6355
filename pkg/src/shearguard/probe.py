"""Decision-boundary leakage of mixup-style training.

A trainer that receives pixel-averaged image pairs labelled with averaged
one-hot labels is handed, by construction, points where a well-fit
two-class model outputs 50/50.  ``run_probe`` trains three fresh models on
what a trainer would see under three regimes and measures how close those
trainer-visible points sit to the decision boundary:

* pure: original images with hard labels;
* mixed: ``lam * x_i + (1 - lam) * x_j`` with soft labels, pairs of
  different classes;
* shearlet: keyed coefficient payloads, decrypted inside the model.  The
  trainer can only look at coefficients, so the probe feeds coefficient
  bands, naively rescaled to [0, 1], to the stripped model.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import model as nn
from .codec import CoefficientSet, analyze
from .errors import InvalidParameterError
from .shearlet_core import BoundaryMode, build_system, derive_key


@dataclass(frozen=True)
class MixedSample:
    image: np.ndarray
    soft_label: np.ndarray
    sources: tuple[int, int]
    lam: float


def mixup_encode(x1, y1: int, x2, y2: int, lam: float, num_classes: int = 2, sources=(-1, -1)) -> MixedSample:
    if y1 == y2:
        raise InvalidParameterError("mixup pairs must have different labels")
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterError(f"mixing weight must lie in [0, 1], got {lam}")
    eye = np.eye(num_classes)
    image = lam * np.asarray(x1, dtype=float) + (1.0 - lam) * np.asarray(x2, dtype=float)
    label = lam * eye[y1] + (1.0 - lam) * eye[y2]
    return MixedSample(image, label, tuple(sources), float(lam))


def boundary_gap(m: nn.Model, x, num_classes: int = 2):
    """``|p_1 - 0.5|`` for a two-class model; zero exactly on the boundary.

    Returns a float for one input and an array for a batch.
    """
    if num_classes != 2 or m.num_classes != 2:
        raise InvalidParameterError("boundary gap is only defined for two-class models")
    logits = nn.forward(m, x)
    # |sigmoid(d) - 0.5| = 0.5 * |tanh(d / 2)|, exact zero when logits tie
    gap = 0.5 * np.abs(np.tanh((logits[..., 1] - logits[..., 0]) / 2.0))
    return float(gap) if np.ndim(gap) == 0 else gap


def _rescale(a: np.ndarray) -> np.ndarray:
    lo = a.min(axis=(-2, -1), keepdims=True)
    span = a.max(axis=(-2, -1), keepdims=True) - lo
    return (a - lo) / np.where(span > 0, span, 1.0)


@dataclass
class BoundaryReport:
    mixed_mean_gap: float
    mixed_max_gap: float
    init_mixed_mean_gap: float
    pure_mean_confidence: float
    pure_mean_gap: float
    shearlet_pathway_mean_gap: float
    coefficient_probe_mean_gap: float
    coefficient_probe_near_boundary: float
    gaps: list[tuple[int, int, float]] = field(repr=False)
    config: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"{k}={v}" for k, v in self.config.items()]
        for name in (
            "mixed_mean_gap", "mixed_max_gap", "init_mixed_mean_gap", "pure_mean_confidence",
            "pure_mean_gap", "shearlet_pathway_mean_gap", "coefficient_probe_mean_gap",
            "coefficient_probe_near_boundary",
        ):
            lines.append(f"{name}={getattr(self, name):.6f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source_i", "source_j", "gap"])
            for i, j, g in self.gaps:
                writer.writerow([i, j, f"{g:.9g}"])

    def as_dict(self) -> dict:
        return asdict(self)


def make_mixed_set(images: np.ndarray, labels: np.ndarray, lam: float, rng: np.random.Generator):
    """Pair every sample of the rarer class with a distinct sample of another class."""
    classes = np.unique(labels)
    if len(classes) != 2:
        raise InvalidParameterError("probe needs exactly two classes")
    a = rng.permutation(np.flatnonzero(labels == classes[0]))
    b = rng.permutation(np.flatnonzero(labels == classes[1]))
    return [
        mixup_encode(images[i], int(labels[i]), images[j], int(labels[j]), lam, 2, (int(i), int(j)))
        for i, j in zip(a, b)
    ]


def run_probe(
    images: np.ndarray,
    labels: np.ndarray,
    lam: float = 0.5,
    epochs: int = 30,
    seed: int = 0,
    batch_size: int = 32,
    learning_rate: float = 0.05,
) -> BoundaryReport:
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels)
    if images.ndim != 3 or len(images) != len(labels):
        raise InvalidParameterError("expected an (n, H, W) image stack with one label per image")
    counts = np.bincount(labels, minlength=2)
    if len(counts) != 2 or counts.min() < 2:
        raise InvalidParameterError("probe needs a two-class dataset with at least two samples per class")
    _, height, width = images.shape
    init_seed, pair_seed, order_seed, key_seed = (
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(4)
    )

    def fresh(front_end=None):
        return nn.init_model(height, width, 2, init_seed, front_end)

    # pure regime: trainer sees the images themselves
    pure, _ = nn.fit(fresh(), images, labels, epochs, batch_size, learning_rate, order_seed)
    pure_probs = nn.predict_proba(pure, images)
    pure_conf = float(np.mean(pure_probs.max(axis=1)))
    pure_gap = float(np.mean(boundary_gap(pure, images)))

    # mixed regime: trainer sees averaged pairs with flip labels
    mixed_set = make_mixed_set(images, labels, lam, np.random.default_rng(pair_seed))
    mixed_x = np.stack([s.image for s in mixed_set])
    mixed_y = np.stack([s.soft_label for s in mixed_set])
    init_gap = float(np.mean(boundary_gap(fresh(), mixed_x)))
    mixed, _ = nn.fit(fresh(), mixed_x, mixed_y, epochs, batch_size, learning_rate, order_seed)
    gaps = boundary_gap(mixed, mixed_x)

    # shearlet regime: trainer sees keyed coefficients only
    system = build_system(derive_key(key_seed, 2, (3, 5), BoundaryMode.TRUNCATED), height, width)
    coeffs = analyze(images, system)
    spec = system.spec
    csets = [
        CoefficientSet(c, spec.num_scales, spec.shears_per_scale, spec.boundary_mode, system.fingerprint)
        for c in coeffs
    ]
    shear, _ = nn.fit(fresh(system), csets, labels, epochs, batch_size, learning_rate, order_seed)
    pathway_gap = float(np.mean(boundary_gap(shear, csets)))
    naive = _rescale(coeffs.real).reshape(-1, height, width)
    probe_gaps = boundary_gap(nn.strip_decryption(shear), naive)

    return BoundaryReport(
        mixed_mean_gap=float(np.mean(gaps)),
        mixed_max_gap=float(np.max(gaps)),
        init_mixed_mean_gap=init_gap,
        pure_mean_confidence=pure_conf,
        pure_mean_gap=pure_gap,
        shearlet_pathway_mean_gap=pathway_gap,
        coefficient_probe_mean_gap=float(np.mean(probe_gaps)),
        coefficient_probe_near_boundary=float(np.mean(probe_gaps < 0.05)),
        gaps=[(s.sources[0], s.sources[1], float(g)) for s, g in zip(mixed_set, gaps)],
        config={
            "lambda": lam,
            "epochs": epochs,
            "seed": seed,
            "samples": len(labels),
            "batch_size": batch_size,
            "learning_rate": learning_rate,
            "key_fingerprint": f"{system.fingerprint:016x}",
        },
    )
