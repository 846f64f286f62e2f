"""Ring-of-Gaussians toy data and mode coverage metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RingMixture:
    n_modes: int = 8
    radius: float = 1.0
    std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        if self.radius <= 0 or self.std <= 0:
            raise ValueError("radius and std must be positive")

    @property
    def centers(self) -> np.ndarray:
        angles = 2.0 * np.pi * np.arange(self.n_modes) / self.n_modes
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


@dataclass
class LabeledBatch:
    points: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,) mode indices

    def __len__(self) -> int:
        return len(self.labels)


def _rng(seed_stream) -> np.random.Generator:
    if isinstance(seed_stream, np.random.Generator):
        return seed_stream
    return np.random.default_rng(seed_stream)


def sample(mix: RingMixture, n: int, seed_stream=None) -> LabeledBatch:
    """Uniform mode choice, then center + std * N(0, I).

    ``seed_stream`` is a Generator (advanced in place) or a seed; ``None``
    uses ``mix.seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(mix.seed if seed_stream is None else seed_stream)
    labels = rng.integers(0, mix.n_modes, size=n)
    noise = rng.standard_normal((n, 2))
    return LabeledBatch(mix.centers[labels] + mix.std * noise, labels)


def sample_mode(mix: RingMixture, mode: int, n: int, seed_stream=None) -> np.ndarray:
    rng = _rng(mix.seed if seed_stream is None else seed_stream)
    return mix.centers[mode] + mix.std * rng.standard_normal((n, 2))


def nearest_mode(points, mix: RingMixture) -> np.ndarray | int:
    """Index of the closest center; ties (up to rounding) go to the lowest index."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    d2 = ((pts[:, None, :] - mix.centers[None, :, :]) ** 2).sum(axis=-1)
    best = d2.min(axis=1, keepdims=True)
    idx = np.argmax(d2 <= best * (1.0 + 1e-12), axis=1)
    return int(idx[0]) if single else idx


def default_min_count(n: int) -> int:
    return max(1, n // 800)


def mode_coverage(samples, mix: RingMixture, capture_radius: float | None = None,
                  min_count: int | None = None) -> tuple[int, np.ndarray]:
    """Count modes with at least ``min_count`` samples within ``capture_radius`` of the center.

    Defaults: ``capture_radius = 3 * std`` and ``min_count = max(1, n // 800)``.
    """
    pts = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if capture_radius is None:
        capture_radius = 3.0 * mix.std
    if capture_radius <= 0:
        raise ValueError("capture_radius must be positive")
    if min_count is None:
        min_count = default_min_count(len(pts))
    d = np.sqrt(((pts[:, None, :] - mix.centers[None, :, :]) ** 2).sum(axis=-1))
    counts = (d <= capture_radius).sum(axis=0)
    return int((counts >= min_count).sum()), counts


def write_batch_csv(batch: LabeledBatch, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(batch.points, batch.labels):
            writer.writerow([repr(float(x)), repr(float(y)), int(label)])
    return path


def read_batch_csv(path) -> LabeledBatch:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    points = np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
    labels = np.array([int(r["label"]) for r in rows], dtype=int)
    return LabeledBatch(points, labels)
