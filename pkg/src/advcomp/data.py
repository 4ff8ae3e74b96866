"""Image batches, the binary dataset format and synthetic desk datasets.

Dataset file layout (all little-endian)::

    8 bytes   magic  b"ADSET\\x01\\x00\\x00"
    uint32    n      number of samples
    uint32    d      input dimension
    uint32    C      number of classes
    float32   n*d    row-major data, values in [0, 1]
    uint32    n      labels
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, LoadError

MAGIC = b"ADSET\x01\x00\x00"
_HEADER = struct.Struct("<8sIII")


@dataclass(frozen=True, eq=False)
class ImageBatch:
    """Inputs in [0, 1] with integer labels in [0, num_classes)."""

    data: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if data.ndim != 2:
            raise ConfigurationError(f"data must be 2-d (n, d), got shape {data.shape}")
        if labels.shape != (data.shape[0],):
            raise ConfigurationError("labels must be a vector with one entry per row")
        if data.size and (data.min() < 0.0 or data.max() > 1.0 or not np.isfinite(data).all()):
            raise ConfigurationError("data values must lie in [0, 1]")
        if self.num_classes < 2:
            raise ConfigurationError("need at least two classes")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ConfigurationError("labels must be valid class indices")
        data.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def subset(self, idx) -> "ImageBatch":
        idx = np.asarray(idx)
        return ImageBatch(self.data[idx], self.labels[idx], self.num_classes)


def save_dataset(batch: ImageBatch, path) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, batch.n, batch.dim, batch.num_classes)
    payload = np.ascontiguousarray(batch.data, dtype="<f4").tobytes()
    labels = np.ascontiguousarray(batch.labels, dtype="<u4").tobytes()
    path.write_bytes(header + payload + labels)


def load_dataset(path) -> ImageBatch:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise LoadError(f"{path}: file too short for a dataset header")
    magic, n, d, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise LoadError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * n * d + 4 * n
    if len(raw) != expected:
        raise LoadError(f"{path}: expected {expected} bytes for n={n}, d={d}, got {len(raw)}")
    off = _HEADER.size
    data = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=off + 4 * n * d)
    try:
        return ImageBatch(data.astype(np.float64), labels.astype(np.int64), int(c))
    except ConfigurationError as exc:
        raise LoadError(f"{path}: {exc}") from exc


def to_float32_grid(x: np.ndarray) -> np.ndarray:
    """Round to the values the dataset format can store exactly."""
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def gaussian_blobs(n, dim, num_classes, *, separation=0.35, std=0.1, seed=0) -> ImageBatch:
    """Isotropic Gaussian clusters clipped to the unit box.

    Class centres sit on a random set of directions around the box centre,
    ``separation`` apart on average; labels are balanced.
    """
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(num_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centres = 0.5 + 0.5 * separation * dirs
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    data = centres[labels] + std * rng.normal(size=(n, dim))
    data = to_float32_grid(np.clip(data, 0.0, 1.0))
    return ImageBatch(data, labels, num_classes)


def feature_split_blobs(n, num_classes, *, robust_dims=8, weak_dims=64, robust_shift=0.2,
                        weak_shift=4 / 255, robust_std=0.2, weak_std=0.02, seed=0) -> ImageBatch:
    """Classes coded by a few strong noisy coordinates plus many faint clean ones.

    Each class has a random +/-1 code per coordinate. The weak group shifts
    by less than a typical L-inf radius, so a model that leans on it is
    easy to attack, while the robust group survives such perturbations.
    """
    rng = np.random.default_rng(seed)
    codes_r = rng.choice([-1.0, 1.0], size=(num_classes, robust_dims))
    codes_w = rng.choice([-1.0, 1.0], size=(num_classes, weak_dims))
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    xr = 0.5 + robust_shift * codes_r[labels] + robust_std * rng.normal(size=(n, robust_dims))
    xw = 0.5 + weak_shift * codes_w[labels] + weak_std * rng.normal(size=(n, weak_dims))
    data = to_float32_grid(np.clip(np.hstack([xr, xw]), 0.0, 1.0))
    return ImageBatch(data, labels, num_classes)


def two_moons_grid(n, num_classes=3, *, noise=0.06, seed=0) -> ImageBatch:
    """Interleaved 2-d arcs, one per class, for grid-searchable suites."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    t = rng.uniform(0.0, np.pi, size=n)
    phase = 2.0 * np.pi * labels / num_classes
    r = 0.28
    cx = 0.5 + 0.12 * np.cos(phase)
    cy = 0.5 + 0.12 * np.sin(phase)
    pts = np.stack([cx + r * np.cos(t + phase), cy + r * np.sin(t + phase)], axis=1)
    pts += noise * rng.normal(size=pts.shape)
    data = to_float32_grid(np.clip(pts, 0.0, 1.0))
    return ImageBatch(data, labels, num_classes)
