"""Synthetic domain-shift datasets and labeled-CSV file I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError

UNLABELED = -1


@dataclass
class Dataset:
    features: np.ndarray           # (n, d) float64
    labels: np.ndarray             # (n,) int64; UNLABELED marks unlabeled rows
    class_count: int
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValidationError("features must be 2-D")
        if self.labels.shape != (self.features.shape[0],):
            raise ValidationError("one label per feature row required")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite values")
        if np.any(self.labels < UNLABELED) or (
            self.class_count > 0 and np.any(self.labels >= self.class_count)
        ):
            raise ValidationError("labels must lie in {-1} U [0, class_count)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.n > 0 and bool(np.all(self.labels >= 0))


def gen_two_moons(n: int, noise_sd: float, rotation_deg: float, seed: int) -> Dataset:
    """Interleaved half-circle pair with optional rotation about the origin.

    The upper moon is the unit arc (cos t, sin t), t in [0, pi]; the lower
    moon is its flipped copy carried to (1 - cos t, 0.5 - sin t).  Gaussian
    noise is added first, then the whole point set is rotated.
    """
    if n < 2 or n % 2 != 0:
        raise ValidationError(f"n must be an even count >= 2, got {n}")
    if noise_sd < 0:
        raise ValidationError("noise_sd must be >= 0")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    X = np.vstack([upper, lower])
    labels = np.concatenate([np.zeros(half, dtype=np.int64),
                             np.ones(half, dtype=np.int64)])
    rng = np.random.default_rng(seed)
    X = X + rng.normal(0.0, noise_sd, size=X.shape)
    X = X @ _rotation(rotation_deg).T
    return Dataset(X, labels, class_count=2, name="two_moons")


def gen_blobs(
    n: int,
    classes: int,
    dim: int,
    centers_shift,
    noise_sd: float,
    seed: int,
    centers_seed: int = 0,
) -> Dataset:
    """Isotropic Gaussian clusters at seeded random centers.

    Centers are drawn once from ``centers_seed`` (uniform in [-10, 10] per
    coordinate) so that a shifted target variant generated with a different
    sampling ``seed`` still shares the source geometry; ``centers_shift``
    is added to every center.  Classes are balanced, with the remainder
    going to the last class.
    """
    if classes < 1 or dim < 1:
        raise ValidationError("classes and dim must be >= 1")
    if n < classes:
        raise ValidationError(f"n must be >= classes, got n={n}, classes={classes}")
    if noise_sd < 0:
        raise ValidationError("noise_sd must be >= 0")
    shift = np.broadcast_to(np.asarray(centers_shift, dtype=np.float64), (dim,))
    centers = np.random.default_rng(centers_seed).uniform(-10.0, 10.0, (classes, dim))
    centers = centers + shift
    rng = np.random.default_rng(seed)
    counts = [n // classes] * classes
    counts[-1] += n % classes
    parts, labels = [], []
    for c, cnt in enumerate(counts):
        parts.append(centers[c] + rng.normal(0.0, noise_sd, size=(cnt, dim)))
        labels.append(np.full(cnt, c, dtype=np.int64))
    return Dataset(np.vstack(parts), np.concatenate(labels),
                   class_count=classes, name="blobs")


def save_csv(ds: Dataset, path) -> None:
    """Write ``label,f0,...`` rows; features carry 17 significant digits."""
    with open(path, "w") as fh:
        fh.write("label," + ",".join(f"f{i}" for i in range(ds.dim)) + "\n")
        for label, row in zip(ds.labels, ds.features):
            fh.write(f"{int(label)}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def load_csv(path, class_count: int | None = None, name: str | None = None) -> Dataset:
    """Read a dataset written by save_csv; malformed rows name their line."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file, expected a header", line=1)
    header = lines[0].split(",")
    if header[0] != "label" or header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
        raise ParseError(f"bad header {lines[0]!r}", line=1)
    dim = len(header) - 1
    if dim < 1:
        raise ParseError("header names no feature columns", line=1)
    features = np.zeros((len(lines) - 1, dim))
    labels = np.zeros(len(lines) - 1, dtype=np.int64)
    for i, text in enumerate(lines[1:], start=2):
        parts = text.split(",")
        if len(parts) != dim + 1:
            raise ParseError(
                f"expected {dim + 1} columns, found {len(parts)}", line=i
            )
        try:
            label = int(parts[0])
            row = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), line=i) from None
        if label < UNLABELED:
            raise ParseError(f"label {label} below the unlabeled sentinel", line=i)
        if class_count is not None and label >= class_count:
            raise ParseError(
                f"label {label} outside class count {class_count}", line=i
            )
        labels[i - 2] = label
        features[i - 2] = row
    if class_count is None:
        class_count = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
    stem = name if name is not None else _stem(path)
    return Dataset(features, labels, class_count=class_count, name=stem)


def _rotation(deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    c, s = np.cos(rad), np.sin(rad)
    return np.array([[c, -s], [s, c]])


def _stem(path) -> str:
    return os.path.splitext(os.path.basename(str(path)))[0]
