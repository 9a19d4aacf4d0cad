"""Pairwise squared distances and Gaussian kernel families.

Every discrepancy estimator in this package evaluates a Gaussian kernel
k(x, y) = exp(-||x - y||^2 / bandwidth), usually averaged over a small
family of bandwidth multipliers.  The base bandwidth defaults to the
median of the strictly positive pairwise squared distances of the batch
the kernel is evaluated on, resolved fresh at every call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, DegenerateBatchError, ValidationError

MEDIAN = "median"

# Geometric ladder (ratio 2) centered on the median bandwidth; degrades to a
# single median-bandwidth kernel with multipliers=(1.0,).
DEFAULT_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel family: mean over m of exp(-d2 / (base_bandwidth * m)).

    ``base_bandwidth`` is either a positive number in squared-distance units
    or the string ``"median"``, in which case it is resolved per call from
    the batch being evaluated.  ``multipliers`` must be strictly positive
    and sorted ascending.
    """

    base_bandwidth: float | str = MEDIAN
    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS

    def __post_init__(self):
        if isinstance(self.base_bandwidth, str):
            if self.base_bandwidth != MEDIAN:
                raise ConfigurationError(
                    f"base_bandwidth must be a positive number or '{MEDIAN}', "
                    f"got {self.base_bandwidth!r}"
                )
        elif not (float(self.base_bandwidth) > 0):
            raise ConfigurationError("base_bandwidth must be > 0")
        mults = tuple(float(m) for m in self.multipliers)
        if len(mults) == 0:
            raise ConfigurationError("multipliers must be non-empty")
        if any(m <= 0 for m in mults):
            raise ConfigurationError("multipliers must be strictly positive")
        if any(a >= b for a, b in zip(mults, mults[1:])):
            raise ConfigurationError("multipliers must be sorted strictly ascending")
        object.__setattr__(self, "multipliers", mults)

    @property
    def family_size(self) -> int:
        return len(self.multipliers)


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array, validating the Matrix invariants."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ConfigurationError(f"{name} must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite values")
    return a


def pairwise_sq_dists(X, Y) -> np.ndarray:
    """Matrix of squared Euclidean distances between rows of X and rows of Y."""
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ConfigurationError(
            f"column mismatch: X has {X.shape[1]}, Y has {Y.shape[1]}"
        )
    # cdist sums the squared coordinate differences directly, so identical
    # rows yield an exact 0 (no catastrophic cancellation from a dot trick).
    return cdist(X, Y, "sqeuclidean")


def median_bandwidth(D) -> float:
    """Median of the strictly positive entries of a squared-distance matrix.

    Zero entries (self-distances, duplicated rows) are excluded so the
    bandwidth stays positive; an even count averages the two central values.
    """
    D = np.asarray(D, dtype=np.float64)
    positive = D[D > 0]
    if positive.size == 0:
        raise DegenerateBatchError(
            "all pairwise squared distances are zero; no median bandwidth exists"
        )
    return float(np.median(positive))


def resolve_bandwidth(spec: KernelSpec, D) -> float:
    """Numeric base bandwidth for ``spec`` given the squared distances it will see."""
    if spec.base_bandwidth == MEDIAN:
        return median_bandwidth(D)
    b = float(spec.base_bandwidth)
    if not b > 0:
        raise ConfigurationError("resolved bandwidth must be > 0")
    return b


def gaussian_kernel_matrix(D, spec: KernelSpec, *, bandwidth: float | None = None) -> np.ndarray:
    """Entrywise kernel values: mean over multipliers of exp(-D / (b * m)).

    ``bandwidth`` overrides the spec's resolution, letting callers freeze a
    bandwidth computed on a joint batch and evaluate blocks of it separately.
    """
    D = np.asarray(D, dtype=np.float64)
    if np.any(D < 0):
        raise ValidationError("squared distances must be non-negative")
    b = resolve_bandwidth(spec, D) if bandwidth is None else float(bandwidth)
    if not b > 0:
        raise ConfigurationError("resolved bandwidth must be > 0")
    K = np.zeros_like(D)
    for m in spec.multipliers:
        K += np.exp(-D / (b * m))
    K /= spec.family_size
    return K
