"""MMD and class-weighted local MMD estimators, with analytic gradients.

The global estimator compares whole-domain kernel mean embeddings:

    mmd = (1/ns^2) sum_ij k(zs_i, zs_j) + (1/nt^2) sum_ij k(zt_i, zt_j)
          - (2/(ns nt)) sum_ij k(zs_i, zt_j)

with all index pairs included (the V-statistic form, implemented verbatim).
The local estimator replaces the uniform 1/n weights with per-class weight
columns and averages the per-class discrepancies over the classes present
in both domains:

    lmmd = (1/C') sum_c [ ws_c' Kss ws_c + wt_c' Ktt wt_c - 2 ws_c' Kst wt_c ]

Weight columns come from labels (hard one-hot for a labeled domain, soft
probability rows for pseudo-labeled data): w[i,c] = y[i,c] / sum_j y[j,c].
Gradients with respect to the activations treat both the weights and the
median bandwidth as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EmptyOverlapError, ValidationError
from .kernels import KernelSpec, as_matrix, pairwise_sq_dists, resolve_bandwidth

# Tolerances for label-row and weight-column validation.
_ROW_SUM_TOL = 1e-6
_COL_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ClassWeights:
    """Per-sample class weights; each column sums to 1 (class present) or 0."""

    weights: np.ndarray  # (n, C)
    present: np.ndarray  # (C,) bool mask of classes with unit column sum

    @property
    def classes(self) -> int:
        return self.weights.shape[1]

    @property
    def samples(self) -> int:
        return self.weights.shape[0]


@dataclass
class DiscrepancyResult:
    value: float
    grad_source: np.ndarray | None = None
    grad_target: np.ndarray | None = None
    contributing_classes: int = 0


def class_weights(labels) -> ClassWeights:
    """Normalize probability label rows into per-class weight columns.

    Each row must be a distribution over the C classes (one-hot rows are the
    hard special case).  Column c is divided by its mass so it sums to 1;
    a class with no mass anywhere keeps an all-zero column.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2:
        raise ValidationError(f"labels must be 2-D, got shape {labels.shape}")
    if not np.all(np.isfinite(labels)):
        raise ValidationError("labels contain non-finite values")
    if np.any(labels < 0):
        raise ValidationError("labels contain negative entries")
    if np.any(labels > 1 + _ROW_SUM_TOL):
        raise ValidationError("label entries must lie in [0, 1]")
    row_sums = labels.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > _ROW_SUM_TOL):
        bad = int(np.argmax(np.abs(row_sums - 1.0)))
        raise ValidationError(
            f"label row {bad} sums to {row_sums[bad]:.9g}, expected 1"
        )
    col_sums = labels.sum(axis=0)
    present = col_sums > 0
    w = np.zeros_like(labels)
    w[:, present] = labels[:, present] / col_sums[present]
    # Guard drift from repeated soft-label arithmetic: renormalize any column
    # whose sum strayed within _COL_SUM_TOL of 1 back to exactly 1.
    w_sums = w.sum(axis=0)
    if np.any(np.abs(w_sums[present] - 1.0) > _COL_SUM_TOL):
        raise ValidationError("weight column drifted by more than 1e-9")
    w[:, present] /= w_sums[present]
    return ClassWeights(weights=w, present=present)


def _check_weights(w: ClassWeights, Z: np.ndarray, name: str) -> None:
    if w.samples != Z.shape[0]:
        raise ConfigurationError(
            f"{name}: weight rows ({w.samples}) != activation rows ({Z.shape[0]})"
        )


def mmd(Zs, Zt, spec: KernelSpec) -> DiscrepancyResult:
    """Global kernel discrepancy between two activation batches."""
    Zs = as_matrix(Zs, "Zs")
    Zt = as_matrix(Zt, "Zt")
    if Zs.shape[1] != Zt.shape[1]:
        raise ConfigurationError(
            f"column mismatch: Zs has {Zs.shape[1]}, Zt has {Zt.shape[1]}"
        )
    ns, nt = Zs.shape[0], Zt.shape[0]
    K, _ = _joint_kernel(Zs, Zt, spec, want_derivative=False)
    kss = K[:ns, :ns].sum() / (ns * ns)
    ktt = K[ns:, ns:].sum() / (nt * nt)
    kst = K[:ns, ns:].sum() * (2.0 / (ns * nt))
    return DiscrepancyResult(value=float(kss + ktt - kst), contributing_classes=1)


def lmmd(
    Zs,
    Zt,
    Ws: ClassWeights,
    Wt: ClassWeights,
    spec: KernelSpec,
    want_grads: bool = False,
) -> DiscrepancyResult:
    """Class-weighted local discrepancy between two activation batches.

    A class contributes iff its weight column sums to 1 in both domains; the
    per-class terms are averaged over the contributing classes only.  With
    ``want_grads`` the exact gradients of the value with respect to every
    activation entry are returned (weights and bandwidth held constant).
    """
    Zs = as_matrix(Zs, "Zs")
    Zt = as_matrix(Zt, "Zt")
    if Zs.shape[1] != Zt.shape[1]:
        raise ConfigurationError(
            f"column mismatch: Zs has {Zs.shape[1]}, Zt has {Zt.shape[1]}"
        )
    if Ws.classes != Wt.classes:
        raise ConfigurationError(
            f"class count mismatch: source {Ws.classes}, target {Wt.classes}"
        )
    _check_weights(Ws, Zs, "source")
    _check_weights(Wt, Zt, "target")

    contributing = Ws.present & Wt.present
    n_contrib = int(np.count_nonzero(contributing))
    if n_contrib == 0:
        raise EmptyOverlapError("no class is present in both domains")

    ns = Zs.shape[0]
    ws = Ws.weights[:, contributing]  # (ns, C')
    wt = Wt.weights[:, contributing]  # (nt, C')

    K, Kp = _joint_kernel(Zs, Zt, spec, want_derivative=want_grads)
    Kss, Ktt, Kst = K[:ns, :ns], K[ns:, ns:], K[:ns, ns:]

    # Summing ws_c ws_c' over contributing classes collapses to one product.
    A = ws @ ws.T
    B = wt @ wt.T
    E = ws @ wt.T
    t_ss = float((A * Kss).sum())
    t_tt = float((B * Ktt).sum())
    t_st = float((E * Kst).sum())
    value = (t_ss + t_tt - 2.0 * t_st) / n_contrib

    grad_s = grad_t = None
    if want_grads:
        Gss = A * Kp[:ns, :ns]
        Gtt = B * Kp[ns:, ns:]
        Gst = E * Kp[:ns, ns:]
        ga_ss, gb_ss = _weighted_kernel_sum_grads(Gss, Zs, Zs)
        ga_tt, gb_tt = _weighted_kernel_sum_grads(Gtt, Zt, Zt)
        ga_st, gb_st = _weighted_kernel_sum_grads(Gst, Zs, Zt)
        grad_s = (ga_ss + gb_ss - 2.0 * ga_st) / n_contrib
        grad_t = (ga_tt + gb_tt - 2.0 * gb_st) / n_contrib

    return DiscrepancyResult(
        value=value,
        grad_source=grad_s,
        grad_target=grad_t,
        contributing_classes=n_contrib,
    )


def lmmd_finite_diff(
    Zs,
    Zt,
    Ws: ClassWeights,
    Wt: ClassWeights,
    spec: KernelSpec,
    step: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients of the lmmd value, entry by entry.

    The bandwidth is frozen at the unperturbed joint-batch resolution, so the
    function being differenced matches the assumption of the analytic
    gradient (no differentiation through the median).
    """
    if not step > 0:
        raise ConfigurationError("step must be > 0")
    Zs = as_matrix(Zs, "Zs")
    Zt = as_matrix(Zt, "Zt")
    D = pairwise_sq_dists(np.vstack([Zs, Zt]), np.vstack([Zs, Zt]))
    frozen = KernelSpec(resolve_bandwidth(spec, D), spec.multipliers)

    def value(a, b):
        return lmmd(a, b, Ws, Wt, frozen).value

    grads = []
    for which, Z in ((0, Zs), (1, Zt)):
        g = np.zeros_like(Z)
        for idx in np.ndindex(Z.shape):
            orig = Z[idx]
            Z[idx] = orig + step
            hi = value(Zs, Zt)
            Z[idx] = orig - step
            lo = value(Zs, Zt)
            Z[idx] = orig
            g[idx] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads[0], grads[1]


def _joint_kernel(Zs, Zt, spec, want_derivative):
    """Kernel matrix of the stacked batch, plus dK/dD when requested.

    The bandwidth is resolved on the joint batch, so source, target, and
    cross blocks all share one median.
    """
    Z = np.vstack([Zs, Zt])
    D = pairwise_sq_dists(Z, Z)
    b = resolve_bandwidth(spec, D)
    U = spec.family_size
    K = np.zeros_like(D)
    Kp = np.zeros_like(D) if want_derivative else None
    for m in spec.multipliers:
        term = np.exp(-D / (b * m))
        K += term
        if want_derivative:
            Kp += term / m
    K /= U
    if want_derivative:
        Kp /= -U * b
    return K, Kp


def _weighted_kernel_sum_grads(G, Za, Zb):
    """Gradients of sum_ij M_ij k(||a_i - b_j||^2) given G = M * dk/dD.

    d/da_p = 2 sum_j G_pj (a_p - b_j);  d/db_q = 2 sum_i G_iq (b_q - a_i).
    """
    ga = 2.0 * (G.sum(axis=1)[:, None] * Za - G @ Zb)
    gb = 2.0 * (G.sum(axis=0)[:, None] * Zb - G.T @ Za)
    return ga, gb
