"""Evaluation diagnostics: accuracy, domain-distance proxies, discrepancies.

The global domain distance is 2*(1 - 2*eps), where eps is the held-out
error of a classifier discriminating source from target features.  The
local variant runs the same construction per class and combines the
per-class distances weighted by the target class priors:

    local_d = 2 * sum_c p(c) * (1 - 2*eps_c)

The domain classifier is a deliberately plain logistic regression trained
by full-batch gradient descent (500 iterations, learning rate 0.1, no
regularization) so that results are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .discrepancy import class_weights, lmmd, mmd
from .errors import ConfigurationError, ValidationError
from .kernels import KernelSpec
from .network import MlpModel, forward

_GD_ITERS = 500
_GD_LR = 0.1


@dataclass
class ADistanceReport:
    """Global and per-class domain distances with the errors behind them."""

    global_d: float
    epsilon_global: float
    classes: list[int] = field(default_factory=list)
    per_class_d: list[float] = field(default_factory=list)
    per_class_epsilon: list[float] = field(default_factory=list)
    class_priors: list[float] = field(default_factory=list)
    excluded_classes: list[int] = field(default_factory=list)
    local_d: float = 0.0

    def to_dict(self) -> dict:
        return {
            "global_d": self.global_d,
            "epsilon_global": self.epsilon_global,
            "classes": self.classes,
            "per_class_d": self.per_class_d,
            "per_class_epsilon": self.per_class_epsilon,
            "class_priors": self.class_priors,
            "excluded_classes": self.excluded_classes,
            "local_d": self.local_d,
        }


def accuracy(probs, labels) -> float:
    """Fraction of rows whose argmax (ties go to the lowest index) is the label."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ConfigurationError(
            f"shape mismatch: probs {probs.shape}, labels {labels.shape}"
        )
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def a_distance_from_error(eps: float) -> float:
    """The distance formula 2*(1 - 2*eps) for a discriminator error rate."""
    return 2.0 * (1.0 - 2.0 * eps)


def proxy_a_distance(Fs, Ft, seed: int) -> float:
    """Global domain distance from a seeded 50/50 stratified split.

    Source rows are labeled 0, target rows 1; a logistic discriminator is fit
    on half of each domain and its held-out error (clamped to <= 0.5, since
    worse-than-chance means indistinguishable) enters 2*(1 - 2*eps).
    """
    Fs = np.asarray(Fs, dtype=np.float64)
    Ft = np.asarray(Ft, dtype=np.float64)
    if Fs.ndim != 2 or Ft.ndim != 2 or Fs.shape[1] != Ft.shape[1]:
        raise ConfigurationError("feature dimensions disagree")
    if Fs.shape[0] < 4 or Ft.shape[0] < 4:
        raise ValidationError("each domain needs at least 4 samples")
    eps = _domain_error(Fs, Ft, np.random.default_rng(seed))
    return a_distance_from_error(eps)


def local_a_distance(Fs, Ys, Ft, Yt, seed: int) -> ADistanceReport:
    """Per-class domain distances combined under target class priors.

    Classes with fewer than 2 samples on either side are excluded and the
    priors renormalized over the survivors.  Per-class fits use seeds derived
    from the base seed in included-class order, so a single-class dataset
    reproduces the plain global computation exactly.
    """
    Fs = np.asarray(Fs, dtype=np.float64)
    Ft = np.asarray(Ft, dtype=np.float64)
    Ys = np.asarray(Ys, dtype=np.int64)
    Yt = np.asarray(Yt, dtype=np.int64)
    if Ys.shape != (Fs.shape[0],) or Yt.shape != (Ft.shape[0],):
        raise ConfigurationError("labels must be one class index per feature row")
    if np.any(Ys < 0) or np.any(Yt < 0):
        raise ValidationError("class indices must be non-negative")

    eps_global = _domain_error(Fs, Ft, np.random.default_rng(seed))
    report = ADistanceReport(
        global_d=a_distance_from_error(eps_global), epsilon_global=eps_global
    )

    candidates = sorted(set(Yt.tolist()))
    included: list[int] = []
    for c in candidates:
        if np.count_nonzero(Ys == c) < 2 or np.count_nonzero(Yt == c) < 2:
            report.excluded_classes.append(int(c))
        else:
            included.append(int(c))
    if not included:
        raise ValidationError("no class has at least 2 samples in both domains")

    counts = [int(np.count_nonzero(Yt == c)) for c in included]
    total = sum(counts)
    for rank, (c, cnt) in enumerate(zip(included, counts)):
        eps_c = _domain_error(
            Fs[Ys == c], Ft[Yt == c], np.random.default_rng(seed + rank)
        )
        report.classes.append(c)
        report.per_class_epsilon.append(eps_c)
        report.per_class_d.append(a_distance_from_error(eps_c))
        report.class_priors.append(cnt / total)
    report.local_d = 2.0 * sum(
        p * (1.0 - 2.0 * e)
        for p, e in zip(report.class_priors, report.per_class_epsilon)
    )
    return report


def measure_discrepancies(model: MlpModel, Fs, Ys, Ft, Yt,
                          spec: KernelSpec | None = None) -> dict:
    """MMD and LMMD on the model's bottleneck activations.

    Both domains use ground-truth one-hot weights, so this is an
    evaluation-time measurement of how aligned the learned features are.
    """
    spec = spec if spec is not None else KernelSpec()
    Ys = np.asarray(Ys, dtype=np.int64)
    Yt = np.asarray(Yt, dtype=np.int64)
    if np.any(Ys < 0) or np.any(Yt < 0):
        raise ValidationError("ground-truth labels required for both domains")
    C = int(max(Ys.max(), Yt.max())) + 1
    zs = forward(model, Fs).bottleneck
    zt = forward(model, Ft).bottleneck
    ws = class_weights(_onehot(Ys, C))
    wt = class_weights(_onehot(Yt, C))
    return {
        "mmd": mmd(zs, zt, spec).value,
        "lmmd": lmmd(zs, zt, ws, wt, spec).value,
    }


def _onehot(labels: np.ndarray, C: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], C))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _domain_error(F0, F1, rng) -> float:
    """Held-out error of the source-vs-target discriminator, clamped to 0.5.

    Each domain is shuffled and split in half (train gets the floor), so the
    split is stratified by domain label.
    """
    tr0, te0 = _split(F0.shape[0], rng)
    tr1, te1 = _split(F1.shape[0], rng)
    Xtr = np.vstack([F0[tr0], F1[tr1]])
    ytr = np.concatenate([np.zeros(len(tr0)), np.ones(len(tr1))])
    Xte = np.vstack([F0[te0], F1[te1]])
    yte = np.concatenate([np.zeros(len(te0)), np.ones(len(te1))])

    w = np.zeros(Xtr.shape[1])
    b = 0.0
    n = Xtr.shape[0]
    for _ in range(_GD_ITERS):
        p = expit(Xtr @ w + b)
        err = p - ytr
        w -= _GD_LR * (Xtr.T @ err) / n
        b -= _GD_LR * float(err.mean())
    pred = (Xte @ w + b) >= 0.0
    eps = float(np.mean(pred != (yte == 1.0)))
    return min(eps, 0.5)


def _split(n, rng):
    perm = rng.permutation(n)
    return perm[: n // 2], perm[n // 2:]
