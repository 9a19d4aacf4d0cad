"""Subdomain-adaptation training loop.

Each step pairs a labeled source mini-batch with an unlabeled target one,
predicts soft target labels with the current model, forms per-class weights
(hard one-hot for source, soft rows for target), resolves the kernel
bandwidth on the joint bottleneck batch, and takes an SGD-with-momentum step
on  ce(source) + lambda * adaptation_term.  The trade-off lambda ramps from
0 to lambda_max on a logistic schedule while the learning rate anneals, both
as functions of the training progress theta = iter / total_iters.

The adaptation term follows the canonical multi-kernel convention: the
Gaussian family enters the loss as a *sum* over the bandwidth ladder.  The
discrepancy estimators report the family *mean* (so their values are
comparable across family sizes), hence the objective scales the reported
value and its gradients by ``kernel.family_size``.  Traces and measurement
APIs always carry the unscaled estimator value.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .discrepancy import class_weights, lmmd
from .errors import ConfigurationError, EmptyOverlapError, ValidationError
from .kernels import KernelSpec
from .metrics import accuracy
from .network import MlpModel, backward, cross_entropy, forward, mlp_init

VALID_MODES = ("dsan", "source_only")


@dataclass
class TrainConfig:
    eta0: float = 0.01
    alpha: float = 10.0
    beta: float = 0.75
    gamma: float = 10.0
    momentum: float = 0.9
    lambda_max: float = 1.0
    batch_size: int = 64
    total_iters: int = 3000
    seed: int = 0
    mode: str = "dsan"
    hidden_dims: tuple[int, ...] = (64, 32)
    trace_path: str | None = None

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ConfigurationError("eta0 must be > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.total_iters < 0:
            raise ConfigurationError("total_iters must be >= 0")
        if self.mode not in VALID_MODES:
            raise ConfigurationError(f"mode must be one of {VALID_MODES}")
        if self.lambda_max < 0:
            raise ConfigurationError("lambda_max must be >= 0")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)


@dataclass
class TrainRecord:
    iter: int
    theta: float
    eta: float
    lam: float
    ce_loss: float
    lmmd_loss: float
    contributing_classes: int
    source_acc: float
    target_acc: float | None
    elapsed: float  # wall-clock seconds; kept out of serialized traces

    def to_public_dict(self) -> dict:
        # elapsed is intentionally excluded so trace files stay bitwise
        # reproducible for identical (config, data, seed).
        return {
            "iter": self.iter,
            "theta": self.theta,
            "eta": self.eta,
            "lambda": self.lam,
            "ce_loss": self.ce_loss,
            "lmmd_loss": self.lmmd_loss,
            "contributing_classes": self.contributing_classes,
            "source_acc": self.source_acc,
            "target_acc": self.target_acc,
        }


@dataclass
class TrainTrace:
    records: list[TrainRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def lmmd_skipped_steps(self) -> int:
        return sum(1 for r in self.records if r.contributing_classes == 0)

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r.to_public_dict(), sort_keys=True, allow_nan=False) + "\n"
            for r in self.records
        )


@dataclass
class TrainState:
    model: MlpModel
    cfg: TrainConfig
    kernel: KernelSpec
    vel_w: list[np.ndarray]
    vel_b: list[np.ndarray]
    it: int = 0
    start_time: float = 0.0


@dataclass
class LabeledBatch:
    """Feature rows plus per-row label rows (one-hot or soft distributions)."""

    features: np.ndarray
    labels: np.ndarray


def lr_schedule(theta: float, cfg: TrainConfig) -> float:
    """Annealed learning rate eta0 / (1 + alpha * theta)^beta."""
    return cfg.eta0 / (1.0 + cfg.alpha * theta) ** cfg.beta


def lambda_schedule(theta: float, cfg: TrainConfig) -> float:
    """Progressive trade-off lambda_max * (2 / (1 + exp(-gamma * theta)) - 1)."""
    return cfg.lambda_max * (2.0 / (1.0 + np.exp(-cfg.gamma * theta)) - 1.0)


def init_state(cfg: TrainConfig, input_dim: int, class_count: int,
               kernel: KernelSpec | None = None) -> TrainState:
    """Build the initial model and zero momentum buffers for a training run."""
    dims = (input_dim, *cfg.hidden_dims, class_count)
    model = mlp_init(dims, cfg.seed)
    return TrainState(
        model=model,
        cfg=cfg,
        kernel=kernel if kernel is not None else KernelSpec(),
        vel_w=[np.zeros_like(w) for w in model.weights],
        vel_b=[np.zeros_like(b) for b in model.biases],
        start_time=perf_counter(),
    )


def train_step(
    state: TrainState,
    source_batch: LabeledBatch,
    target_features,
    target_eval_labels=None,
) -> TrainRecord:
    """One optimization step on a paired mini-batch; mutates ``state``.

    Target soft labels come from the current model snapshot and are treated
    as constants within the step.  When no class is present in both domains
    the discrepancy term is zero for this step and the record shows
    contributing_classes == 0.
    """
    cfg = state.cfg
    if source_batch.features.shape[0] == 0 or np.shape(target_features)[0] == 0:
        raise ConfigurationError("batches must be non-empty")
    theta = state.it / cfg.total_iters if cfg.total_iters > 0 else 0.0
    eta = lr_schedule(theta, cfg)
    lam = 0.0 if cfg.mode == "source_only" else lambda_schedule(theta, cfg)
    # family-sum convention for the loss; estimators report the family mean
    lam_eff = lam * state.kernel.family_size

    model = state.model
    trace_s = forward(model, source_batch.features)
    trace_t = forward(model, target_features)
    onehot_s = source_batch.labels
    ws = class_weights(onehot_s)
    wt = class_weights(trace_t.probs)  # soft pseudo-label rows

    grad_s = grad_t = None
    try:
        res = lmmd(
            trace_s.bottleneck,
            trace_t.bottleneck,
            ws,
            wt,
            state.kernel,
            want_grads=lam != 0.0,
        )
        lmmd_loss = res.value
        contributing = res.contributing_classes
        grad_s, grad_t = res.grad_source, res.grad_target
    except EmptyOverlapError:
        lmmd_loss = 0.0
        contributing = 0
        lam_eff = 0.0  # LMMD term dropped this step; schedule value still recorded

    ce = cross_entropy(trace_s.probs, onehot_s)
    dW, db = backward(model, trace_s, onehot_s, grad_s, trace_t, grad_t, lam_eff)
    for l in range(model.n_layers):
        state.vel_w[l] = cfg.momentum * state.vel_w[l] - eta * dW[l]
        state.vel_b[l] = cfg.momentum * state.vel_b[l] - eta * db[l]
        model.weights[l] += state.vel_w[l]
        model.biases[l] += state.vel_b[l]

    src_labels = np.argmax(onehot_s, axis=1)
    target_acc = None
    if target_eval_labels is not None:
        target_acc = accuracy(trace_t.probs, target_eval_labels)
    record = TrainRecord(
        iter=state.it,
        theta=theta,
        eta=eta,
        lam=float(lam),
        ce_loss=ce,
        lmmd_loss=lmmd_loss,
        contributing_classes=contributing,
        source_acc=accuracy(trace_s.probs, src_labels),
        target_acc=target_acc,
        elapsed=perf_counter() - state.start_time,
    )
    state.it += 1
    return record


def train(
    cfg: TrainConfig,
    source_features,
    source_labels,
    target_features,
    eval_labels=None,
    kernel: KernelSpec | None = None,
    class_count: int | None = None,
) -> tuple[MlpModel, TrainTrace]:
    """Run the full loop: paired batches, schedules, pseudo-label refinement.

    ``source_labels`` are class indices; ``eval_labels`` are optional target
    ground-truth indices used only for per-iteration accuracy reporting.
    Source and target iterators cycle independently with a per-epoch
    reshuffle, dropping the last ragged batch.
    """
    Xs = np.asarray(source_features, dtype=np.float64)
    Xt = np.asarray(target_features, dtype=np.float64)
    ys = np.asarray(source_labels, dtype=np.int64)
    if Xs.ndim != 2 or Xt.ndim != 2 or Xs.shape[1] != Xt.shape[1]:
        raise ConfigurationError("source/target feature dimensions disagree")
    if Xs.shape[0] == 0 or Xt.shape[0] == 0:
        raise ConfigurationError("datasets must be non-empty")
    if ys.shape != (Xs.shape[0],):
        raise ConfigurationError("source labels must be one class index per row")
    if np.any(ys < 0):
        raise ValidationError("source labels must be non-negative class indices")
    C = int(class_count) if class_count is not None else int(ys.max()) + 1
    if np.any(ys >= C):
        raise ValidationError(f"source label exceeds class count {C}")
    yt = None
    if eval_labels is not None:
        yt = np.asarray(eval_labels, dtype=np.int64)
        if yt.shape != (Xt.shape[0],):
            raise ConfigurationError("eval labels must be one class index per row")
    if cfg.batch_size < C:
        warnings.warn(
            f"batch_size {cfg.batch_size} < class count {C}; "
            "some classes will be absent from every batch",
            stacklevel=2,
        )
    if cfg.batch_size > Xs.shape[0] or cfg.batch_size > Xt.shape[0]:
        raise ConfigurationError("batch_size exceeds a dataset size")

    onehot = np.zeros((Xs.shape[0], C))
    onehot[np.arange(Xs.shape[0]), ys] = 1.0

    state = init_state(cfg, Xs.shape[1], C, kernel)
    seq = np.random.SeedSequence(cfg.seed)
    child_s, child_t = seq.spawn(2)
    stream_s = _batch_stream(Xs.shape[0], cfg.batch_size, np.random.default_rng(child_s))
    stream_t = _batch_stream(Xt.shape[0], cfg.batch_size, np.random.default_rng(child_t))

    trace = TrainTrace()
    sink = open(cfg.trace_path, "w") if cfg.trace_path else None
    try:
        for _ in range(cfg.total_iters):
            idx_s = next(stream_s)
            idx_t = next(stream_t)
            batch = LabeledBatch(features=Xs[idx_s], labels=onehot[idx_s])
            record = train_step(
                state,
                batch,
                Xt[idx_t],
                yt[idx_t] if yt is not None else None,
            )
            trace.records.append(record)
            if sink is not None:
                sink.write(
                    json.dumps(record.to_public_dict(), sort_keys=True,
                               allow_nan=False) + "\n"
                )
    finally:
        if sink is not None:
            sink.close()
    return state.model, trace


def _batch_stream(n, batch_size, rng):
    if n // batch_size == 0:
        raise ConfigurationError("batch_size exceeds dataset size")
    while True:
        perm = rng.permutation(n)
        for k in range(n // batch_size):
            yield perm[k * batch_size:(k + 1) * batch_size]
