"""Full-batch transductive training with masked cross-entropy.

Each epoch builds a fresh tape, re-watches the persistent parameters, runs
one forward pass over the whole vertex set, backpropagates the loss on the
train mask, and applies one optimizer step.  Evaluation runs with dropout
disabled on a throwaway tape that is never consumed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericError, ParameterError, ShapeError, ValidationError
from .hypergraph import MultiModalDataset
from .models import ModelConfig, ModelParams, forward, init_params
from .tensor import Tape, Tensor, backward, softmax_cross_entropy

OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    """Optimizer choice and schedule for one training run."""

    epochs: int = 200
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    optimizer: str = "adam"
    eval_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be positive, got {self.epochs}")
        if self.learning_rate < 0.0:
            raise ParameterError(
                f"learning_rate must be nonnegative, got {self.learning_rate}"
            )
        if self.weight_decay < 0.0:
            raise ParameterError(
                f"weight_decay must be nonnegative, got {self.weight_decay}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(
                f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}"
            )
        if self.eval_every < 1:
            raise ParameterError(f"eval_every must be positive, got {self.eval_every}")


@dataclass
class RunResult:
    """Outcome of one training run."""

    final_test_accuracy: float
    best_test_accuracy: float
    loss_curve: list[float]
    elapsed: float
    seed: int


@dataclass
class AdamState:
    """First and second moments plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def init_adam_state(params: Sequence[Tensor]) -> AdamState:
    return AdamState(
        m=[np.zeros_like(t.data) for t in params],
        v=[np.zeros_like(t.data) for t in params],
    )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> None:
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8) in place.

    Weight decay is decoupled: parameters shrink by lr*wd before the
    moment update, so the decay never enters the running moments.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"parameter/gradient/state counts disagree: "
            f"{len(params)}/{len(grads)}/{len(state.m)}"
        )
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter {p.data.shape}"
            )
        if weight_decay:
            p.data -= lr * weight_decay * p.data
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        p.data -= lr * (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + eps)


def sgd_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    lr: float,
    weight_decay: float = 0.0,
) -> None:
    """Plain gradient descent with decoupled weight decay, in place."""
    if len(params) != len(grads):
        raise ShapeError(
            f"parameter/gradient counts disagree: {len(params)}/{len(grads)}"
        )
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter {p.data.shape}"
            )
        if weight_decay:
            p.data -= lr * weight_decay * p.data
        p.data -= lr * g


def accuracy(logits, labels, mask) -> float:
    """Fraction of masked rows whose argmax matches the label.

    Argmax ties resolve to the lowest class index.  ``logits`` may be a
    Tensor or a plain array.
    """
    z = np.asarray(getattr(logits, "data", logits), dtype=np.float64)
    labels = np.asarray(labels)
    if mask is None:
        mask = np.ones(z.shape[0], dtype=bool)
    mask = np.asarray(mask)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ParameterError("accuracy needs a non-empty mask")
    pred = z[rows].argmax(axis=1)
    return float((pred == labels[rows]).mean())


def balanced_subset(labels, train_mask, per_class: int, rng: np.random.Generator):
    """Pick exactly ``per_class`` labeled vertices per class, uniformly.

    Returns the reduced boolean train mask; its complement over all vertices
    is the matching evaluation mask.
    """
    if per_class < 1:
        raise ParameterError(f"per_class must be positive, got {per_class}")
    labels = np.asarray(labels)
    train_mask = np.asarray(train_mask)
    if train_mask.shape != labels.shape or train_mask.dtype != np.bool_:
        raise ValidationError("train_mask must be a boolean vector matching labels")
    out = np.zeros(labels.shape[0], dtype=bool)
    for c in np.unique(labels):
        candidates = np.flatnonzero(train_mask & (labels == c))
        if candidates.size < per_class:
            raise ValidationError(
                f"class {int(c)} has only {candidates.size} labeled vertices, "
                f"need {per_class}"
            )
        out[rng.choice(candidates, size=per_class, replace=False)] = True
    return out


def predict(model_cfg: ModelConfig, ds: MultiModalDataset, params: ModelParams) -> np.ndarray:
    """Logits for every vertex, dropout disabled, gradients discarded."""
    tape = Tape()
    for t in params.tensors():
        tape.watch(t)
    return forward(model_cfg, ds, params, training=False, rng=None).data


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    ds: MultiModalDataset,
    params: ModelParams | None = None,
) -> RunResult:
    """Train one model transductively and report test accuracy.

    Parameters are initialized from ``model_cfg.seed`` unless passed in;
    dropout noise comes from ``train_cfg.seed``.  Deterministic given both
    seeds and the dataset.
    """
    if not ds.train_mask.any():
        raise ValidationError("dataset has an empty train mask")
    if not ds.test_mask.any():
        raise ValidationError("dataset has an empty test mask")
    start = time.perf_counter()
    if params is None:
        dims = [m.features.shape[1] for m in ds.modalities]
        params = init_params(model_cfg, dims, np.random.default_rng(model_cfg.seed))
    tensors = params.tensors()
    drop_rng = np.random.default_rng(train_cfg.seed)
    adam = init_adam_state(tensors) if train_cfg.optimizer == "adam" else None

    loss_curve: list[float] = []
    best_acc = 0.0
    final_acc = 0.0
    for epoch in range(1, train_cfg.epochs + 1):
        tape = Tape()
        for t in tensors:
            tape.watch(t)
        logits = forward(model_cfg, ds, params, training=True, rng=drop_rng)
        loss = softmax_cross_entropy(logits, ds.labels, ds.train_mask)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise NumericError(f"training loss became non-finite at epoch {epoch}")
        loss_curve.append(loss_val)
        backward(loss)
        grads = [t.grad for t in tensors]
        if adam is not None:
            adam_step(tensors, grads, adam, train_cfg.learning_rate,
                      train_cfg.weight_decay)
        else:
            sgd_step(tensors, grads, train_cfg.learning_rate,
                     train_cfg.weight_decay)
        if epoch % train_cfg.eval_every == 0 or epoch == train_cfg.epochs:
            acc = accuracy(predict(model_cfg, ds, params), ds.labels, ds.test_mask)
            best_acc = max(best_acc, acc)
            final_acc = acc
    return RunResult(
        final_test_accuracy=final_acc,
        best_test_accuracy=best_acc,
        loss_curve=loss_curve,
        elapsed=time.perf_counter() - start,
        seed=train_cfg.seed,
    )
