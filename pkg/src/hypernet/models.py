"""The four architectures: HGNN, MultiHGNN, ResHGNN, ResMultiHGNN.

A plain stack propagates features through L hypergraph convolutions
sigma(H_norm x W).  A residual stack wraps L residual convolutions

    sigma( ((1-alpha) H_norm x + alpha x0) ((1-beta) I + beta W) )

between an input linear map (whose activated output is x0) and an output
linear map; depth counts convolutions only.  Multi-modal variants run one
stack per modality on that modality's own hypergraph and average the logit
tensors, so each branch's gradients flow back independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError, ValidationError
from .hypergraph import Laplacian, MultiModalDataset, concat_modalities, laplacian
from .tensor import Tensor, add_bias, add_scaled, dropout, matmul, relu

FAMILIES = ("hgnn", "multihgnn", "reshgnn", "resmultihgnn")
RESIDUAL_FAMILIES = ("reshgnn", "resmultihgnn")
MULTI_FAMILIES = ("multihgnn", "resmultihgnn")


class _ConstantAlpha:
    """Constant input-residual weight (picklable, unlike a lambda)."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, layer: int) -> float:
        return self.value


class _DecayingBeta:
    """Identity-mapping weight min(1, strength / layer), layers 1-based."""

    def __init__(self, strength: float):
        self.strength = float(strength)

    def __call__(self, layer: int) -> float:
        return min(1.0, self.strength / layer)


@dataclass(frozen=True)
class ResSchedule:
    """Per-layer residual weights: maps a 1-based layer index into [0, 1]."""

    alpha: Callable[[int], float]
    beta: Callable[[int], float]


def default_res_schedule(alpha: float = 0.1, strength: float = 0.5) -> ResSchedule:
    """Constant alpha with beta_l = min(1, strength / l)."""
    return ResSchedule(alpha=_ConstantAlpha(alpha), beta=_DecayingBeta(strength))


@dataclass
class ModelConfig:
    """Architecture family, depth (number of convolutions), and widths."""

    family: str
    depth: int = 2
    hidden: int = 128
    n_classes: int = 2
    res_schedule: ResSchedule | None = None
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(
                f"unknown family {self.family!r}, expected one of {FAMILIES}"
            )
        if self.depth < 1:
            raise ParameterError(f"depth must be at least 1, got {self.depth}")
        if self.hidden < 1:
            raise ParameterError(f"hidden width must be positive, got {self.hidden}")
        if self.n_classes < 2:
            raise ParameterError(f"n_classes must be at least 2, got {self.n_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.family in RESIDUAL_FAMILIES:
            if self.depth < 2:
                raise ParameterError(
                    f"residual families need depth >= 2, got {self.depth}"
                )
            if self.res_schedule is None:
                self.res_schedule = default_res_schedule()
        elif self.res_schedule is not None:
            raise ParameterError(f"family {self.family!r} takes no residual schedule")


@dataclass
class ConvParams:
    """Learnable weight (and optional bias row) of one convolution or map."""

    weight: Tensor
    bias: Tensor | None = None

    def __post_init__(self):
        if not np.isfinite(self.weight.data).all():
            raise ValidationError("weight contains non-finite entries")
        if self.bias is not None:
            if self.bias.data.shape != (1, self.weight.data.shape[1]):
                raise ShapeError(
                    f"bias shape {self.bias.data.shape} does not match weight "
                    f"{self.weight.data.shape}"
                )
            if not np.isfinite(self.bias.data).all():
                raise ValidationError("bias contains non-finite entries")


@dataclass
class BranchParams:
    """Parameters of one stack: optional input/output maps around the convs."""

    convs: list[ConvParams]
    input_map: ConvParams | None = None
    output_map: ConvParams | None = None

    def tensors(self) -> list[Tensor]:
        out: list[Tensor] = []
        for p in (self.input_map, *self.convs, self.output_map):
            if p is None:
                continue
            out.append(p.weight)
            if p.bias is not None:
                out.append(p.bias)
        return out


@dataclass
class ModelParams:
    """All branches of a model, in modality order (single-branch families
    hold one branch over the concatenated modality)."""

    branches: list[BranchParams]

    def tensors(self) -> list[Tensor]:
        out: list[Tensor] = []
        for b in self.branches:
            out.extend(b.tensors())
        return out


def _glorot(rng: np.random.Generator, d_in: int, d_out: int) -> Tensor:
    s = np.sqrt(6.0 / (d_in + d_out))
    return Tensor(rng.uniform(-s, s, size=(d_in, d_out)), requires_grad=True)


def _affine_params(rng: np.random.Generator, d_in: int, d_out: int) -> ConvParams:
    return ConvParams(
        weight=_glorot(rng, d_in, d_out),
        bias=Tensor(np.zeros((1, d_out)), requires_grad=True),
    )


def init_params(cfg: ModelConfig, dims: Sequence[int], rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights and zero biases for every layer of ``cfg``.

    ``dims`` holds the per-modality feature widths; single-branch families
    consume their sum (the concatenated width).  Deterministic given ``rng``.
    """
    dims = [int(d) for d in dims]
    if not dims or any(d < 1 for d in dims):
        raise ParameterError(f"dims must be positive integers, got {dims}")
    branch_dims = dims if cfg.family in MULTI_FAMILIES else [sum(dims)]
    branches = []
    for d_in in branch_dims:
        if cfg.family in RESIDUAL_FAMILIES:
            branches.append(
                BranchParams(
                    input_map=_affine_params(rng, d_in, cfg.hidden),
                    convs=[
                        _affine_params(rng, cfg.hidden, cfg.hidden)
                        for _ in range(cfg.depth)
                    ],
                    output_map=_affine_params(rng, cfg.hidden, cfg.n_classes),
                )
            )
        else:
            widths = [d_in] + [cfg.hidden] * (cfg.depth - 1) + [cfg.n_classes]
            branches.append(
                BranchParams(
                    convs=[
                        _affine_params(rng, widths[i], widths[i + 1])
                        for i in range(cfg.depth)
                    ]
                )
            )
    return ModelParams(branches=branches)


def _as_tensor(lap: Laplacian) -> Tensor:
    return Tensor(lap.matrix)


def _apply_affine(x: Tensor, p: ConvParams) -> Tensor:
    h = matmul(x, p.weight)
    if p.bias is not None:
        h = add_bias(h, p.bias)
    return h


def hgnn_conv_forward(x: Tensor, lap: Laplacian, p: ConvParams, activate: bool) -> Tensor:
    """One hypergraph convolution sigma(H_norm x W), activation optional."""
    h = matmul(_as_tensor(lap), x)
    h = _apply_affine(h, p)
    return relu(h) if activate else h


def res_conv_forward(
    x: Tensor,
    x0: Tensor,
    lap: Laplacian,
    p: ConvParams,
    alpha: float,
    beta: float,
    activate: bool,
) -> Tensor:
    """One residual convolution mixing the initial representation ``x0``
    into the propagated signal and the identity into the weight transform."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    d_in, d_out = p.weight.data.shape
    if d_in != d_out:
        raise ShapeError(
            f"identity mapping needs a square weight, got {p.weight.data.shape}"
        )
    mixed = add_scaled(matmul(_as_tensor(lap), x), x0, 1.0 - alpha, alpha)
    transform = add_scaled(Tensor(np.eye(d_in)), p.weight, 1.0 - beta, beta)
    h = matmul(mixed, transform)
    if p.bias is not None:
        h = add_bias(h, p.bias)
    return relu(h) if activate else h


def fuse_mean(branch_outputs: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of equal-shape branch outputs.

    Backward distributes 1/M of the upstream gradient to every branch.
    """
    outputs = list(branch_outputs)
    if not outputs:
        raise ValidationError("fuse_mean needs at least one branch output")
    shape = outputs[0].data.shape
    for t in outputs[1:]:
        if t.data.shape != shape:
            raise ValidationError(
                f"branch output shapes disagree: {shape} vs {t.data.shape}"
            )
    m = len(outputs)
    if m == 1:
        return outputs[0]
    inv = 1.0 / m
    acc = add_scaled(outputs[0], outputs[1], inv, inv)
    for t in outputs[2:]:
        acc = add_scaled(acc, t, 1.0, inv)
    return acc


def _plain_stack(
    x: Tensor,
    lap: Laplacian,
    branch: BranchParams,
    drop: float,
    training: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    h = x
    last = len(branch.convs) - 1
    for i, p in enumerate(branch.convs):
        h = hgnn_conv_forward(h, lap, p, activate=i < last)
        if i < last:
            h = dropout(h, drop, training, rng)
    return h


def _res_stack(
    x: Tensor,
    lap: Laplacian,
    branch: BranchParams,
    schedule: ResSchedule,
    drop: float,
    training: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    h = relu(_apply_affine(x, branch.input_map))
    x0 = h
    h = dropout(h, drop, training, rng)
    for l, p in enumerate(branch.convs, start=1):
        h = res_conv_forward(
            h, x0, lap, p, schedule.alpha(l), schedule.beta(l), activate=True
        )
        h = dropout(h, drop, training, rng)
    return _apply_affine(h, branch.output_map)


def forward(
    cfg: ModelConfig,
    ds: MultiModalDataset,
    params: ModelParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits for every vertex under the configured family."""
    if cfg.family in MULTI_FAMILIES:
        if len(params.branches) != ds.n_modalities:
            raise ValidationError(
                f"{cfg.family} needs one branch per modality: "
                f"{len(params.branches)} branches for {ds.n_modalities} modalities"
            )
        inputs = [
            (Tensor(m.features), laplacian(m.hypergraph)) for m in ds.modalities
        ]
    else:
        if len(params.branches) != 1:
            raise ValidationError(
                f"{cfg.family} is single-branch, got {len(params.branches)} branches"
            )
        features, g = concat_modalities(ds)
        inputs = [(Tensor(features), laplacian(g))]

    outputs = []
    for (x, lap), branch in zip(inputs, params.branches):
        if cfg.family in RESIDUAL_FAMILIES:
            out = _res_stack(x, lap, branch, cfg.res_schedule, cfg.dropout,
                             training, rng)
        elif cfg.family in ("hgnn", "multihgnn"):
            out = _plain_stack(x, lap, branch, cfg.dropout, training, rng)
        else:
            raise ParameterError(f"unknown family {cfg.family!r}")
        outputs.append(out)
    return fuse_mean(outputs)
