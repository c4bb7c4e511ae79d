"""Dense 2-D float64 tensors with reverse-mode automatic differentiation.

Operations append themselves to a :class:`Tape` in construction order, which
is already a valid topological order, so a single reverse sweep over the
records computes gradients for every watched tensor.  A tape is a single-use,
single-threaded unit of work: training loops create a fresh tape per step and
re-watch their parameters on it.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError, TapeError, ValidationError


class Tensor:
    """A dense matrix of 64-bit floats with optional gradient tracking.

    ``data`` is always rank 2.  ``grad`` is populated by :func:`backward`
    for every tensor with ``requires_grad`` watched by the consumed tape.
    A tensor created without a tape can be attached later via
    :meth:`Tape.watch`; parameters that persist across training steps are
    re-watched on each step's fresh tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape", "node_id")

    def __init__(self, data, requires_grad: bool = False, tape: "Tape | None" = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got array of rank {arr.ndim}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None
        self.node_id: int | None = None
        if tape is not None:
            tape.watch(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _Record:
    """One recorded primitive: output node, input nodes, and a backward rule."""

    __slots__ = ("out_id", "in_ids", "backward_fn")

    def __init__(
        self,
        out_id: int,
        in_ids: tuple[int | None, ...],
        backward_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]],
    ):
        self.out_id = out_id
        self.in_ids = in_ids
        self.backward_fn = backward_fn


class Tape:
    """Wengert list of primitive operations.

    Tensors register in creation order and operations append backward rules,
    so inputs always precede the operations consuming them.  A tape can be
    consumed by :func:`backward` exactly once.
    """

    def __init__(self) -> None:
        self._tensors: list[Tensor] = []
        self._records: list[_Record] = []
        self._spent = False

    def watch(self, t: Tensor) -> None:
        """Attach ``t`` to this tape (moving it off any previous tape)."""
        if t.tape is self:
            return
        if self._spent:
            raise TapeError("cannot watch tensors on a tape already consumed by backward")
        t.tape = self
        t.node_id = len(self._tensors)
        t.grad = None
        self._tensors.append(t)

    def __len__(self) -> int:
        return len(self._records)


def _common_tape(inputs: Sequence[Tensor]) -> Tape | None:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise TapeError("operands belong to different tapes")
    return tape


def _attach(
    out: Tensor,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]],
) -> Tensor:
    """Record an op on the inputs' tape; constants pass through unrecorded."""
    if not any(t.requires_grad for t in inputs):
        return out
    tape = _common_tape(inputs)
    if tape is None:
        raise TapeError(
            "gradient-tracking operands must be watched by a Tape before use"
        )
    if tape._spent:
        raise TapeError("tape already consumed by backward; build a fresh tape")
    in_ids = []
    for t in inputs:
        if t.requires_grad and t.tape is None:
            tape.watch(t)
        in_ids.append(t.node_id if t.requires_grad else None)
    out.requires_grad = True
    tape.watch(out)
    tape._records.append(_Record(out.node_id, tuple(in_ids), backward_fn))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b``."""
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def bwd(g: np.ndarray):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _attach(out, (a, b), bwd)


def add_scaled(a: Tensor, b: Tensor, ca: float, cb: float) -> Tensor:
    """Linear combination ``ca*a + cb*b`` of two equal-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError(
            f"add_scaled needs equal shapes, got {a.data.shape} and {b.data.shape}"
        )
    ca = float(ca)
    cb = float(cb)
    out = Tensor(ca * a.data + cb * b.data)

    def bwd(g: np.ndarray):
        ga = ca * g if a.requires_grad else None
        gb = cb * g if b.requires_grad else None
        return ga, gb

    return _attach(out, (a, b), bwd)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a ``1 x d`` bias row to every row of an ``n x d`` tensor."""
    if bias.data.shape != (1, a.data.shape[1]):
        raise ShapeError(
            f"bias shape {bias.data.shape} does not match input {a.data.shape}"
        )
    out = Tensor(a.data + bias.data)

    def bwd(g: np.ndarray):
        ga = g if a.requires_grad else None
        gb = g.sum(axis=0, keepdims=True) if bias.requires_grad else None
        return ga, gb

    return _attach(out, (a, bias), bwd)


def relu(a: Tensor) -> Tensor:
    """Elementwise ``max(0, x)``; the subgradient at 0 is taken as 0."""
    out = Tensor(np.maximum(a.data, 0.0))

    def bwd(g: np.ndarray):
        return (np.where(a.data > 0.0, g, 0.0),)

    return _attach(out, (a,), bwd)


def total_sum(a: Tensor) -> Tensor:
    """Sum of all entries, as a 1x1 tensor."""
    out = Tensor([[a.data.sum()]])

    def bwd(g: np.ndarray):
        return (np.full_like(a.data, g[0, 0]),)

    return _attach(out, (a,), bwd)


def dropout(a: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: zero entries with probability ``p``, scale survivors.

    Identity (no RNG draw) when ``p == 0`` or ``training`` is false.
    """
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ParameterError("dropout in training mode needs a random generator")
    scale = 1.0 / (1.0 - p)
    mask = (rng.random(a.data.shape) >= p) * scale
    out = Tensor(a.data * mask)

    def bwd(g: np.ndarray):
        return (g * mask,)

    return _attach(out, (a,), bwd)


def softmax_cross_entropy(logits: Tensor, labels, mask) -> Tensor:
    """Mean negative log-softmax of the true class over the masked rows.

    ``labels`` holds one class index per row; ``mask`` is a boolean row
    selector (``None`` selects every row).  Row-wise max subtraction keeps
    the computation finite for large logit magnitudes.
    """
    n, c = logits.data.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if mask is None:
        mask = np.ones(n, dtype=bool)
    mask = np.asarray(mask)
    if mask.shape != (n,) or mask.dtype != np.bool_:
        raise ShapeError(f"mask must be a boolean vector of length {n}")
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ParameterError("softmax_cross_entropy needs a non-empty mask")
    y = labels[rows].astype(np.int64)
    if y.min() < 0 or y.max() >= c:
        raise ValidationError(f"labels must lie in [0, {c})")

    z = logits.data[rows]
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    losses = lse[:, 0] - z[np.arange(rows.size), y]
    out = Tensor([[losses.mean()]])

    def bwd(g: np.ndarray):
        p = np.exp(z - lse)
        p[np.arange(rows.size), y] -= 1.0
        gl = np.zeros_like(logits.data)
        gl[rows] = p * (g[0, 0] / rows.size)
        return (gl,)

    return _attach(out, (logits,), bwd)


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Sets ``grad`` on every ``requires_grad`` tensor watched by the loss's
    tape (zero for watched tensors the loss does not depend on) and returns
    those gradients keyed by tensor.  The tape is consumed: a second call
    raises; ops recorded afterwards raise as well.
    """
    if loss.data.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 scalar tensor, got {loss.data.shape}")
    tape = loss.tape
    if tape is None:
        raise TapeError("loss is not attached to a tape")
    if tape._spent:
        raise TapeError("backward was already called on this tape")
    tape._spent = True

    grads: list[np.ndarray | None] = [None] * len(tape._tensors)
    grads[loss.node_id] = np.ones((1, 1))
    for rec in reversed(tape._records):
        g = grads[rec.out_id]
        if g is None:
            continue
        for node_id, gin in zip(rec.in_ids, rec.backward_fn(g)):
            if node_id is None or gin is None:
                continue
            if grads[node_id] is None:
                grads[node_id] = gin
            else:
                grads[node_id] = grads[node_id] + gin

    result: dict[Tensor, np.ndarray] = {}
    for t in tape._tensors:
        if not t.requires_grad:
            continue
        g = grads[t.node_id]
        t.grad = np.zeros_like(t.data) if g is None else g
        result[t] = t.grad
    # A consumed tape keeps only its spent flag. Dropping the records and
    # the tensor list breaks the tensor <-> tape reference cycle, so a
    # step's intermediates (and the arrays captured by backward closures)
    # die by refcount instead of waiting for the cycle collector.
    tape._records.clear()
    tape._tensors.clear()
    return result
