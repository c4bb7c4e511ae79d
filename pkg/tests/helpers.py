"""Shared test utilities: finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from hypernet import BranchParams, ConvParams, ModelParams, Tape, Tensor, backward


def numeric_grad(build, params, h=1e-6):
    """Central finite-difference gradients of a scalar-valued function.

    build(tensors) must construct a fresh graph on a fresh tape and return
    the scalar loss Tensor; params is a list of ndarrays to perturb.
    """
    grads = []
    for idx, base in enumerate(params):
        g = np.zeros_like(base)
        for pos in np.ndindex(*base.shape):
            bumped = [p.copy() for p in params]
            bumped[idx][pos] = base[pos] + h
            hi = _eval(build, bumped)
            bumped[idx][pos] = base[pos] - h
            lo = _eval(build, bumped)
            g[pos] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def _eval(build, arrays):
    tape = Tape()
    tensors = [Tensor(a, requires_grad=True, tape=tape) for a in arrays]
    return build(tensors).item()


def analytic_grad(build, params):
    """Backprop gradients for the same build callable."""
    tape = Tape()
    tensors = [Tensor(a.copy(), requires_grad=True, tape=tape) for a in params]
    loss = build(tensors)
    grads = backward(loss)
    return [grads[t] for t in tensors]


def check_grads(build, params, rtol=1e-5, atol=1e-7, h=1e-6):
    got = analytic_grad(build, params)
    want = numeric_grad(build, params, h=h)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, rtol=rtol, atol=atol)


def params_like(params: ModelParams, tensors) -> ModelParams:
    """Rebuild a ModelParams structure around new leaf tensors.

    ``tensors`` must follow params.tensors() order (per branch: input map,
    convs, output map; weight before bias).
    """
    it = iter(tensors)

    def conv_like(p):
        if p is None:
            return None
        w = next(it)
        b = next(it) if p.bias is not None else None
        return ConvParams(weight=w, bias=b)

    branches = []
    for b in params.branches:
        input_map = conv_like(b.input_map)
        convs = [conv_like(c) for c in b.convs]
        output_map = conv_like(b.output_map)
        branches.append(
            BranchParams(convs=convs, input_map=input_map, output_map=output_map)
        )
    return ModelParams(branches=branches)
