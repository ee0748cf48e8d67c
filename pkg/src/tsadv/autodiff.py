"""Minimal reverse-mode differentiation over a fixed op set.

The graph is built eagerly: every op returns a new ``Tensor`` whose
``_backward`` closure knows how to push its output gradient into its
parents. The op set is exactly what the 1D-CNN classifier and the attack
losses need; there is no general graph compiler.

All arithmetic is float64. A graph and its tensors belong to a single
thread; independent graphs may run in parallel.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, GraphError

# a backward closure receives (output_grad, push) where push(parent, grad)
# routes a gradient contribution to a parent tensor
PushFn = Callable[["Tensor", np.ndarray], None]
BackwardFn = Callable[[np.ndarray, PushFn], None]


class Tensor:
    """A node in the compute graph: a float64 array plus gradient plumbing.

    ``requires_grad`` marks a tensor as differentiable. It propagates
    forward automatically: an op output requires grad iff any input does.
    Gradients accumulate into ``grad`` on repeated backward calls until
    ``zero_grad`` is called.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward: Optional[BackwardFn] = None,
    ):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad = None


def _out(values, parents, backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(values, requires_grad=req, _parents=parents,
                  _backward=backward if req else None)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.values.shape != b.values.shape:
        raise DimensionError(
            f"{op}: shape mismatch {a.values.shape} vs {b.values.shape}")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def backward(g, push):
        if a.requires_grad:
            push(a, g)
        if b.requires_grad:
            push(b, g)

    return _out(a.values + b.values, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def backward(g, push):
        if a.requires_grad:
            push(a, g)
        if b.requires_grad:
            push(b, -g)

    return _out(a.values - b.values, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")

    def backward(g, push):
        if a.requires_grad:
            push(a, g * b.values)
        if b.requires_grad:
            push(b, g * a.values)

    return _out(a.values * b.values, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g, push):
        if a.requires_grad:
            push(a, g * s)

    return _out(a.values * s, (a,), backward)


def add_scalar(a: Tensor, s: float) -> Tensor:
    def backward(g, push):
        if a.requires_grad:
            push(a, g)

    return _out(a.values + float(s), (a,), backward)


def tsum(a: Tensor) -> Tensor:
    def backward(g, push):
        if a.requires_grad:
            push(a, np.full_like(a.values, float(g)))

    return _out(a.values.sum(), (a,), backward)


def tabs(a: Tensor) -> Tensor:
    # subgradient at 0 is taken as 0
    def backward(g, push):
        if a.requires_grad:
            push(a, g * np.sign(a.values))

    return _out(np.abs(a.values), (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g, push):
        if a.requires_grad:
            push(a, g * 2.0 * a.values)

    return _out(a.values * a.values, (a,), backward)


def tsqrt(a: Tensor) -> Tensor:
    out_vals = np.sqrt(a.values)

    def backward(g, push):
        if a.requires_grad:
            # subgradient 0 at the origin; needed because attacks start
            # from all-zero noise where the L2 norm is not differentiable
            denom = np.where(out_vals > 0.0, 2.0 * out_vals, np.inf)
            push(a, g / denom)

    return _out(out_vals, (a,), backward)


def relu(a: Tensor) -> Tensor:
    if a.values.size == 0:
        raise DimensionError("relu: empty input")
    mask = a.values > 0.0

    def backward(g, push):
        if a.requires_grad:
            push(a, g * mask)

    return _out(a.values * mask, (a,), backward)


def successive_diff(a: Tensor) -> Tensor:
    """x[1:] - x[:-1] along a 1-D tensor."""
    if a.values.ndim != 1 or a.values.size < 2:
        raise DimensionError(
            f"successive_diff: need a 1-D tensor of length >= 2, got shape {a.values.shape}")

    def backward(g, push):
        if a.requires_grad:
            ga = np.zeros_like(a.values)
            ga[1:] += g
            ga[:-1] -= g
            push(a, ga)

    return _out(np.diff(a.values), (a,), backward)


# ---------------------------------------------------------------------------
# network ops


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 1-D convolution.

    x: [T] (single channel) or [C_in, T]; kernels: [C_out, C_in, W] with W
    odd; bias: [C_out]. Output: [C_out, T].
    """
    xv = x.values
    single = xv.ndim == 1
    x2 = xv[None, :] if single else xv
    kv = kernels.values
    if kv.ndim != 3:
        raise DimensionError(
            f"conv1d: kernels must be [C_out, C_in, W], got shape {kv.shape}")
    c_out, c_in, width = kv.shape
    if width % 2 == 0:
        raise DimensionError(f"conv1d: kernel width must be odd, got {width}")
    if x2.ndim != 2 or x2.shape[0] != c_in:
        raise DimensionError(
            f"conv1d: input shape {xv.shape} incompatible with kernels {kv.shape}")
    t_len = x2.shape[1]
    if t_len < width:
        raise DimensionError(
            f"conv1d: input length {t_len} shorter than kernel width {width}")
    if bias.values.shape != (c_out,):
        raise DimensionError(
            f"conv1d: bias shape {bias.values.shape} incompatible with kernels {kv.shape}")

    pad = width // 2
    xp = np.pad(x2, ((0, 0), (pad, pad)))
    windows = sliding_window_view(xp, width, axis=1)  # [C_in, T, W]
    out = np.einsum("kcw,ctw->kt", kv, windows) + bias.values[:, None]

    def backward(g, push):
        if kernels.requires_grad:
            push(kernels, np.einsum("kt,ctw->kcw", g, windows))
        if bias.requires_grad:
            push(bias, g.sum(axis=1))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for w in range(width):
                gxp[:, w:w + t_len] += np.einsum("kt,kc->ct", g, kv[:, :, w])
            gx = gxp[:, pad:pad + t_len]
            push(x, gx[0] if single else gx)

    return _out(out, (x, kernels, bias), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """[C, T] -> [C], arithmetic mean over time."""
    if x.values.ndim != 2 or x.values.size == 0:
        raise DimensionError(
            f"global_avg_pool: need a non-empty [C, T] tensor, got shape {x.values.shape}")
    t_len = x.values.shape[1]

    def backward(g, push):
        if x.requires_grad:
            push(x, np.repeat(g[:, None] / t_len, t_len, axis=1))

    return _out(x.values.mean(axis=1), (x,), backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """weight @ x + bias for a 1-D x."""
    wv = weight.values
    if x.values.ndim != 1 or wv.ndim != 2 or wv.shape[1] != x.values.shape[0]:
        raise DimensionError(
            f"dense: weight {wv.shape} incompatible with input {x.values.shape}")
    if bias.values.shape != (wv.shape[0],):
        raise DimensionError(
            f"dense: bias {bias.values.shape} incompatible with weight {wv.shape}")

    def backward(g, push):
        if weight.requires_grad:
            push(weight, np.outer(g, x.values))
        if bias.requires_grad:
            push(bias, g)
        if x.requires_grad:
            push(x, wv.T @ g)

    return _out(wv @ x.values + bias.values, (x, weight, bias), backward)


def log_softmax(v: Tensor) -> Tensor:
    """Numerically stable log-softmax of a 1-D vector (max subtraction)."""
    if v.values.ndim != 1 or v.values.size == 0:
        raise DimensionError(
            f"log_softmax: need a non-empty vector, got shape {v.values.shape}")
    shifted = v.values - v.values.max()
    logq = shifted - np.log(np.exp(shifted).sum())
    q = np.exp(logq)

    def backward(g, push):
        if v.requires_grad:
            push(v, g - q * g.sum())

    return _out(logq, (v,), backward)


# ---------------------------------------------------------------------------
# backward driver


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(tensor) into every differentiable tensor.

    ``root`` must be scalar. Each node's local backward runs exactly once,
    in reverse topological order. Per-call gradients are staged in a local
    map, so calling backward twice doubles ``grad`` instead of compounding
    through intermediate nodes.
    """
    if root.values.size != 1:
        raise GraphError(
            f"backward: root must be scalar, got shape {root.values.shape}")
    if not root.requires_grad:
        return

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    local: dict[int, np.ndarray] = {id(root): np.ones_like(root.values)}

    def push(node: Tensor, g: np.ndarray) -> None:
        key = id(node)
        if key in local:
            local[key] = local[key] + g
        else:
            local[key] = g

    for node in reversed(order):
        g = local.get(id(node))
        if g is None:
            continue
        if node._backward is not None:
            node._backward(np.asarray(g).reshape(node.values.shape), push)
        if node.grad is None:
            node.grad = np.array(g, dtype=np.float64).reshape(node.values.shape)
        else:
            node.grad += np.asarray(g).reshape(node.values.shape)
