"""Minimal dense-tensor reverse-mode autodiff engine with Adam.

Values are numpy arrays (float64 by default; float32 works for training).
Each op builds a graph node with a backward closure; `backward` walks the
graph in reverse topological order and accumulates gradients. Every op
output is checked for NaN/Inf and raises FloatingPointError when tripped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

LAYER_NORM_EPS = 1e-12
_GELU_C = math.sqrt(2.0 / math.pi)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by {op}")


class Tensor:
    """A graph node: numpy value, optional gradient slot, parents, backward fn."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", parents=()):
        self.data = np.asarray(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple[Tensor, ...] = tuple(parents)
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str = "param") -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, op=name)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=False, op="const")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _node(data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    _check_finite(data, op)
    requires = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires, op=op, parents=parents)
    if requires:
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def back(grad):
        _accumulate(a, _unbroadcast(grad, a.data.shape))
        _accumulate(b, _unbroadcast(grad, b.data.shape))

    return _node(out_data, "add", (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def back(grad):
        _accumulate(a, _unbroadcast(grad * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(grad * a.data, b.data.shape))

    return _node(out_data, "mul", (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    out_data = a.data * c

    def back(grad):
        _accumulate(a, grad * c)

    return _node(out_data, "scale", (a,), back)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise UsageError("matmul requires arrays of rank >= 1")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError as e:
        raise UsageError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}") from e

    def back(grad):
        if b.data.ndim == 1 and a.data.ndim >= 2:
            # (..., m, k) @ (k,) -> (..., m)
            _accumulate(a, _unbroadcast(grad[..., :, None] * b.data, a.data.shape))
            _accumulate(b, _unbroadcast(np.einsum("...m,...mk->k", grad, a.data), b.data.shape))
        elif a.data.ndim == 1 and b.data.ndim >= 2:
            # (k,) @ (..., k, n) -> (..., n)
            _accumulate(a, _unbroadcast(np.einsum("...n,...kn->k", grad, b.data), a.data.shape))
            _accumulate(b, _unbroadcast(a.data[:, None] * grad[..., None, :], b.data.shape))
        elif a.data.ndim == 1 and b.data.ndim == 1:
            _accumulate(a, grad * b.data)
            _accumulate(b, grad * a.data)
        else:
            _accumulate(a, _unbroadcast(np.matmul(grad, np.swapaxes(b.data, -1, -2)), a.data.shape))
            _accumulate(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), grad), b.data.shape))

    return _node(out_data, "matmul", (a, b), back)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise UsageError(
            f"embedding id out of range [0, {table.data.shape[0]}): min={ids.min()}, max={ids.max()}"
        )
    out_data = table.data[ids]

    def back(grad):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, grad)

    return _node(out_data, "embedding_lookup", (table,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out_data = xhat * gain.data + bias.data

    def back(grad):
        d = x.data.shape[-1]
        dxhat = grad * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        _accumulate(x, dx)
        axes = tuple(range(grad.ndim - 1))
        _accumulate(gain, _unbroadcast((grad * xhat).sum(axis=axes) if axes else grad * xhat, gain.data.shape))
        _accumulate(bias, _unbroadcast(grad.sum(axis=axes) if axes else grad, bias.data.shape))

    return _node(out_data, "layer_norm", (x, gain, bias), back)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=-1, keepdims=True)

    def back(grad):
        inner = (grad * out_data).sum(axis=-1, keepdims=True)
        _accumulate(x, out_data * (grad - inner))

    return _node(out_data, "softmax", (x,), back)


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit (tanh approximation)."""
    u = _GELU_C * (x.data + 0.044715 * x.data**3)
    t = np.tanh(u)
    out_data = 0.5 * x.data * (1.0 + t)

    def back(grad):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x.data**2)
        dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t**2) * du
        _accumulate(x, grad * dx)

    return _node(out_data, "gelu", (x,), back)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; p = 0 is the identity. Mask is drawn from `rng`."""
    if p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise UsageError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise UsageError("dropout with p > 0 requires a seeded Generator")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out_data = x.data * mask

    def back(grad):
        _accumulate(x, grad * mask)

    return _node(out_data, "dropout", (x,), back)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_data = x.data.reshape(shape)

    def back(grad):
        _accumulate(x, grad.reshape(x.data.shape))

    return _node(out_data, "reshape", (x,), back)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    out_data = x.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def back(grad):
        _accumulate(x, grad.transpose(inverse))

    return _node(out_data, "transpose", (x,), back)


def cross_entropy(logits: Tensor, index: int) -> Tensor:
    """Negative log softmax probability of `index`; logits are a vector."""
    if logits.data.ndim != 1:
        raise UsageError(f"cross_entropy expects a 1-D logits vector, got shape {logits.data.shape}")
    n = logits.data.shape[0]
    if not 0 <= index < n:
        raise UsageError(f"cross_entropy index {index} out of range for {n} classes")
    m = logits.data.max()
    lse = m + np.log(np.exp(logits.data - m).sum())
    out_data = np.asarray(lse - logits.data[index])

    def back(grad):
        probs = np.exp(logits.data - lse)
        probs[index] -= 1.0
        _accumulate(logits, grad * probs)

    return _node(out_data, "cross_entropy", (logits,), back)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum())

    def back(grad):
        _accumulate(x, np.full_like(x.data, float(grad)))

    return _node(out_data, "sum", (x,), back)


def mean_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.mean())

    def back(grad):
        _accumulate(x, np.full_like(x.data, float(grad) / x.data.size))

    return _node(out_data, "mean", (x,), back)


def mean_of(tensors: list[Tensor]) -> Tensor:
    """Mean of scalar tensors (batch loss aggregation)."""
    if not tensors:
        raise UsageError("mean_of requires at least one tensor")
    total = tensors[0]
    for t in tensors[1:]:
        total = add(total, t)
    return scale(total, 1.0 / len(tensors))


def backward(loss: Tensor) -> None:
    """Populate gradients of all reachable parameters; accumulates on repeat."""
    if loss.data.shape != ():
        raise UsageError(f"backward requires a scalar loss, got shape {loss.data.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))

    _accumulate(loss, np.asarray(1.0))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


@dataclass
class AdamState:
    """Per-parameter Adam moments plus step count and hyperparameters."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list["Tensor"], lr: float = 1e-3) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            lr=lr,
        )


def adam_step(params: list["Tensor"], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place; deterministic given inputs."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UsageError("params, grads, and state must have matching lengths")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.data.shape != g.shape:
            raise UsageError(
                f"gradient shape {g.shape} does not match parameter shape {p.data.shape}"
            )
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm and total > 0.0:
        factor = max_norm / total
        for g in grads:
            g *= factor
    return total
