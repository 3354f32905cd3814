"""Dense float64 tensors with a reverse-mode gradient tape.

Every value is a plain numpy array wrapped in a :class:`Tensor`. Forward ops
record their parents and a backward closure; :func:`backward` walks the graph
in reverse topological order and accumulates gradients into every tensor with
``requires_grad`` set. Only the handful of ops the model needs are provided;
broadcasting support is limited to what those ops require.
"""

from __future__ import annotations

import threading
import zlib
from typing import Callable, Iterable, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for tensor-engine failures."""


class InvalidShapeError(AutodiffError):
    """Shape is empty or has a non-positive dimension."""


class ContractError(AutodiffError):
    """An op was called outside its contract (shape mismatch, missing grad, ...)."""


class DegenerateSoftmaxError(AutodiffError):
    """A softmax slice had every position masked out."""


class NondeterminismError(AutodiffError):
    """Two forward evaluations of a supposedly deterministic function differed."""


_STATE = threading.local()


def _grad_enabled() -> bool:
    return getattr(_STATE, "grad_enabled", True)


class no_grad:
    """Context manager disabling tape recording (forward-only evaluation)."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _STATE.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _STATE.grad_enabled = self._prev
        return False


class Tensor:
    """A float64 array plus optional gradient and tape bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(inputs: Iterable[Tensor]) -> bool:
    return _grad_enabled() and any(t.requires_grad for t in inputs)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _track(parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _node(data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(-_unbroadcast(g, b.shape))

    return _node(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(-g)

    return _node(-a.data, (a,), bw)


def scale(a, c: float) -> Tensor:
    """Multiply by a python constant (not a tape participant)."""
    a = as_tensor(a)
    c = float(c)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * c)

    return _node(a.data * c, (a,), bw)


def add_const(a, c: float) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g)

    return _node(a.data + float(c), (a,), bw)


def power_const(a, p: float) -> Tensor:
    """Elementwise a**p for constant p; caller guarantees a > 0 for fractional p."""
    a = as_tensor(a)
    p = float(p)
    data = a.data ** p

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * p * a.data ** (p - 1.0))

    return _node(data, (a,), bw)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # split by sign to avoid exp overflow on large magnitudes
    x = a.data
    pos = x >= 0
    ex = np.exp(np.where(pos, -x, x))
    data = np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * data * (1.0 - data))

    return _node(data, (a,), bw)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - data * data))

    return _node(data, (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    keep = a.data > 0.0

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * keep)

    return _node(a.data * keep, (a,), bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * data)

    return _node(data, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g / a.data)

    return _node(np.log(a.data), (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _node(data, (a, b), bw)


def bmm(a, b) -> Tensor:
    """Batched matmul on stacked matrices: (B,m,k) @ (B,k,n) -> (B,m,n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise ContractError(f"bmm expects 3-D operands, got {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.matmul(g, b.data.transpose(0, 2, 1)))
        if b.requires_grad:
            b.accumulate_grad(np.matmul(a.data.transpose(0, 2, 1), g))

    return _node(data, (a, b), bw)


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g.transpose(inv))

    return _node(a.data.transpose(axes), (a,), bw)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    orig = a.shape

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(orig))

    return _node(a.data.reshape(tuple(shape)), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _node(data, tuple(tensors), bw)


def getitem(a, key) -> Tensor:
    """Basic (slice / int) indexing; each output element maps to one input element."""
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] = g
            a.accumulate_grad(full)

    return _node(a.data[key], (a,), bw)


def gather(table, idx) -> Tensor:
    """Row lookup ``table[idx]`` with an integer index array of any shape."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, idx, g)
            table.accumulate_grad(full)

    return _node(table.data[idx], (table,), bw)


def take_cols(a, idx) -> Tensor:
    """For 2-D ``a`` and integer index array ``idx``: result[i, ...] = a[i, idx]."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2:
        raise ContractError("take_cols expects a 2-D operand")
    m = a.shape[0]
    rows = np.arange(m).reshape((m,) + (1,) * idx.ndim)

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (rows, idx[None]), g)
            a.accumulate_grad(full)

    return _node(a.data[:, idx], (a,), bw)


def segment_sum(messages, seg_ids, num_segments: int) -> Tensor:
    """Sum message rows into per-segment buckets: out[s] = sum of rows with seg_ids==s."""
    messages = as_tensor(messages)
    seg_ids = np.asarray(seg_ids, dtype=np.int64)
    out = np.zeros((num_segments,) + messages.shape[1:], dtype=np.float64)
    np.add.at(out, seg_ids, messages.data)

    def bw(g):
        if messages.requires_grad:
            messages.accumulate_grad(g[seg_ids])

    return _node(out, (messages,), bw)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if a.requires_grad:
            if axis is None:
                a.accumulate_grad(np.broadcast_to(g, a.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a.accumulate_grad(np.broadcast_to(gg, a.shape).copy())

    return _node(data, (a,), bw)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# softmax / dropout
# ---------------------------------------------------------------------------

def softmax(x, axis: int = -1, mask=None, zero_empty: bool = False) -> Tensor:
    """Masked softmax along ``axis``.

    ``mask`` is a boolean array of the same shape; False positions get
    probability exactly 0. A slice with every position masked raises
    :class:`DegenerateSoftmaxError` unless ``zero_empty`` is set, in which
    case the whole slice is 0 (used for empty neighborhoods).
    """
    x = as_tensor(x)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ContractError(f"mask shape {mask.shape} != input shape {x.shape}")
        any_live = mask.any(axis=axis, keepdims=True)
        if not any_live.all():
            if not zero_empty:
                raise DegenerateSoftmaxError("softmax slice with all positions masked")
        neg = np.where(mask, x.data, -np.inf)
        # fully-masked slices would produce nan from (-inf) - (-inf)
        hi = np.where(any_live, neg.max(axis=axis, keepdims=True), 0.0)
        e = np.exp(np.where(mask, neg - hi, -np.inf))
        e = np.where(mask, e, 0.0)
        denom = e.sum(axis=axis, keepdims=True)
        denom = np.where(any_live, denom, 1.0)
        data = e / denom
    else:
        hi = x.data.max(axis=axis, keepdims=True)
        e = np.exp(x.data - hi)
        data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if x.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            x.accumulate_grad(data * (g - inner))

    return _node(data, (x,), bw)


def dropout(x, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    x = as_tensor(x)
    if not train or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g * keep)

    return _node(x.data * keep, (x,), bw)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, store: "ParameterStore | None" = None) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    When a :class:`ParameterStore` is given, parameters that the loss never
    touched receive an explicit zero gradient so the optimizer contract holds.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss.requires_grad:
        loss.accumulate_grad(np.ones_like(loss.data))
        for node in reversed(_topo_order(loss)):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)
    if store is not None:
        for t in store.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# initialization and the parameter store
# ---------------------------------------------------------------------------

INIT_SCHEMES = ("zeros", "glorot_uniform", "embedding_normal")


def tensor_init(shape: Sequence[int], scheme: str, seed: int) -> Tensor:
    """Create a parameter tensor, deterministic for a given (shape, scheme, seed)."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise InvalidShapeError(f"invalid shape {shape}")
    if scheme == "zeros":
        data = np.zeros(shape, dtype=np.float64)
    elif scheme == "glorot_uniform":
        fan_in = shape[0]
        fan_out = shape[1] if len(shape) > 1 else shape[0]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        rng = np.random.default_rng(seed)
        data = rng.uniform(-bound, bound, size=shape)
    elif scheme == "embedding_normal":
        std = 1.0 / np.sqrt(shape[-1])
        rng = np.random.default_rng(seed)
        data = rng.normal(0.0, std, size=shape)
    else:
        raise ContractError(f"unknown init scheme {scheme!r}")
    return Tensor(data, requires_grad=True)


def _name_seed(base_seed: int, name: str) -> int:
    return ((int(base_seed) & 0xFFFFFFFFFFFFFFFF) << 32) ^ zlib.crc32(name.encode("utf-8"))


class ParameterStore:
    """Named registry of trainable tensors, seeded per-name for reproducibility."""

    def __init__(self, rng_seed: int):
        self.rng_seed = int(rng_seed)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape: Sequence[int], scheme: str) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = tensor_init(shape, scheme, _name_seed(self.rng_seed, name))
        self._params[name] = t
        return t

    def register(self, name: str, tensor: Tensor) -> Tensor:
        """Register an externally created tensor (used for shared parameters)."""
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

class GradcheckReport:
    """Per-parameter worst relative error between analytic and numeric grads."""

    def __init__(self, per_param: dict[str, float], tol: float):
        self.per_param = per_param
        self.tol = tol
        self.failures = sorted(n for n, e in per_param.items() if e > tol)
        self.max_rel_err = max(per_param.values()) if per_param else 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def __repr__(self) -> str:
        status = "pass" if self.passed else f"FAIL({len(self.failures)})"
        return f"GradcheckReport(max_rel_err={self.max_rel_err:.3e}, {status})"


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-3)


def gradcheck(f: Callable[[], Tensor], store: ParameterStore,
              h: float = 1e-5, tol: float = 1e-4) -> GradcheckReport:
    """Compare analytic gradients of ``f()`` against central finite differences.

    ``f`` must be deterministic (run any dropout in eval mode); two forward
    evaluations are compared first and a mismatch raises
    :class:`NondeterminismError`.
    """
    with no_grad():
        v1 = f().item()
        v2 = f().item()
    if v1 != v2:
        raise NondeterminismError("function value changed between two forward passes")

    store.zero_grads()
    loss = f()
    backward(loss, store)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in store.items()}
    store.zero_grads()

    per_param: dict[str, float] = {}
    with no_grad():
        for name, t in store.items():
            flat = t.data.reshape(-1)
            worst = 0.0
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                worst = max(worst, _rel_err(analytic[name].reshape(-1)[i], numeric))
            per_param[name] = worst
    return GradcheckReport(per_param, tol)


# ---------------------------------------------------------------------------
# small composite helpers used across the model
# ---------------------------------------------------------------------------

def linear(x, w, b=None) -> Tensor:
    """x @ w (+ b). x is (rows, in), w is (in, out), b is (out,)."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def layer_norm(x, gamma, beta, eps: float = 1e-10) -> Tensor:
    """Row-wise layer normalization with affine rescale, built from primitives."""
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power_const(add_const(var, eps), -0.5)
    normed = mul(centered, inv)
    return add(mul(normed, gamma), beta)
