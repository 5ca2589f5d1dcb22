"""Dense tensors with reverse-mode automatic differentiation.

Spatial tensors are laid out channels-last, ``(H, W, C)``, with an
optional leading batch axis ``N``; every op here accepts both the
batched and the single-sample form. Arithmetic runs in float32 by
default; gradient checking switches the whole stack to float64 through
:func:`set_default_dtype` or the :func:`precision` context manager.

Ops are pure given an explicit RNG. Each op records its inputs and a
backward closure on the output tensor, so :func:`backward` can replay
the recorded graph (the tape) exactly once per node in reverse
topological order. Tensors that do not require gradients record
nothing, which keeps inference cheap.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Parameter",
    "Tape",
    "set_default_dtype",
    "default_dtype",
    "precision",
    "he_init",
    "dense",
    "conv2d",
    "depthwise_conv2d",
    "pointwise_conv",
    "global_avg_pool",
    "max_pool",
    "relu",
    "sigmoid",
    "softmax",
    "sqrt",
    "dropout",
    "cross_entropy",
    "backward",
    "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes do not conform."""


_DEFAULT_DTYPE = np.dtype(np.float32)


def set_default_dtype(dtype) -> None:
    """Set the dtype new tensors are created with (float32 or float64)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _DEFAULT_DTYPE = dt


def default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default dtype (used for gradient checking)."""
    old = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


ArrayLike = Union[np.ndarray, float, int, Sequence]


class Tensor:
    """A dense array plus the bookkeeping needed for backpropagation.

    ``grad`` is populated by :func:`backward` and accumulates additively:
    using a tensor in two places sums both contributions.
    """

    __slots__ = ("data", "grad", "requires_grad", "op_name", "_parents", "_grad_fn")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else _DEFAULT_DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op_name = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op_name}, requires_grad={self.requires_grad})"

    # -- generic arithmetic (used to compose the named ops below) --

    def __add__(self, other):
        return _add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return _add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return _add(self, _neg(_as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return _add(_as_tensor(other, self.dtype), _neg(self))

    def __neg__(self):
        return _neg(self)

    def __mul__(self, other):
        return _mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return _mul(_as_tensor(other, self.dtype), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return _sum_all(self)

    def mean(self) -> "Tensor":
        return _mul(_sum_all(self), _as_tensor(1.0 / self.size, self.dtype))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _reshape(self, shape)


class Parameter(Tensor):
    """Trainable leaf tensor; always carries a zero-initialized gradient buffer."""

    def __init__(self, data: Union[Tensor, ArrayLike], dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.grad = np.zeros_like(self.data)


class Tape:
    """Topological record of the ops reachable from one result tensor.

    ``nodes`` is a forward topological order; replaying it reversed
    visits each node exactly once with its output gradient fully
    accumulated before its backward closure runs.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, result: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(result, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype), requires_grad=False, dtype=dtype)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn, name: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op_name = name
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over broadcast axes back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def grad_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(data, (a, b), grad_fn, "add")


def _neg(a: Tensor) -> Tensor:
    def grad_fn(g):
        _accum(a, -g)

    return _result(-a.data, (a,), grad_fn, "neg")


def _mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def grad_fn(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), grad_fn, "mul")


def _sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum(), dtype=a.dtype)

    def grad_fn(g):
        _accum(a, np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))

    return _result(data, (a,), grad_fn, "sum")


def _reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def grad_fn(g):
        _accum(a, g.reshape(a.shape))

    return _result(data, (a,), grad_fn, "reshape")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for ``(in,) @ (in, out)`` and ``(N, in) @ (in, out)``."""
    if b.ndim != 2:
        raise ShapeError(f"matmul expects a 2-d right operand, got {b.shape}")
    if a.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            if a.ndim == 1:
                _accum(b, np.outer(a.data, g))
            else:
                _accum(b, a.data.T @ g)

    return _result(data, (a, b), grad_fn, "matmul")


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root; backward clamps away the pole at zero."""
    data = np.sqrt(a.data)

    def grad_fn(g):
        denom = np.maximum(data, np.asarray(1e-12, dtype=a.dtype))
        _accum(a, g / (2.0 * denom))

    return _result(data, (a,), grad_fn, "sqrt")


def he_init(shape: Sequence[int], fan_in: int, rng: np.random.Generator) -> Tensor:
    """Draw a tensor i.i.d. from N(0, 2/fan_in)."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ValueError(f"shape must have positive extents, got {shape}")
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    std = math.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape), dtype=_DEFAULT_DTYPE)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0)

    def grad_fn(g):
        _accum(x, g * (x.data > 0))

    return _result(data, (x,), grad_fn, "relu")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def grad_fn(g):
        _accum(x, g * out * (1.0 - out))

    return _result(out, (x,), grad_fn, "sigmoid")


def softmax(x: Tensor) -> Tensor:
    """Exp-normalize over the last axis, with max subtraction for stability."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        _accum(x, (g - dot) * out)

    return _result(out, (x,), grad_fn, "softmax")


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and rescale survivors.

    Inference (``training=False``) is the identity, so no rescaling is ever
    needed at prediction time.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    data = x.data * keep * scale

    def grad_fn(g):
        _accum(x, g * keep * scale)

    return _result(data, (x,), grad_fn, "dropout")


def dense(x: Tensor, w: Tensor, b: Optional[Tensor] = None, activation=None) -> Tensor:
    """Fully connected layer: ``activation(x @ w + b)``."""
    out = matmul(x, w)
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"bias shape {b.shape} does not match output width {w.shape[1]}")
        out = _add(out, b)
    if activation is not None:
        out = activation(out)
    return out


def _ensure_batched(x: Tensor, spatial_ndim: int = 3) -> tuple[Tensor, bool]:
    if x.ndim == spatial_ndim:
        return _reshape(x, (1,) + x.shape), False
    if x.ndim == spatial_ndim + 1:
        return x, True
    raise ShapeError(f"expected a {spatial_ndim}-d sample or a batched input, got {x.shape}")


def _stride_pair(stride) -> tuple[int, int]:
    if isinstance(stride, int):
        sh = sw = stride
    else:
        sh, sw = stride
    if sh < 1 or sw < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return sh, sw


def _conv_geometry(h, w, kh, kw, sh, sw, padding):
    if padding == "same":
        ho = -(-h // sh)
        wo = -(-w // sw)
        ph = max((ho - 1) * sh + kh - h, 0)
        pw = max((wo - 1) * sw + kw - w, 0)
    elif padding == "valid":
        if kh > h or kw > w:
            raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w}")
        ho = (h - kh) // sh + 1
        wo = (w - kw) // sw + 1
        ph = pw = 0
    else:
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    return ho, wo, ph, pw


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: Union[int, tuple[int, int]] = 1,
    padding: str = "same",
) -> Tensor:
    """2-d cross-correlation of an ``(H, W, C_in)`` input with a ``(k, k, C_in, C_out)`` kernel."""
    xb, had_batch = _ensure_batched(x)
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be (kh, kw, C_in, C_out), got {kernel.shape}")
    kh, kw, cin, cout = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
    n, h, w, c = xb.shape
    if c != cin:
        raise ShapeError(f"input has {c} channels but kernel expects {cin}")
    sh, sw = _stride_pair(stride)
    ho, wo, ph, pw = _conv_geometry(h, w, kh, kw, sh, sw, padding)
    pt, pl = ph // 2, pw // 2

    xp = np.pad(xb.data, ((0, 0), (pt, ph - pt), (pl, pw - pl), (0, 0)))
    kd = kernel.data
    out = np.zeros((n, ho, wo, cout), dtype=xb.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :]
            out += patch @ kd[i, j]

    def grad_fn(g):
        if kernel.requires_grad:
            dk = np.empty_like(kd)
            for i in range(kh):
                for j in range(kw):
                    patch = xp[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :]
                    dk[i, j] = np.tensordot(patch, g, axes=([0, 1, 2], [0, 1, 2]))
            _accum(kernel, dk)
        if xb.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :] += g @ kd[i, j].T
            _accum(xb, dxp[:, pt : pt + h, pl : pl + w, :])

    out_t = _result(out, (xb, kernel), grad_fn, "conv2d")
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError(f"bias shape {bias.shape} does not match {cout} output channels")
        out_t = _add(out_t, bias)
    return out_t if had_batch else _reshape(out_t, out_t.shape[1:])


def depthwise_conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: Union[int, tuple[int, int]] = 1,
    padding: str = "same",
) -> Tensor:
    """Per-channel spatial convolution, no cross-channel mixing; kernel is ``(k, k, C)``."""
    xb, had_batch = _ensure_batched(x)
    if kernel.ndim != 3:
        raise ShapeError(f"depthwise kernel must be (kh, kw, C), got {kernel.shape}")
    kh, kw, cin = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
    n, h, w, c = xb.shape
    if c != cin:
        raise ShapeError(f"input has {c} channels but kernel expects {cin}")
    sh, sw = _stride_pair(stride)
    ho, wo, ph, pw = _conv_geometry(h, w, kh, kw, sh, sw, padding)
    pt, pl = ph // 2, pw // 2

    xp = np.pad(xb.data, ((0, 0), (pt, ph - pt), (pl, pw - pl), (0, 0)))
    kd = kernel.data
    out = np.zeros((n, ho, wo, cin), dtype=xb.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :]
            out += patch * kd[i, j]

    def grad_fn(g):
        if kernel.requires_grad:
            dk = np.empty_like(kd)
            for i in range(kh):
                for j in range(kw):
                    patch = xp[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :]
                    dk[i, j] = (patch * g).sum(axis=(0, 1, 2))
            _accum(kernel, dk)
        if xb.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :] += g * kd[i, j]
            _accum(xb, dxp[:, pt : pt + h, pl : pl + w, :])

    out_t = _result(out, (xb, kernel), grad_fn, "depthwise_conv2d")
    if bias is not None:
        if bias.shape != (cin,):
            raise ShapeError(f"bias shape {bias.shape} does not match {cin} channels")
        out_t = _add(out_t, bias)
    return out_t if had_batch else _reshape(out_t, out_t.shape[1:])


def pointwise_conv(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """1x1 convolution: a dense layer applied independently at every pixel."""
    if kernel.ndim == 2:
        kernel = _reshape(kernel, (1, 1) + kernel.shape)
    if kernel.ndim != 4 or kernel.shape[:2] != (1, 1):
        raise ShapeError(f"pointwise kernel must be (1, 1, C_in, C_out), got {kernel.shape}")
    return conv2d(x, kernel, bias=bias, stride=1, padding="valid")


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes: ``(H, W, C) -> (C,)`` per sample."""
    xb, had_batch = _ensure_batched(x)
    n, h, w, c = xb.shape
    if h == 0 or w == 0:
        raise ValueError("global_avg_pool needs non-empty spatial dims")
    data = xb.data.mean(axis=(1, 2))
    inv = 1.0 / (h * w)

    def grad_fn(g):
        _accum(xb, np.broadcast_to(g[:, None, None, :] * inv, xb.shape).astype(xb.dtype, copy=False))

    out = _result(data, (xb,), grad_fn, "global_avg_pool")
    return out if had_batch else _reshape(out, out.shape[1:])


def max_pool(
    x: Tensor,
    window: Union[int, tuple[int, int]],
    stride: Union[int, tuple[int, int], None] = None,
) -> Tensor:
    """Window-wise maximum; the gradient routes to the first-scanned argmax on ties."""
    xb, had_batch = _ensure_batched(x)
    wh, ww = (window, window) if isinstance(window, int) else window
    sh, sw = _stride_pair(stride if stride is not None else (wh, ww))
    n, h, w, c = xb.shape
    if wh > h or ww > w:
        raise ShapeError(f"pool window {wh}x{ww} larger than input {h}x{w}")
    ho = (h - wh) // sh + 1
    wo = (w - ww) // sw + 1

    cur = np.full((n, ho, wo, c), -np.inf, dtype=xb.dtype)
    arg = np.zeros((n, ho, wo, c), dtype=np.int64)
    oy = np.arange(ho)[:, None] * sh
    ox = np.arange(wo)[None, :] * sw
    for i in range(wh):
        for j in range(ww):
            patch = xb.data[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :]
            better = patch > cur
            flat = ((oy + i) * w + (ox + j))[None, :, :, None]
            cur = np.where(better, patch, cur)
            arg = np.where(better, flat, arg)

    def grad_fn(g):
        if not xb.requires_grad:
            return
        dx = np.zeros((n, h * w, c), dtype=xb.dtype)
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, None, None, :]
        np.add.at(dx, (np.broadcast_to(ni, arg.shape), arg, np.broadcast_to(ci, arg.shape)), g)
        _accum(xb, dx.reshape(n, h, w, c))

    out = _result(cur, (xb,), grad_fn, "max_pool")
    return out if had_batch else _reshape(out, out.shape[1:])


def cross_entropy(pred: Tensor, target: Union[Tensor, np.ndarray]) -> Tensor:
    """Categorical cross-entropy, averaged over the batch.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the log so a
    confidently wrong probability cannot produce an infinite loss.
    """
    y = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if y.shape != pred.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target shape {y.shape}")
    lo = np.asarray(1e-7, dtype=pred.dtype)
    hi = np.asarray(1.0, dtype=pred.dtype) - lo
    p = np.clip(pred.data, lo, hi)
    batch = pred.shape[0] if pred.ndim == 2 else 1
    loss = np.asarray(-(y * np.log(p)).sum() / batch, dtype=pred.dtype)

    def grad_fn(g):
        inside = (pred.data >= lo) & (pred.data <= hi)
        _accum(pred, g * np.where(inside, -y / p, 0.0) / batch)

    return _result(loss, (pred,), grad_fn, "cross_entropy")


def backward(loss: Tensor) -> Tape:
    """Propagate d(loss)/d(node) to every reachable tensor that requires a gradient.

    Returns the tape that was replayed, mainly for inspection in tests.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape.trace(loss)
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad += np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._grad_fn is not None and node.grad is not None:
            node._grad_fn(node.grad)
    return tape


def grad_check(
    op_builder: Callable[..., Tensor],
    shapes: Sequence[Sequence[int]],
    eps: Optional[float] = None,
    seed: int = 0,
    tol: Optional[float] = None,
    retries: int = 2,
    low: float = -1.0,
    high: float = 1.0,
) -> float:
    """Compare tape gradients with central finite differences, element by element.

    ``op_builder`` maps input tensors (one per entry of ``shapes``) to a
    scalar loss and must be deterministic, so any internal randomness has
    to be seeded. Defaults follow the active precision: eps 1e-6 / tol
    1e-6 in float64, eps 1e-3 / tol 1e-2 in float32. If the sampled
    point appears non-differentiable (error above ``tol``), the check
    resamples with a fresh seed up to ``retries`` times and reports the
    best error seen.
    """
    f64 = _DEFAULT_DTYPE == np.dtype(np.float64)
    if eps is None:
        eps = 1e-6 if f64 else 1e-3
    if tol is None:
        tol = 1e-6 if f64 else 1e-2

    best = math.inf
    for attempt in range(retries + 1):
        rng = np.random.default_rng(seed + 7919 * attempt)
        inputs = [Tensor(rng.uniform(low, high, size=tuple(s)), requires_grad=True) for s in shapes]
        loss = op_builder(*inputs)
        if loss.size != 1:
            raise ValueError("op_builder must produce a scalar loss")
        backward(loss)
        analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

        for t in inputs:  # numeric passes need no graph
            t.requires_grad = False
        err = 0.0
        for t, ana in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            num = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = float(op_builder(*inputs).data)
                flat[i] = orig - eps
                f_minus = float(op_builder(*inputs).data)
                flat[i] = orig
                num[i] = (f_plus - f_minus) / (2 * eps)
            diff = np.abs(ana.reshape(-1) - num)
            scale = np.maximum(1.0, np.maximum(np.abs(ana.reshape(-1)), np.abs(num)))
            err = max(err, float((diff / scale).max()) if flat.size else 0.0)
        best = min(best, err)
        if best < tol:
            return best
    return best
