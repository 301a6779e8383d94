"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable op returns a new :class:`Tensor` that remembers its
parents and a closure mapping the upstream gradient to one gradient per
parent. :func:`backward` replays those closures in reverse topological order.

Gradients accumulate into ``leaf.grad`` across calls; callers reset them
(``zero_grad``) between optimisation steps.
"""
from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)
_debug_checks: contextvars.ContextVar[bool] = contextvars.ContextVar("debug_checks", default=False)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@contextlib.contextmanager
def debug_mode() -> Iterator[None]:
    """Assert finite outputs after every forward op."""
    token = _debug_checks.set(True)
    try:
        yield
    finally:
        _debug_checks.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    """n-dimensional float64 array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = ""
        self.name = name

    # -- bookkeeping -------------------------------------------------------
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
    def is_leaf(self) -> bool:
        return self._backward is None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op or 'leaf'!r})"

    def backward(self) -> None:
        backward(self)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if _debug_checks.get() and not np.all(np.isfinite(out.data)):
        if all(np.all(np.isfinite(p.data)) for p in parents):
            raise FloatingPointError(f"non-finite output from {op} on finite inputs")
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,), "square")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


# -- shape / reduction -------------------------------------------------------
def tsum(x: Tensor) -> Tensor:
    return _make(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.size
    return _make(
        np.asarray(x.data.mean()),
        (x,),
        lambda g: (np.full(x.shape, float(g) / n),),
        "mean",
    )


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def getitem(x: Tensor, index) -> Tensor:
    def _bw(g):
        full = np.zeros(x.shape)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(x.data[index]), (x,), _bw, "getitem")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


# -- layers ------------------------------------------------------------------
def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight (+ bias)`` with ``x`` of shape (N, d_in) and weight (d_in, d_out)."""
    if x.ndim != 2 or weight.ndim != 2:
        raise ValueError(f"linear expects 2-D input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ValueError(f"linear dimension mismatch: input d_in={x.shape[1]}, weight d_in={weight.shape[0]}")
    out = x.data @ weight.data
    if bias is None:
        return _make(out, (x, weight), lambda g: (g @ weight.data.T, x.data.T @ g), "linear")
    if bias.shape != (weight.shape[1],):
        raise ValueError(f"linear bias shape {bias.shape} does not match d_out={weight.shape[1]}")
    return _make(
        out + bias.data,
        (x, weight, bias),
        lambda g: (g @ weight.data.T, x.data.T @ g, g.sum(axis=0)),
        "linear",
    )


def _shifted_rows(xp: np.ndarray, kw: int, ow: int) -> np.ndarray:
    """(C*kw, N*Hp*ow) matrix with row (c, j) holding ``xp[:, c, :, j:j+ow]`` flattened.

    Stacking all images vertically turns a vertical kernel offset ``i`` into a
    contiguous column offset ``i*ow``, so only ``kw`` copies are needed.
    """
    n, c, hp, _ = xp.shape
    rows = np.empty((c, kw, n, hp, ow))
    xt = xp.transpose(1, 0, 2, 3)
    for j in range(kw):
        rows[:, j] = xt[:, :, :, j : j + ow]
    return rows.reshape(c * kw, n * hp * ow)


def _correlate_rows(rows: np.ndarray, kernel: np.ndarray, n: int, hp: int, oh: int, ow: int) -> np.ndarray:
    """Valid cross-correlation from ``_shifted_rows`` output; returns (N, C_out, oh, ow)."""
    c_out, c_in, kh, kw = kernel.shape
    span = (n * hp - kh + 1) * ow
    # one matmul for every kernel row at once, then shift-and-add the row blocks
    stacked = kernel.transpose(2, 0, 1, 3).reshape(kh * c_out, c_in * kw) @ rows
    out = np.zeros((c_out, n * hp * ow))
    for i in range(kh):
        out[:, :span] += stacked[i * c_out : (i + 1) * c_out, i * ow : i * ow + span]
    # rows straddling two stacked images are discarded here
    return out.reshape(c_out, n, hp, ow)[:, :, :oh].transpose(1, 0, 2, 3)


def _pad_hw(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return a
    if ph >= 0 and pw >= 0:
        return np.pad(a, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    a = np.pad(a, ((0, 0), (0, 0), (max(ph, 0),) * 2, (max(pw, 0),) * 2))
    h0, w0 = max(-ph, 0), max(-pw, 0)
    return a[:, :, h0 : a.shape[2] - h0, w0 : a.shape[3] - w0]


def conv2d(x: Tensor, kernel: Tensor, pad: int = 0) -> Tensor:
    """Stride-1 cross-correlation with zero padding.

    ``x`` is (N, C_in, H, W), ``kernel`` is (C_out, C_in, kh, kw). Output is
    (N, C_out, H + 2*pad - kh + 1, W + 2*pad - kw + 1).
    """
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be 4-D (N, C_in, H, W), got shape {x.shape}")
    if kernel.ndim != 4:
        raise ValueError(f"conv2d kernel must be 4-D (C_out, C_in, kh, kw), got shape {kernel.shape}")
    if pad < 0:
        raise ValueError(f"conv2d pad must be >= 0, got {pad}")
    n, c_in, h, w = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise ValueError(f"conv2d channel mismatch: input C_in={c_in}, kernel C_in={k_in}")
    oh, ow = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    if oh < 1:
        raise ValueError(f"conv2d output height {oh} < 1 (H={h}, kh={kh}, pad={pad})")
    if ow < 1:
        raise ValueError(f"conv2d output width {ow} < 1 (W={w}, kw={kw}, pad={pad})")

    hp = h + 2 * pad
    rows = _shifted_rows(_pad_hw(x.data, pad, pad), kw, ow)
    out = np.ascontiguousarray(_correlate_rows(rows, kernel.data, n, hp, oh, ow))

    def _bw(g):
        gx = gk = None
        if kernel.requires_grad:
            span = (n * hp - kh + 1) * ow
            gz = np.zeros((c_out, n, hp, ow))
            gz[:, :, :oh] = g.transpose(1, 0, 2, 3)
            gz = gz.reshape(c_out, -1)[:, :span]
            # shifted copies of the output grad, one per kernel row, in a single matmul
            shifted = np.zeros((kh, c_out, n * hp * ow))
            for i in range(kh):
                shifted[i, :, i * ow : i * ow + span] = gz
            block = shifted.reshape(kh * c_out, -1) @ rows.T
            gk = block.reshape(kh, c_out, c_in, kw).transpose(1, 2, 0, 3)
        if x.requires_grad:
            # input gradient is a full correlation with the flipped, transposed kernel
            flipped = np.ascontiguousarray(kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
            gp = _pad_hw(g, kh - 1 - pad, kw - 1 - pad)
            gx = _correlate_rows(_shifted_rows(gp, kw, w), flipped, n, gp.shape[2], h, w)
        return gx, gk

    return _make(out, (x, kernel), _bw, "conv2d")


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) standardisation over H, W followed by ``gamma * xhat + beta``."""
    if x.ndim != 4:
        raise ValueError(f"instance_norm input must be 4-D, got shape {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"instance_norm affine shapes {gamma.shape}/{beta.shape} do not match C={c}")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std
    g4 = gamma.data.reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)

    def _bw(g):
        dg = (g * xhat).sum(axis=(0, 2, 3))
        db = g.sum(axis=(0, 2, 3))
        gx = None
        if x.requires_grad:
            dxhat = g * g4
            gx = inv_std * (
                dxhat
                - dxhat.mean(axis=(2, 3), keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
            )
        return gx, dg, db

    return _make(out, (x, gamma, beta), _bw, "instance_norm")


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping average pooling; trailing rows/cols that do not fill a window are dropped."""
    n, c, h, w = x.shape
    oh, ow = h // size, w // size
    if oh < 1 or ow < 1:
        raise ValueError(f"avg_pool2d window {size} larger than input {h}x{w}")
    crop = x.data[:, :, : oh * size, : ow * size]
    out = crop.reshape(n, c, oh, size, ow, size).mean(axis=(3, 5))

    def _bw(g):
        up = np.repeat(np.repeat(g, size, axis=2), size, axis=3) / (size * size)
        full = np.zeros(x.shape)
        full[:, :, : oh * size, : ow * size] = up
        return (full,)

    return _make(out, (x,), _bw, "avg_pool2d")


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (x,), _bw, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def _bw(g):
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return _make(out, (x,), _bw, "log_softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits)
    picked = getitem(logp, (np.arange(labels.shape[0]), labels))
    return mul(mean(picked), -1.0)


def mse(a, b) -> Tensor:
    """Mean of squared differences over all elements."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def _bw(g):
        scale = 2.0 * float(g) / n
        return scale * diff, -scale * diff

    return _make(np.asarray((diff * diff).mean()), (a, b), _bw, "mse")


# -- reverse pass ------------------------------------------------------------
def tape(root: Tensor) -> list[Tensor]:
    """Recorded ops reachable from ``root`` in topological order (inputs first)."""
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor requiring grad")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(tape(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5, sample: int | None = None, seed: int = 0) -> float:
    """Largest relative disagreement between autodiff and central differences.

    Per coordinate: ``|a - n| / (|a| + |n| + 1e-12)``. ``sample`` limits the
    check to that many randomly chosen coordinates.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    backward(f(probe))
    analytic = probe.grad.reshape(-1)
    base = x.data.astype(np.float64).copy()
    flat = base.reshape(-1)
    coords = np.arange(flat.size)
    if sample is not None and sample < flat.size:
        coords = np.sort(np.random.default_rng(seed).choice(flat.size, size=sample, replace=False))
    numeric = np.empty(coords.size)
    with no_grad():
        for j, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(Tensor(base)).item()
            flat[i] = orig - h
            fm = f(Tensor(base)).item()
            flat[i] = orig
            numeric[j] = (fp - fm) / (2.0 * h)
    a = analytic[coords]
    return float(np.max(np.abs(a - numeric) / (np.abs(a) + np.abs(numeric) + 1e-12)))


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
