"""Dense float tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array (float32 by default, float64 available
for tight gradient checks) plus the tape bookkeeping needed for reverse-mode
autodiff.  Ops are free functions that record a vector-Jacobian callback; the
callbacks close over plain ndarrays, never over the output tensor, so graphs
are reference-cycle free and die by refcount after each training step.

Everything is single-threaded numpy with a fixed reduction order, so repeated
runs are bit-identical.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class no_grad:
    """Context manager that skips tape construction (inference/eval)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        if arr.ndim > 4:
            raise ShapeError(f"rank {arr.ndim} > 4 not supported")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    # Sugar used all over the model code.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


class Parameter(Tensor):
    """Named leaf tensor; the unit of optimisation and checkpointing."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents, vjp) -> Tensor:
    """Wrap an op result, attaching the tape edge only when it can matter."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate .grad on every tensor reachable from `loss` (which is scalar)."""
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    # Iterative topological sort; model graphs are deep enough (unrolled
    # recurrence) that recursion would be fragile.
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
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = g.astype(parent.data.dtype, copy=True)
            else:
                parent.grad += g


def assert_finite(x: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    data = a.data + b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(g, b.data.shape)))


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    data = a.data - b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape),
                                             _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    data = ad / bd
    return _make(data, (a, b), lambda g: (_unbroadcast(g / bd, ad.shape),
                                          _unbroadcast(-g * ad / (bd * bd), bd.shape)))


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    ad = a.data
    mask = (ad > lo) & (ad < hi)
    return _make(np.clip(ad, lo, hi), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions / shape
# ---------------------------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make(np.asarray(data), (a,), vjp)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    s = tsum(a, axis, keepdims)
    return mul(s, 1.0 / float(n))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tensors, vjp)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(data, tensors, vjp)


# ---------------------------------------------------------------------------
# linear maps
# ---------------------------------------------------------------------------

def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: [P,I,J] @ [P,J,K] -> [P,I,K]."""
    ad, bd = a.data, b.data
    if ad.ndim != 3 or bd.ndim != 3 or ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
        raise ShapeError(f"bmm shapes {ad.shape} x {bd.shape}")
    data = np.matmul(ad, bd)

    def vjp(g):
        return (np.matmul(g, bd.swapaxes(1, 2)), np.matmul(ad.swapaxes(1, 2), g))

    return _make(data, (a, b), vjp)


def channel_linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-pixel linear map over the channel axis of an [N,C,H,W] tensor.

    Equivalent to a 1x1 convolution with weight [O,C]."""
    xd, wd = x.data, weight.data
    if xd.ndim != 4 or wd.ndim != 2 or wd.shape[1] != xd.shape[1]:
        raise ShapeError(f"channel_linear: x {xd.shape}, weight {wd.shape}")
    data = np.einsum("oc,nchw->nohw", wd, xd, optimize=True)
    if bias is not None:
        data = data + bias.data[None, :, None, None]

    def vjp(g):
        gx = np.einsum("oc,nohw->nchw", wd, g, optimize=True)
        gw = np.einsum("nohw,nchw->oc", g, xd, optimize=True)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(data, parents, vjp)


# ---------------------------------------------------------------------------
# convolution / pooling
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of [N,Cin,H,W] with [Cout,Cin,kh,kw] (odd kernels)."""
    xd, wd = x.data, weight.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ShapeError(f"conv2d wants rank-4 input/weight, got {xd.shape}, {wd.shape}")
    n, cin, h, w = xd.shape
    cout, cin_w, kh, kw = wd.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d channel mismatch: input {cin} vs weight {cin_w}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel must be odd, got {kh}x{kw}")
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(f"conv2d bias shape {bias.data.shape} != ({cout},)")
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {h}x{w}, kernel {kh}x{kw}, pad {pad}")

    # im2col: [N, Cin*kh*kw, Ho*Wo]
    cols = np.empty((n, cin, kh, kw, ho, wo), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    cols2 = cols.reshape(n, cin * kh * kw, ho * wo)
    out = np.matmul(wd.reshape(cout, -1), cols2).reshape(n, cout, ho, wo)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def vjp(g):
        gflat = g.reshape(n, cout, ho * wo)
        gw = np.einsum("ncp,nkp->ck", gflat, cols2, optimize=True).reshape(wd.shape)
        gcols = np.matmul(wd.reshape(cout, -1).T, gflat).reshape(n, cin, kh, kw, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, vjp)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; requires even spatial dims. Ties pick the
    first element in scan order, keeping the backward pass deterministic."""
    xd = x.data
    n, c, h, w = xd.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    win = xd.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, arg[..., None], g[..., None], axis=-1)
        return (gwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return _make(out, (x,), vjp)


# ---------------------------------------------------------------------------
# resizing
# ---------------------------------------------------------------------------

def _linear_coords(out_size: int, in_size: int):
    """Half-pixel-center source coordinates: src = (dst + 0.5) * scale - 0.5,
    clamped to the valid range. Returns (lo, hi, frac)."""
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, src - lo


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resample of [N,C,H,W] using half-pixel centers."""
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError(f"bilinear_resize wants rank 4, got {xd.shape}")
    n, c, h, w = xd.shape
    if out_h < 1 or out_w < 1:
        raise ShapeError("output dims must be >= 1")
    if out_h == h and out_w == w:
        return _make(xd.copy(), (x,), lambda g: (g,))
    y0, y1, fy = _linear_coords(out_h, h)
    x0, x1, fx = _linear_coords(out_w, w)
    fy = fy.astype(xd.dtype)[None, None, :, None]
    fx = fx.astype(xd.dtype)[None, None, None, :]
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    out = (xd[:, :, y0[:, None], x0[None, :]] * w00 +
           xd[:, :, y0[:, None], x1[None, :]] * w01 +
           xd[:, :, y1[:, None], x0[None, :]] * w10 +
           xd[:, :, y1[:, None], x1[None, :]] * w11)

    def vjp(g):
        gx = np.zeros_like(xd)
        np.add.at(gx, (slice(None), slice(None), y0[:, None], x0[None, :]), g * w00)
        np.add.at(gx, (slice(None), slice(None), y0[:, None], x1[None, :]), g * w01)
        np.add.at(gx, (slice(None), slice(None), y1[:, None], x0[None, :]), g * w10)
        np.add.at(gx, (slice(None), slice(None), y1[:, None], x1[None, :]), g * w11)
        return (gx,)

    return _make(out, (x,), vjp)


def nearest_resize_nd(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resample of the last two axes of a plain ndarray.

    Used for ground-truth masks so binary values survive resizing."""
    h, w = arr.shape[-2:]
    if out_h == h and out_w == w:
        return arr.copy()
    ys = np.minimum((( np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64), h - 1)
    xs = np.minimum((( np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64), w - 1)
    return arr[..., ys[:, None], xs[None, :]]


# ---------------------------------------------------------------------------
# attention pieces
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax; positions where mask == 0 get weight 0 and
    are excluded from the normaliser. Every row must keep >= 1 valid entry."""
    xd = x.data
    if xd.shape[axis] < 1:
        raise ShapeError("softmax over an empty axis")
    if mask is not None:
        neg = np.where(mask, xd, -np.inf)
        m = neg.max(axis=axis, keepdims=True)
        e = np.exp(np.where(mask, xd - m, -np.inf))
        e = np.where(mask, e, 0.0)
    else:
        m = xd.max(axis=axis, keepdims=True)
        e = np.exp(xd - m)
    y = (e / e.sum(axis=axis, keepdims=True)).astype(xd.dtype)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _make(y, (x,), vjp)


def shift2d(x: Tensor, dy: int, dx: int) -> Tensor:
    """out[..., h, w] = x[..., h+dy, w+dx], zero where that leaves the image.

    The zero-filled entries are only ever consumed under a validity mask."""
    xd = x.data
    h, w = xd.shape[-2:]
    out = np.zeros_like(xd)
    dst = (Ellipsis, slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
    src = (Ellipsis, slice(max(0, dy), h - max(0, -dy)), slice(max(0, dx), w - max(0, -dx)))
    out[dst] = xd[src]

    def vjp(g):
        gx = np.zeros_like(xd)
        gx[src] = g[dst]
        return (gx,)

    return _make(out, (x,), vjp)


def shift_valid_mask(h: int, w: int, dy: int, dx: int) -> np.ndarray:
    """Boolean [h,w] map of locations whose (dy,dx) neighbour is in bounds."""
    m = np.zeros((h, w), dtype=bool)
    m[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)] = True
    return m
