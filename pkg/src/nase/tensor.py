"""Minimal reverse-mode autodiff engine over dense numpy arrays.

The engine supplies exactly the primitives the embedding-search operator
space needs: embedding gathers, 2-D matmul, same-padded 1-D/2-D
convolutions, elementwise nonlinearities, softmax, p-norms and reductions,
plus three narrow batch helpers (``scale_rows``, ``add_bias``,
``matvec_rows``).  There is no general broadcasting; every primitive has a
fixed, documented shape rule and raises :class:`ShapeError` when violated.

Graphs are built define-by-run: each primitive returns a new
:class:`Tensor` holding references to its parents and a closure mapping the
output gradient to parent gradients.  Tensors that participate in a tape
must not be mutated in place.  :func:`backward` walks the tape once and
accumulates gradients into leaf tensors only; leaf gradients accumulate
across calls until explicitly zeroed.
"""

from __future__ import annotations

from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

import numpy as np

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class ShapeError(ValueError):
    """Inputs violate a primitive's shape rule."""


class UnknownPrimitiveError(KeyError):
    """Primitive id not in the registry."""


def _as_float(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """One node of the differentiation graph.

    ``data`` is the forward value, ``grad`` (same shape, populated by
    :func:`backward`) the accumulated gradient.  ``group`` tags trainable
    leaves with their optimization group (``"theta"`` or ``"alpha"``) so a
    backward pass can be restricted to one group.
    """

    __slots__ = ("data", "grad", "requires_grad", "group", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, group=None):
        self.data = _as_float(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.group = group
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def is_leaf(self):
        return self._backward is None

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"

    # Operator sugar for the common elementwise cases.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _node(data, parents, backward_fn):
    """Wire an op result into the tape (pruned when no parent needs grads)."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_dtypes(kind, *tensors):
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TypeError(f"{kind}: mixed element precisions {sorted(d.name for d in dtypes)}")


def _check_elementwise(kind, a, b):
    _check_dtypes(kind, a, b)
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} must match (or one be scalar)")


def _reduce_to(grad, shape):
    """Sum a gradient down to a () operand's shape."""
    if shape == ():
        return np.asarray(grad.sum(), dtype=grad.dtype)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and affine primitives
# ---------------------------------------------------------------------------

def add(a, b):
    _check_elementwise("add", a, b)
    data = a.data + b.data

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _node(data, (a, b), bw)


def sub(a, b):
    _check_elementwise("sub", a, b)
    data = a.data - b.data

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _node(data, (a, b), bw)


def mul(a, b):
    _check_elementwise("mul", a, b)
    data = a.data * b.data

    def bw(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _node(data, (a, b), bw)


def scalar_affine(x, a, b=0.0):
    """a * x + b with python-float coefficients."""
    a = float(a)
    b = float(b)
    data = a * x.data + b

    def bw(g):
        return (a * g,)

    return _node(data, (x,), bw)


def relu(x):
    data = np.maximum(x.data, 0.0)

    def bw(g):
        return (g * (x.data > 0),)

    return _node(data, (x,), bw)


def sigmoid(x):
    s = expit(x.data)

    def bw(g):
        return (g * s * (1.0 - s),)

    return _node(s, (x,), bw)


def softplus(x):
    """log(1 + exp(x)) in overflow-safe form; derivative is sigmoid(x)."""
    data = np.logaddexp(0.0, x.data).astype(x.data.dtype)

    def bw(g):
        return (g * expit(x.data),)

    return _node(data, (x,), bw)


def softmax(x):
    """Softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (x,), bw)


# ---------------------------------------------------------------------------
# Structural primitives
# ---------------------------------------------------------------------------

def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    data = x.data.reshape(shape)

    def bw(g):
        return (g.reshape(x.shape),)

    return _node(data, (x,), bw)


def concat(tensors, axis=0):
    """Concatenate along ``axis``; axis 0 on (r, d) operands is concat-rows."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: needs at least one input")
    _check_dtypes("concat", *tensors)
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise ShapeError(f"concat: rank mismatch {tensors[0].shape} vs {t.shape}")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from exc
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(data, tensors, bw)


def gather(table, idx):
    """Row lookup ``table[idx]``: (V, ...) gathered by an int index array."""
    idx = np.asarray(idx)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("gather: index array must be integer-typed")
    if idx.ndim != 1:
        raise ShapeError(f"gather: index array must be 1-D, got shape {idx.shape}")
    data = table.data[idx]

    def bw(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx, g)
        return (dt,)

    return _node(data, (table,), bw)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    _check_dtypes("matmul", a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _node(data, (a, b), bw)


def matvec_rows(mats, vecs):
    """Row-wise matrix-vector product: (B, d, d) x (B, d) -> (B, d)."""
    _check_dtypes("matvec_rows", mats, vecs)
    if (mats.data.ndim != 3 or vecs.data.ndim != 2
            or mats.shape[0] != vecs.shape[0] or mats.shape[2] != vecs.shape[1]):
        raise ShapeError(f"matvec_rows: incompatible shapes {mats.shape} and {vecs.shape}")
    data = np.einsum("bij,bj->bi", mats.data, vecs.data)

    def bw(g):
        dm = np.einsum("bi,bj->bij", g, vecs.data)
        dv = np.einsum("bij,bi->bj", mats.data, g)
        return dm, dv

    return _node(data, (mats, vecs), bw)


def scale_rows(x, s):
    """Multiply each row of (B, d) by its (B, 1) scalar."""
    _check_dtypes("scale_rows", x, s)
    if x.data.ndim != 2 or s.shape != (x.shape[0], 1):
        raise ShapeError(f"scale_rows: expected (B, d) and (B, 1), got {x.shape} and {s.shape}")
    data = x.data * s.data

    def bw(g):
        return g * s.data, (g * x.data).sum(axis=1, keepdims=True)

    return _node(data, (x, s), bw)


def add_bias(x, v):
    """Add a (m,) vector to every row of (B, m)."""
    _check_dtypes("add_bias", x, v)
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_bias: expected (B, m) and (m,), got {x.shape} and {v.shape}")
    data = x.data + v.data

    def bw(g):
        return g, g.sum(axis=0)

    return _node(data, (x, v), bw)


# ---------------------------------------------------------------------------
# Reductions and norms
# ---------------------------------------------------------------------------

def tsum(x, axis=None):
    data = x.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.full_like(x.data, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _node(data, (x,), bw)


def tmean(x, axis=None):
    n = x.data.size if axis is None else x.shape[axis]
    data = x.data.mean(axis=axis)

    def bw(g):
        if axis is None:
            return (np.full_like(x.data, g / n),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape) / n,)

    return _node(data, (x,), bw)


def pnorm(x, p):
    """p-norm over the last axis, p in {1, 2}."""
    if p not in (1, 2):
        raise ShapeError(f"pnorm: p must be 1 or 2, got {p}")
    if p == 1:
        data = np.abs(x.data).sum(axis=-1)

        def bw(g):
            return (np.expand_dims(g, -1) * np.sign(x.data),)
    else:
        data = np.sqrt((x.data ** 2).sum(axis=-1))

        def bw(g):
            safe = np.where(data > 0, data, 1.0)
            return (np.expand_dims(g / safe, -1) * x.data,)

    return _node(data, (x,), bw)


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _same_pad(k):
    # Length-preserving padding; even kernels take the extra cell on the
    # left (resp. top) side.
    after = (k - 1) // 2
    return k - 1 - after, after


def conv1d_same(x, w, bias):
    """Length-preserving 1-D convolution.

    x: (B, C, L), w: (F, C, K), bias: (F,) -> (B, F, L).  Supported for any
    K >= 1; even K pads asymmetrically (extra zero on the left).
    """
    _check_dtypes("conv1d_same", x, w, bias)
    if x.data.ndim != 3 or w.data.ndim != 3 or bias.data.ndim != 1:
        raise ShapeError(f"conv1d_same: expected (B,C,L), (F,C,K), (F,), got "
                         f"{x.shape}, {w.shape}, {bias.shape}")
    B, C, L = x.shape
    F, Cw, K = w.shape
    if Cw != C or bias.shape[0] != F:
        raise ShapeError(f"conv1d_same: channel mismatch between {x.shape}, {w.shape}, {bias.shape}")
    pl, pr = _same_pad(K)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pl, pr)))
    win = sliding_window_view(xp, K, axis=2)           # (B, C, L, K)
    cols = win.transpose(0, 2, 1, 3).reshape(B, L, C * K)
    wmat = w.data.reshape(F, C * K)
    data = np.einsum("blk,fk->bfl", cols, wmat) + bias.data[None, :, None]

    def bw(g):
        dw = np.einsum("bfl,blk->fk", g, cols).reshape(F, C, K)
        db = g.sum(axis=(0, 2))
        dcols = np.einsum("bfl,fk->blk", g, wmat).reshape(B, L, C, K)
        dxp = np.zeros_like(xp)
        for k in range(K):
            dxp[:, :, k:k + L] += dcols[:, :, :, k].transpose(0, 2, 1)
        return dxp[:, :, pl:pl + L], dw, db

    return _node(data, (x, w, bias), bw)


def conv2d(x, w, bias, pad_h="same", pad_w="same"):
    """2-D convolution with per-axis padding mode.

    x: (B, C, H, W), w: (F, C, KH, KW), bias: (F,).  ``"same"`` preserves
    the extent (even kernels pad extra on the top/left); ``"valid"`` shrinks
    it to extent - K + 1.  conv2d-same is the (same, same) case.
    """
    _check_dtypes("conv2d", x, w, bias)
    if x.data.ndim != 4 or w.data.ndim != 4 or bias.data.ndim != 1:
        raise ShapeError(f"conv2d: expected (B,C,H,W), (F,C,KH,KW), (F,), got "
                         f"{x.shape}, {w.shape}, {bias.shape}")
    B, C, H, W = x.shape
    F, Cw, KH, KW = w.shape
    if Cw != C or bias.shape[0] != F:
        raise ShapeError(f"conv2d: channel mismatch between {x.shape}, {w.shape}, {bias.shape}")
    for mode in (pad_h, pad_w):
        if mode not in ("same", "valid"):
            raise ShapeError(f"conv2d: unknown padding mode {mode!r}")
    pt, pb = _same_pad(KH) if pad_h == "same" else (0, 0)
    pl, pr = _same_pad(KW) if pad_w == "same" else (0, 0)
    Hout = H + pt + pb - KH + 1
    Wout = W + pl + pr - KW + 1
    if Hout < 1 or Wout < 1:
        raise ShapeError(f"conv2d: kernel {(KH, KW)} too large for input {(H, W)} "
                         f"under padding ({pad_h}, {pad_w})")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    data = np.zeros((B, F, Hout, Wout), dtype=x.data.dtype)
    for i in range(KH):
        for j in range(KW):
            data += np.einsum("bchw,fc->bfhw", xp[:, :, i:i + Hout, j:j + Wout], w.data[:, :, i, j])
    data += bias.data[None, :, None, None]

    def bw(g):
        dw = np.zeros_like(w.data)
        dxp = np.zeros_like(xp)
        for i in range(KH):
            for j in range(KW):
                patch = xp[:, :, i:i + Hout, j:j + Wout]
                dw[:, :, i, j] = np.einsum("bfhw,bchw->fc", g, patch)
                dxp[:, :, i:i + Hout, j:j + Wout] += np.einsum("bfhw,fc->bchw", g, w.data[:, :, i, j])
        db = g.sum(axis=(0, 2, 3))
        return dxp[:, :, pt:pt + H, pl:pl + W], dw, db

    return _node(data, (x, w, bias), bw)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _topo_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss, groups=None):
    """Accumulate d(loss)/d(leaf) into every reachable leaf tensor.

    ``loss`` must hold a single element.  Intermediate gradients live only
    for the duration of the walk; leaf gradients add onto whatever ``grad``
    already holds (zero it via optimizer steps or ``zero_grad``).  When
    ``groups`` is given, accumulation is restricted to leaves whose
    ``group`` tag is in it; untagged leaves always accumulate.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar-shaped, got {loss.shape}")
    if isinstance(groups, str):
        groups = {groups}
    flowing = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf():
            if not node.requires_grad:
                continue
            if groups is not None and node.group is not None and node.group not in groups:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in flowing:
                # Never in place: closures may hand the same array (or views
                # of one buffer) to several parents.
                flowing[key] = flowing[key] + pg
            else:
                flowing[key] = pg


# ---------------------------------------------------------------------------
# String-keyed dispatch
# ---------------------------------------------------------------------------

_PRIMITIVES = {
    "matmul": lambda inputs, attrs: matmul(*inputs),
    "add": lambda inputs, attrs: add(*inputs),
    "sub": lambda inputs, attrs: sub(*inputs),
    "mul": lambda inputs, attrs: mul(*inputs),
    "scalar_affine": lambda inputs, attrs: scalar_affine(inputs[0], attrs["a"], attrs.get("b", 0.0)),
    "concat": lambda inputs, attrs: concat(inputs, attrs.get("axis", 0)),
    "reshape": lambda inputs, attrs: reshape(inputs[0], attrs["shape"]),
    "relu": lambda inputs, attrs: relu(inputs[0]),
    "sigmoid": lambda inputs, attrs: sigmoid(inputs[0]),
    "softplus": lambda inputs, attrs: softplus(inputs[0]),
    "softmax": lambda inputs, attrs: softmax(inputs[0]),
    "conv1d_same": lambda inputs, attrs: conv1d_same(*inputs),
    "conv2d": lambda inputs, attrs: conv2d(*inputs, pad_h=attrs.get("pad_h", "same"),
                                           pad_w=attrs.get("pad_w", "same")),
    "pnorm": lambda inputs, attrs: pnorm(inputs[0], attrs["p"]),
    "sum": lambda inputs, attrs: tsum(inputs[0], attrs.get("axis")),
    "mean": lambda inputs, attrs: tmean(inputs[0], attrs.get("axis")),
    "gather": lambda inputs, attrs: gather(inputs[0], attrs["idx"]),
    "scale_rows": lambda inputs, attrs: scale_rows(*inputs),
    "add_bias": lambda inputs, attrs: add_bias(*inputs),
    "matvec_rows": lambda inputs, attrs: matvec_rows(*inputs),
}


def apply_primitive(kind, inputs, attrs=None):
    """Apply a primitive by its string id; raises on unknown ids."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise UnknownPrimitiveError(f"unknown primitive {kind!r}") from None
    return fn(list(inputs), attrs or {})


def primitive_ids():
    return sorted(_PRIMITIVES)
