"""Reverse-mode automatic differentiation over dense float64 tensors.

Operations executed inside a ``with Tape():`` block are recorded in
creation order, which is already a topological order, so one reversed
sweep in ``backward`` visits every node exactly once. Gradients
accumulate into ``Tensor.grad`` across backward calls until the owner
zeroes them. Everything is float64; there is no implicit casting.

The heavy inner loops (convolution, pooling, the GRU time sweep) live in
``jtav.kernels`` and are swappable between a numpy and a numba build.
"""

import numpy as np

from . import kernels
from .errors import (
    ContractError,
    DimensionError,
    DomainError,
    EmptyInputError,
    UninitializedStatsError,
)

_TAPES = []


class Tensor:
    """Dense n-dimensional float64 array, optionally carrying a gradient.

    ``grad`` exists iff ``requires_grad`` and always matches ``data`` in
    shape. ``tracked`` marks tensors that lie on a differentiable path;
    it is set automatically for op outputs while a tape is active.
    """

    __slots__ = ("data", "requires_grad", "grad", "tracked")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.tracked = self.requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return "Tensor(shape=%s, requires_grad=%s)" % (
            self.shape, self.requires_grad)


class Tape:
    """Ordered operation record for one forward pass."""

    def __init__(self):
        self.entries = []  # (out, inputs, backward_fn)

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPES.pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise ContractError("tape stack corrupted by unbalanced exits")
        return False


def active_tape():
    return _TAPES[-1] if _TAPES else None


def _record(out, inputs, backward_fn):
    tape = active_tape()
    if tape is None:
        return
    if not any(t.tracked for t in inputs):
        return
    out.tracked = True
    tape.entries.append((out, inputs, backward_fn))


def backward(loss):
    """Accumulate d(loss)/d(tensor) into every tracked tensor's grad.

    loss must be a scalar recorded on the active tape. Repeated calls
    keep adding into the same grad buffers (sum of losses semantics).
    """
    tape = active_tape()
    if tape is None:
        raise ContractError("backward called with no active tape")
    if loss.data.size != 1:
        raise ContractError(
            "backward expects a scalar loss, got shape %s" % (loss.shape,))
    if not loss.tracked:
        raise ContractError(
            "loss does not depend on any gradient-tracked tensor")
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for out, inputs, backward_fn in reversed(tape.entries):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        if out.requires_grad:
            out.grad += g
        in_grads = backward_fn(g)
        for t, ig in zip(inputs, in_grads):
            if ig is None or not t.tracked:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
            if t.requires_grad:
                leaves[key] = t
    for key, t in leaves.items():
        g = grads.get(key)
        if g is not None:
            t.grad += g


def zero_grads(params):
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# core ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    A, B = a.data, b.data
    if A.ndim not in (1, 2) or B.ndim not in (1, 2):
        raise DimensionError(
            "matmul supports 1-d/2-d operands, got %s and %s"
            % (A.shape, B.shape))
    inner_a = A.shape[-1]
    inner_b = B.shape[0]
    if inner_a != inner_b:
        raise DimensionError(
            "matmul inner dimensions disagree: %s vs %s" % (A.shape, B.shape))
    out = Tensor(A @ B)

    def back(g):
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 2 and B.ndim == 1:
            return np.outer(g, B), A.T @ g
        if A.ndim == 1 and B.ndim == 2:
            return B @ g, np.outer(A, g)
        return g * B, g * A

    _record(out, (a, b), back)
    return out


_UNARY = {
    "tanh": (np.tanh, lambda g, x, y: g * (1.0 - y * y)),
    "sigmoid": (
        lambda x: 1.0 / (1.0 + np.exp(-x)),
        lambda g, x, y: g * y * (1.0 - y),
    ),
    "relu": (
        lambda x: np.maximum(x, 0.0),
        lambda g, x, y: g * (x > 0.0),
    ),
    "exp": (np.exp, lambda g, x, y: g * y),
    "log": (np.log, lambda g, x, y: g / x),
}


def apply_unary(kind: str, x: Tensor) -> Tensor:
    if kind not in _UNARY:
        raise ContractError("unknown unary op %r" % kind)
    if kind == "log" and np.any(x.data <= 0.0):
        raise DomainError("log requires strictly positive entries")
    fwd, bwd = _UNARY[kind]
    xv = x.data
    out = Tensor(fwd(xv))
    yv = out.data
    _record(out, (x,), lambda g: (bwd(g, xv, yv),))
    return out


def tanh(x):
    return apply_unary("tanh", x)


def sigmoid(x):
    return apply_unary("sigmoid", x)


def relu(x):
    return apply_unary("relu", x)


def _binary_mode(x: Tensor, y: Tensor):
    if x.shape == y.shape:
        return "same"
    # sole permitted broadcast: a vector applied across the rows of a matrix
    if x.data.ndim == 2 and y.data.ndim == 1 and x.shape[1] == y.shape[0]:
        return "rows"
    raise DimensionError(
        "binary op shapes incompatible: %s vs %s" % (x.shape, y.shape))


def apply_binary(kind: str, x: Tensor, y: Tensor) -> Tensor:
    mode = _binary_mode(x, y)
    X, Y = x.data, y.data
    if kind == "add":
        out = Tensor(X + Y)

        def back(g):
            return g, (g.sum(axis=0) if mode == "rows" else g)
    elif kind == "sub":
        out = Tensor(X - Y)

        def back(g):
            return g, (-g.sum(axis=0) if mode == "rows" else -g)
    elif kind in ("mul", "mul_elementwise"):
        out = Tensor(X * Y)

        def back(g):
            gx = g * Y
            gy = g * X
            return gx, (gy.sum(axis=0) if mode == "rows" else gy)
    else:
        raise ContractError("unknown binary op %r" % kind)
    _record(out, (x, y), back)
    return out


def add(x, y):
    return apply_binary("add", x, y)


def sub(x, y):
    return apply_binary("sub", x, y)


def mul(x, y):
    return apply_binary("mul", x, y)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * c)
    _record(out, (x,), lambda g: (g * c,))
    return out


def softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1:
        raise DimensionError("softmax expects a vector, got %s" % (x.shape,))
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    s = e / e.sum()
    out = Tensor(s)

    def back(g):
        return (s * (g - np.dot(g, s)),)

    _record(out, (x,), back)
    return out


def concat(tensors, axis=0) -> Tensor:
    if len(tensors) == 0:
        raise EmptyInputError("concat of zero tensors")
    nd = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != nd:
            raise DimensionError(
                "concat rank mismatch: %s vs %s"
                % (tensors[0].shape, t.shape))
        for ax in range(nd):
            if ax != axis and t.shape[ax] != tensors[0].shape[ax]:
                raise DimensionError(
                    "concat off-axis dims differ: %s vs %s"
                    % (tensors[0].shape, t.shape))
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]

    def back(g):
        pieces = []
        start = 0
        for n in sizes:
            idx = [slice(None)] * nd
            idx[axis] = slice(start, start + n)
            pieces.append(g[tuple(idx)])
            start += n
        return tuple(pieces)

    _record(out, tuple(tensors), back)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape
    out = Tensor(x.data.reshape(shape))
    _record(out, (x,), lambda g: (g.reshape(old),))
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("transpose expects a matrix, got %s" % (x.shape,))
    out = Tensor(x.data.T.copy())
    _record(out, (x,), lambda g: (g.T.copy(),))
    return out


def transpose_axes(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    _record(out, (x,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim < 1 or not (0 <= start < stop <= x.shape[0]):
        raise DimensionError(
            "row slice [%d:%d) invalid for shape %s" % (start, stop, x.shape))
    out = Tensor(x.data[start:stop].copy())
    full = x.data.shape

    def back(g):
        dx = np.zeros(full)
        dx[start:stop] = g
        return (dx,)

    _record(out, (x,), back)
    return out


def reverse_rows(x: Tensor) -> Tensor:
    out = Tensor(x.data[::-1].copy())
    _record(out, (x,), lambda g: (g[::-1].copy(),))
    return out


def mean_pool(x: Tensor) -> Tensor:
    """Mean over the rows of an n×d matrix."""
    if x.data.ndim != 2:
        raise DimensionError("mean_pool expects a matrix, got %s" % (x.shape,))
    n = x.shape[0]
    if n == 0:
        raise EmptyInputError("mean_pool over zero rows")
    out = Tensor(x.data.mean(axis=0))
    shape = x.data.shape
    _record(out, (x,), lambda g: (np.broadcast_to(g / n, shape).copy(),))
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(x.data.sum())
    shape = x.data.shape
    _record(out, (x,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return out


def stack_scalars(tensors) -> Tensor:
    """Pack scalar tensors into one vector (for batched losses)."""
    if len(tensors) == 0:
        raise EmptyInputError("stack of zero scalars")
    for t in tensors:
        if t.data.size != 1:
            raise DimensionError(
                "stack_scalars got non-scalar shape %s" % (t.shape,))
    out = Tensor(np.array([float(t.data.reshape(())) for t in tensors]))
    shapes = [t.data.shape for t in tensors]

    def back(g):
        return tuple(np.full(sh, g[i]) for i, sh in enumerate(shapes))

    _record(out, tuple(tensors), back)
    return out


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of an embedding table.

    Row 0 is the padding embedding and is pinned to zero: its gradient is
    dropped so training can never make padding non-neutral.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise DimensionError("indices must be a vector")
    if idx.size == 0:
        raise EmptyInputError("embedding lookup of zero tokens")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise DimensionError(
            "index out of range for table with %d rows" % table.shape[0])
    out = Tensor(table.data[idx])

    def back(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx, g)
        dt[0] = 0.0
        return (dt,)

    _record(out, (table,), back)
    return out


# ---------------------------------------------------------------------------
# fused layers


def conv2d(x: Tensor, k: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 same-padded cross-correlation, c_in×h×w -> c_out×h×w."""
    if x.data.ndim != 3 or k.data.ndim != 4:
        raise DimensionError(
            "conv2d expects (c,h,w) input and (co,ci,kh,kw) kernel, got %s / %s"
            % (x.shape, k.shape))
    co, ci, kh, kw = k.shape
    if ci != x.shape[0]:
        raise DimensionError(
            "conv2d channel mismatch: input %s vs kernel %s"
            % (x.shape, k.shape))
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError("conv2d kernel dims must be odd, got %dx%d" % (kh, kw))
    if bias.shape != (co,):
        raise DimensionError(
            "conv2d bias shape %s, expected (%d,)" % (bias.shape, co))
    xv = np.ascontiguousarray(x.data)
    kv = np.ascontiguousarray(k.data)
    # patch matrix is shared between the forward GEMM and the kernel-grad
    # GEMM; holding it in the closure trades memory for the second im2col
    cols = kernels.im2col(xv, kh, kw)
    out = Tensor(kernels.conv2d_from_cols(cols, kv, bias.data,
                                          xv.shape[1], xv.shape[2]))
    # the input gradient is the priciest piece; skip it for graph leaves
    # (first-layer convs see constant spectrograms/pixels)
    x_needs = x.tracked or x.requires_grad

    def back(g):
        g = np.ascontiguousarray(g)
        dx = kernels.conv2d_input_grad(g, kv) if x_needs else None
        dk, db = kernels.conv2d_kernel_grad_cols(g, cols, ci, kh, kw)
        return dx, dk, db

    _record(out, (x, k, bias), back)
    return out


def max_pool2d(x: Tensor, pool) -> Tensor:
    """Non-overlapping max pooling, ceil-mode at ragged edges."""
    ph, pw = int(pool[0]), int(pool[1])
    if x.data.ndim != 3:
        raise DimensionError("max_pool2d expects (c,h,w), got %s" % (x.shape,))
    if ph < 1 or pw < 1:
        raise ContractError("pool sizes must be >= 1, got (%d,%d)" % (ph, pw))
    c, h, w = x.shape
    xv = np.ascontiguousarray(x.data)
    vals, arg = kernels.maxpool_forward(xv, ph, pw)
    out = Tensor(vals)

    def back(g):
        return (kernels.maxpool_backward(np.ascontiguousarray(g), arg, h, w),)

    _record(out, (x,), back)
    return out


class BatchNormState:
    """Running per-channel statistics for one batch_norm site."""

    def __init__(self, channels: int, momentum=0.9, eps=1e-5):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.initialized = False
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               state: BatchNormState, mode: str) -> Tensor:
    if x.data.ndim != 3:
        raise DimensionError("batch_norm expects (c,h,w), got %s" % (x.shape,))
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            "batch_norm affine shapes %s/%s, expected (%d,)"
            % (gamma.shape, beta.shape, c))
    if mode not in ("train", "eval"):
        raise ContractError("batch_norm mode must be train or eval")
    eps = state.eps
    xv = np.ascontiguousarray(x.data)
    if mode == "train":
        mu, var = kernels.bn_stats(xv)
        if state.initialized:
            m = state.momentum
            state.running_mean = m * state.running_mean + (1.0 - m) * mu
            state.running_var = m * state.running_var + (1.0 - m) * var
        else:
            state.running_mean = mu.copy()
            state.running_var = var.copy()
            state.initialized = True
    else:
        if not state.initialized:
            raise UninitializedStatsError(
                "batch_norm eval before any training step")
        mu = np.ascontiguousarray(state.running_mean)
        var = state.running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    yv, xhat = kernels.bn_forward(xv, gamma.data, beta.data, mu, inv_std)
    out = Tensor(yv)
    gv = gamma.data
    bn_back = (kernels.bn_backward_train if mode == "train"
               else kernels.bn_backward_eval)

    def back(g):
        return bn_back(np.ascontiguousarray(g), xhat, gv, inv_std)

    _record(out, (x, gamma, beta), back)
    return out


def gru_sequence(x: Tensor, wx: Tensor, b: Tensor,
                 wh_zr: Tensor, wh_c: Tensor) -> Tensor:
    """Single-direction GRU over a T×D sequence, returning T×H hiddens.

    Gate layout along the 3H axis is update, reset, candidate. The input
    projection for all steps is one GEMM; the recurrent sweep and its
    backward-through-time run in the kernel backend.
    """
    if x.data.ndim != 2 or wx.data.ndim != 2:
        raise DimensionError(
            "gru_sequence expects T×D input and 3H×D weight, got %s / %s"
            % (x.shape, wx.shape))
    T, D = x.shape
    h3 = wx.shape[0]
    if h3 % 3 != 0 or wx.shape[1] != D:
        raise DimensionError(
            "gru input weight %s incompatible with input %s"
            % (wx.shape, x.shape))
    H = h3 // 3
    if b.shape != (h3,) or wh_zr.shape != (2 * H, H) or wh_c.shape != (H, H):
        raise DimensionError(
            "gru recurrent shapes %s/%s/%s inconsistent with H=%d"
            % (b.shape, wh_zr.shape, wh_c.shape, H))
    xw = np.ascontiguousarray(x.data @ wx.data.T + b.data)
    uzr = np.ascontiguousarray(wh_zr.data)
    uc = np.ascontiguousarray(wh_c.data)
    h_seq, zs, rs, cs = kernels.gru_forward(xw, uzr, uc)
    out = Tensor(h_seq)

    def back(g):
        dxw, duzr, duc = kernels.gru_backward(
            np.ascontiguousarray(g), uzr, uc, h_seq, zs, rs, cs)
        dx = dxw @ wx.data
        dwx = dxw.T @ x.data
        db = dxw.sum(axis=0)
        return dx, dwx, db, duzr, duc

    _record(out, (x, wx, b, wh_zr, wh_c), back)
    return out


def bce_loss(y: Tensor, yhat: Tensor) -> Tensor:
    """Mean binary cross entropy; predictions clamped to [1e-12, 1-1e-12]."""
    yv = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    pv = yhat.data
    if yv.shape != pv.shape:
        raise DimensionError(
            "bce shapes differ: %s vs %s" % (yv.shape, pv.shape))
    if pv.size == 0:
        raise EmptyInputError("bce over an empty batch")
    eps = 1e-12
    pc = np.clip(pv, eps, 1.0 - eps)
    n = pv.size
    out = Tensor(-(yv * np.log(pc) + (1.0 - yv) * np.log(1.0 - pc)).mean())

    def back(g):
        inside = (pv > eps) & (pv < 1.0 - eps)
        dp = -(yv / pc - (1.0 - yv) / (1.0 - pc)) / n * g
        dp = np.where(inside, dp, 0.0)
        if isinstance(y, Tensor):
            return None, dp
        return (dp,)

    if isinstance(y, Tensor):
        _record(out, (y, yhat), back)
    else:
        _record(out, (yhat,), back)
    return out
