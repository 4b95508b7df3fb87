"""Dense tensors with a recorded forward pass and reverse-mode gradients.

Every primitive returns a Tensor that remembers its parents and a function
producing parent gradients from its own output gradient; ``backward`` walks
the recording once in reverse topological order. Training runs in float32,
gradient checking in float64 — ops preserve the dtype of their inputs.

Also home to the Adam optimizer and the deterministic counter-based RNG
used for dropout masks.
"""

import itertools
import zlib

import numpy as np

from .errors import NumericError, ShapeError
from .sparse import SparseMatrix

_CREATED = itertools.count()


class Tensor:
    """Dense array plus its position in the recorded computation."""

    __slots__ = ("data", "requires_grad", "parents", "grad_fn", "op", "created")

    def __init__(self, data, requires_grad=False, parents=(), grad_fn=None, op="leaf"):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        # keep ALL operands so grad_fn output stays positionally aligned;
        # drop the recording only when no operand is differentiable
        parents = tuple(parents)
        tracked = any(p.requires_grad for p in parents)
        self.parents = parents if tracked else ()
        self.requires_grad = bool(requires_grad) or tracked
        self.grad_fn = grad_fn if tracked else None
        self.op = op
        self.created = next(_CREATED)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def assert_finite(self, what="tensor"):
        if not np.isfinite(self.data).all():
            raise NumericError(f"{what} (op={self.op!r}, node {self.created}) is non-finite")
        return self

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, grad={self.requires_grad})"

    # operator sugar; the module-level functions are the primitives
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float64)
    return Tensor(arr)


def parameter(data, dtype=None) -> Tensor:
    arr = np.array(data, dtype=dtype if dtype is not None else None, copy=True)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=True, op="param")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def _shapes(*ts):
    return " vs ".join(str(t.shape) for t in ts)


# -- primitives ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: cannot broadcast {_shapes(a, b)}") from e

    def grad_fn(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return Tensor(out, parents=(a, b), grad_fn=grad_fn, op="add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: cannot broadcast {_shapes(a, b)}") from e

    def grad_fn(g):
        return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

    return Tensor(out, parents=(a, b), grad_fn=grad_fn, op="mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def grad_fn(g):
        return (g * c,)

    return Tensor(a.data * np.asarray(c, dtype=a.dtype), parents=(a,), grad_fn=grad_fn, op="scale")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes with numpy batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {_shapes(a, b)}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {_shapes(a, b)}")
    out = a.data @ b.data

    def grad_fn(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return Tensor(out, parents=(a, b), grad_fn=grad_fn, op="matmul")


def spmm(a: SparseMatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times dense tensor; gradient flows to x only."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] != a.n_cols:
        raise ShapeError(f"spmm: sparse {a.shape} against dense {x.shape}")
    out = a.dense_dot(x.data)
    at = a.transpose()

    def grad_fn(g):
        return (at.dense_dot(np.ascontiguousarray(g)),)

    return Tensor(out, parents=(x,), grad_fn=grad_fn, op="spmm")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose needs >=2-d input, got {a.shape}")

    def grad_fn(g):
        return (g.swapaxes(-1, -2),)

    return Tensor(a.data.swapaxes(-1, -2), parents=(a,), grad_fn=grad_fn, op="transpose")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)

    def grad_fn(g):
        return (g.swapaxes(ax1, ax2),)

    return Tensor(a.data.swapaxes(ax1, ax2), parents=(a,), grad_fn=grad_fn, op="swapaxes")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape

    def grad_fn(g):
        return (g.reshape(old),)

    return Tensor(a.data.reshape(shape), parents=(a,), grad_fn=grad_fn, op="reshape")


def concat(parts, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of nothing")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, parents=parts, grad_fn=grad_fn, op="concat")


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice `[start, start+length)` along one axis."""
    a = as_tensor(a)
    n = a.shape[axis]
    if start < 0 or length < 0 or start + length > n:
        raise ShapeError(f"narrow [{start}:{start + length}] outside axis of size {n}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return Tensor(a.data[idx], parents=(a,), grad_fn=grad_fn, op="narrow")


def gather_rows(a, ids) -> Tensor:
    """Select rows (axis 0) by integer id, order preserved, repeats allowed."""
    a = as_tensor(a)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError(f"row ids must be 1-d, got shape {ids.shape}")
    if len(ids) and (ids.min() < 0 or ids.max() >= a.shape[0]):
        raise ValueError(f"row id out of range for {a.shape[0]} rows")

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        np.add.at(full, ids, g)
        return (full,)

    return Tensor(a.data[ids], parents=(a,), grad_fn=grad_fn, op="gather_rows")


def row_softmax(a) -> Tensor:
    """Softmax along the last axis; rows sum to 1 and stay positive."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return Tensor(out, parents=(a,), grad_fn=grad_fn, op="row_softmax")


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    d = a.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine params must be ({d},), got {_shapes(gamma, beta)}")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def grad_fn(g):
        g_xhat = g * gamma.data
        # d/dx of (x - mu) * inv with mu, var functions of x
        gx = inv * (
            g_xhat
            - g_xhat.mean(axis=-1, keepdims=True)
            - xhat * (g_xhat * xhat).mean(axis=-1, keepdims=True)
        )
        g_gamma = _unbroadcast(g * xhat, gamma.shape)
        g_beta = _unbroadcast(g, beta.shape)
        return (gx, g_gamma, g_beta)

    return Tensor(out, parents=(a, gamma, beta), grad_fn=grad_fn, op="layer_norm")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, parents=(a,), grad_fn=grad_fn, op="tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, parents=(a,), grad_fn=grad_fn, op="sigmoid")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    neg = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, neg)

    def grad_fn(g):
        return (g * np.where(a.data > 0, 1.0, neg + alpha),)

    return Tensor(out.astype(a.dtype, copy=False), parents=(a,), grad_fn=grad_fn, op="elu")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def grad_fn(g):
        return (g * (a.data > 0),)

    return Tensor(out.astype(a.dtype, copy=False), parents=(a,), grad_fn=grad_fn, op="relu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def grad_fn(g):
        return (g * out,)

    return Tensor(out, parents=(a,), grad_fn=grad_fn, op="exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def grad_fn(g):
        return (g / a.data,)

    return Tensor(out, parents=(a,), grad_fn=grad_fn, op="log")


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).astype(a.dtype, copy=False),)

    return Tensor(np.asarray(out), parents=(a,), grad_fn=grad_fn, op="sum")


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def take_per_row(a, cols) -> Tensor:
    """Pick one column per row: out[i] = a[i, cols[i]]."""
    a = as_tensor(a)
    cols = np.asarray(cols, dtype=np.int64)
    if a.ndim != 2 or cols.shape != (a.shape[0],):
        raise ShapeError(f"take_per_row: {a.shape} with cols {cols.shape}")
    if len(cols) and (cols.min() < 0 or cols.max() >= a.shape[1]):
        raise ValueError(f"column id out of range for {a.shape[1]} columns")
    rows = np.arange(a.shape[0])

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[rows, cols] = g
        return (full,)

    return Tensor(a.data[rows, cols], parents=(a,), grad_fn=grad_fn, op="take_per_row")


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy over rows; labels are integer class ids."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    # subtracting the (constant) row max cancels between the two terms
    shift = Tensor(logits.data.max(axis=-1, keepdims=True))
    shifted = add(logits, scale(shift, -1.0))
    lse = log(reduce_sum(exp(shifted), axis=-1))
    return reduce_mean(add(lse, scale(take_per_row(shifted, labels), -1.0)))


def l2_normalize_rows(a, eps: float = 1e-12) -> Tensor:
    """Scale each row (last axis) to unit L2 norm; eps guards empty rows."""
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    out = a.data / norm

    def grad_fn(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - out * dot) / norm,)

    return Tensor(out, parents=(a,), grad_fn=grad_fn, op="l2_normalize_rows")


# -- dropout ------------------------------------------------------------------


def rng_for(seed: int, step: int, tag: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, step, layer tag); replayable."""
    key = (int(seed) & 0xFFFFFFFF, int(step) & 0xFFFFFFFF, zlib.crc32(tag.encode()))
    return np.random.Generator(np.random.Philox(key=np.random.SeedSequence(key).generate_state(2, np.uint64)))


def dropout(a, p: float, seed: int, step: int, tag: str) -> Tensor:
    """Inverted dropout with a mask replayable from (seed, step, tag)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    a = as_tensor(a)
    if p == 0.0:
        return a
    mask = (rng_for(seed, step, tag).random(a.shape) >= p).astype(a.dtype) / (1.0 - p)
    return mul(a, Tensor(mask, op="dropout_mask"))


class DropoutCtx:
    """Dropout settings threaded through a forward pass.

    Masks depend only on (seed, step, tag), so a forward pass replayed at
    the same step reproduces its masks exactly.
    """

    __slots__ = ("p", "seed", "step", "train")

    def __init__(self, p: float = 0.0, seed: int = 0, step: int = 0, train: bool = False):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.seed = seed
        self.step = step
        self.train = train

    def apply(self, t: Tensor, tag: str) -> Tensor:
        if not self.train or self.p == 0.0:
            return t
        return dropout(t, self.p, self.seed, self.step, tag)


NO_DROPOUT = DropoutCtx()


# -- reverse pass -------------------------------------------------------------


class Gradients:
    """Gradient lookup for a finished backward pass; unreachable -> zeros."""

    def __init__(self, table):
        self._table = table

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._table.get(id(t))
        return g if g is not None else np.zeros_like(t.data)

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._table


def backward(loss: Tensor) -> Gradients:
    """Reverse-mode gradients of a scalar loss over its whole recording."""
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    table = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = table.get(id(node))
        if g is None or node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if not parent.requires_grad:
                continue
            have = table.get(id(parent))
            if have is None:
                pg = pg.astype(parent.dtype, copy=False)
                # views of g alias sibling gradients; detach before accumulating
                if not pg.flags.owndata or not pg.flags.writeable:
                    pg = pg.copy()
                table[id(parent)] = pg
            else:
                have += pg
    return Gradients(table)


def first_nonfinite(loss: Tensor):
    """Earliest-created non-finite tensor reachable from ``loss``, or None."""
    seen = set()
    stack = [loss]
    bad = []
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if not np.isfinite(node.data).all():
            bad.append(node)
        stack.extend(node.parents)
    return min(bad, key=lambda t: t.created) if bad else None


# -- Adam ---------------------------------------------------------------------


class AdamState:
    """Per-parameter Adam moments plus the shared step counter."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict = {}
        self.v: dict = {}


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, want {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params, state
