"""Reverse-mode differentiable compute over a fixed primitive set.

Values are :class:`Tensor`: a float64 numpy array plus graph metadata.  Each
primitive validates shapes, computes its output eagerly, and attaches two
closures to the result node: a recompute function (replays the forward from
parent values, bit-identically) and a vector-Jacobian product (maps the
output gradient to per-parent gradients).  The chain of nodes reachable from
an output is the computation record; :func:`gradients` walks it in reverse
topological order with a deterministic accumulation schedule.

The primitive set is closed on purpose: only the layers and losses the
encoder/decoder architectures need exist, each with a hand-derived adjoint
that the test suite checks against central finite differences.  There is no
broadcasting between mismatched shapes; every op either returns the
documented shape or raises :class:`ShapeError`.

Convolution uses cross-correlation semantics (no kernel flip) with explicit
integer stride and symmetric zero padding.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


class ShapeError(ValueError):
    """An operation was applied to tensors with incompatible shapes."""


class Tensor:
    """Dense float64 n-d value, immutable by convention once produced.

    Leaf tensors (parameters, inputs, constants) have no parents.  Non-leaf
    tensors remember the primitive that made them.  Training code rebinds
    ``.data`` on parameter leaves between steps; it never mutates arrays that
    a live graph references.
    """

    __slots__ = ("data", "parents", "op", "name", "_vjp", "_recompute")

    def __init__(self, data, parents=(), op="leaf", name=None, vjp=None, recompute=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.parents: tuple[Tensor, ...] = tuple(parents)
        self.op = op
        self.name = name
        self._vjp: Callable[[np.ndarray], tuple] | None = vjp
        self._recompute: Callable[..., np.ndarray] | None = recompute

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(op={self.op!r}, shape={self.shape}{tag})"


def tensor(data, name=None) -> Tensor:
    """Wrap an array as a leaf tensor."""
    return Tensor(data, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, op, vjp, recompute) -> Tensor:
    return Tensor(data, parents=parents, op=op, vjp=vjp, recompute=recompute)


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# Elementwise primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("add", a, b)
    return _node(a.data + b.data, (a, b), "add",
                 vjp=lambda g: (g, g),
                 recompute=lambda xa, xb: xa + xb)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("sub", a, b)
    return _node(a.data - b.data, (a, b), "sub",
                 vjp=lambda g: (g, -g),
                 recompute=lambda xa, xb: xa - xb)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), "mul",
                 vjp=lambda g: (g * bd, g * ad),
                 recompute=lambda xa, xb: xa * xb)


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), "scale",
                 vjp=lambda g: (g * c,),
                 recompute=lambda xa: xa * c)


def add_const(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    return _node(a.data + c, (a,), "add_const",
                 vjp=lambda g: (g,),
                 recompute=lambda xa: xa + c)


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), "exp",
                 vjp=lambda g: (g * out,),
                 recompute=np.exp)


def square(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    return _node(ad * ad, (a,), "square",
                 vjp=lambda g: (2.0 * ad * g,),
                 recompute=lambda xa: xa * xa)


def _sigmoid_forward(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow anywhere
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid_forward(a.data)
    return _node(out, (a,), "sigmoid",
                 vjp=lambda g: (g * out * (1.0 - out),),
                 recompute=_sigmoid_forward)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), "relu",
                 vjp=lambda g: (g * mask,),
                 recompute=lambda xa: np.where(xa > 0, xa, 0.0))


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    a = _as_tensor(a)
    slope = float(slope)
    grad = np.where(a.data > 0, 1.0, slope)
    return _node(np.where(a.data > 0, a.data, slope * a.data), (a,), "leaky_relu",
                 vjp=lambda g: (g * grad,),
                 recompute=lambda xa: np.where(xa > 0, xa, slope * xa))


# ---------------------------------------------------------------------------
# Reductions and reshaping
# ---------------------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    a = _as_tensor(a)
    shape = a.shape
    return _node(np.sum(a.data), (a,), "sum_all",
                 vjp=lambda g: (np.full(shape, float(g)),),
                 recompute=np.sum)


def mean_all(a: Tensor) -> Tensor:
    """Mean of all elements (composite: sum_all then scale)."""
    a = _as_tensor(a)
    if a.size == 0:
        raise ShapeError("mean_all: empty tensor")
    return scale(sum_all(a), 1.0 / a.size)


def row_sum(a: Tensor) -> Tensor:
    """Per-row sum over all non-leading axes; (N, ...) -> (N,)."""
    a = _as_tensor(a)
    if a.data.ndim < 2:
        raise ShapeError(f"row_sum: need at least 2 axes, got shape {a.shape}")
    axes = tuple(range(1, a.data.ndim))
    shape = a.shape
    n = shape[0]

    def vjp(g):
        return (np.broadcast_to(g.reshape((n,) + (1,) * (len(shape) - 1)), shape).copy(),)

    return _node(np.sum(a.data, axis=axes), (a,), "row_sum", vjp=vjp,
                 recompute=lambda xa: np.sum(xa, axis=axes))


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1-d tensors, as a 0-d tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"dot: need 1-d tensors, got {a.shape} and {b.shape}")
    _require_same_shape("dot", a, b)
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), "dot",
                 vjp=lambda g: (float(g) * bd, float(g) * ad),
                 recompute=lambda xa, xb: xa @ xb)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape
    return _node(a.data.reshape(shape), (a,), "reshape",
                 vjp=lambda g: (g.reshape(old),),
                 recompute=lambda xa: xa.reshape(shape))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of a 2-d tensor."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols: need 2-d tensor, got {a.shape}")
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"slice_cols: [{start}, {stop}) out of range for {a.shape}")
    shape = a.shape

    def vjp(g):
        da = np.zeros(shape)
        da[:, start:stop] = g
        return (da,)

    return _node(a.data[:, start:stop].copy(), (a,), "slice_cols", vjp=vjp,
                 recompute=lambda xa: xa[:, start:stop].copy())


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows by integer index; adjoint scatter-adds."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"take_rows: index must be 1-d, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"take_rows: index out of range for {a.shape[0]} rows")
    shape = a.shape

    def vjp(g):
        da = np.zeros(shape)
        np.add.at(da, idx, g)
        return (da,)

    return _node(a.data[idx], (a,), "take_rows", vjp=vjp,
                 recompute=lambda xa: xa[idx])


# ---------------------------------------------------------------------------
# Affine layers
# ---------------------------------------------------------------------------

def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: (N, D) @ (D, M) + (M,) -> (N, M)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(f"dense: need 2-d input/weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input width {x.shape[1]} != weight rows {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: bias shape {bias.shape} != ({weight.shape[1]},)")
    xd, wd = x.data, weight.data

    def vjp(g):
        return (g @ wd.T, xd.T @ g, g.sum(axis=0))

    return _node(xd @ wd + bias.data, (x, weight, bias), "dense", vjp=vjp,
                 recompute=lambda xa, wa, ba: xa @ wa + ba)


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _patch_view(xp: np.ndarray, kh: int, kw: int, stride: int,
                h_out: int, w_out: int) -> np.ndarray:
    """Read-only (N, C, H', W', kh, kw) window view of a padded input."""
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, (xp.shape[0], xp.shape[1], h_out, w_out, kh, kw),
        (sn, sc, sh * stride, sw * stride, sh, sw), writeable=False)


def _conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                    stride: int, padding: int) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    xp = _pad2d(x, padding)
    h_out = (xp.shape[2] - kh) // stride + 1
    w_out = (xp.shape[3] - kw) // stride + 1
    patches = _patch_view(xp, kh, kw, stride, h_out, w_out)
    out = np.tensordot(patches, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, H', W', F)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += b[None, :, None, None]
    return out


def _conv2d_check(name: str, x: Tensor, w: Tensor, b: Tensor,
                  stride: int, padding: int) -> None:
    if x.data.ndim != 4:
        raise ShapeError(f"{name}: input must be (N, C, H, W), got {x.shape}")
    if w.data.ndim != 4:
        raise ShapeError(f"{name}: kernel must be 4-d, got {w.shape}")
    if stride < 1:
        raise ShapeError(f"{name}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"{name}: padding must be >= 0, got {padding}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Strided cross-correlation: (N,C,H,W) x (F,C,kh,kw) -> (N,F,H',W').

    H' = floor((H + 2*padding - kh)/stride) + 1, likewise for W'.
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    _conv2d_check("conv2d", x, weight, bias, stride, padding)
    f, c, kh, kw = weight.shape
    if x.shape[1] != c:
        raise ShapeError(f"conv2d: input channels {x.shape[1]} != kernel channels {c}")
    if bias.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({f},)")
    hp, wp = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")

    xd, wd = x.data, weight.data
    xp = _pad2d(xd, padding)
    h_out = (hp - kh) // stride + 1
    w_out = (wp - kw) // stride + 1

    def vjp(g):
        patches = _patch_view(xp, kh, kw, stride, h_out, w_out)
        db = g.sum(axis=(0, 2, 3))
        dw = np.tensordot(g, patches, axes=([0, 2, 3], [0, 2, 3]))
        # (N, H', W', C, kh, kw): per-offset contributions scattered back
        t = np.tensordot(g, wd, axes=([1], [0]))
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += \
                    t[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp if padding == 0 else dxp[:, :, padding:-padding, padding:-padding]
        return (dx, dw, db)

    out = _conv2d_forward(xd, wd, bias.data, stride, padding)
    return _node(out, (x, weight, bias), "conv2d", vjp=vjp,
                 recompute=lambda xa, wa, ba: _conv2d_forward(xa, wa, ba, stride, padding))


def _tconv2d_forward(y: np.ndarray, w: np.ndarray, b: np.ndarray,
                     stride: int, padding: int) -> np.ndarray:
    f, c, kh, kw = w.shape
    n, _, hi, wi = y.shape
    hp = stride * (hi - 1) + kh
    wp = stride * (wi - 1) + kw
    t = np.tensordot(y, w, axes=([1], [0]))  # (N, Hi, Wi, C, kh, kw)
    out = np.zeros((n, c, hp, wp))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * hi:stride, j:j + stride * wi:stride] += \
                t[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if padding:
        out = np.ascontiguousarray(out[:, :, padding:-padding, padding:-padding])
    out += b[None, :, None, None]
    return out


def transposed_conv2d(x: Tensor, weight: Tensor, bias: Tensor,
                      stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of conv2d with the same kernel/stride/padding, plus bias.

    Kernel layout matches the paired conv2d: (F, C, kh, kw) maps an F-channel
    input to a C-channel output of size stride*(H-1) + kh - 2*padding.  With
    zero bias, <conv2d(a), y> == <a, transposed_conv2d(y)> for all a, y.
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    _conv2d_check("transposed_conv2d", x, weight, bias, stride, padding)
    f, c, kh, kw = weight.shape
    if x.shape[1] != f:
        raise ShapeError(
            f"transposed_conv2d: input channels {x.shape[1]} != kernel filters {f}")
    if bias.shape != (c,):
        raise ShapeError(f"transposed_conv2d: bias shape {bias.shape} != ({c},)")
    hi, wi = x.shape[2], x.shape[3]
    h_out = stride * (hi - 1) + kh - 2 * padding
    w_out = stride * (wi - 1) + kw - 2 * padding
    if h_out < 1 or w_out < 1:
        raise ShapeError(
            f"transposed_conv2d: output {h_out}x{w_out} collapses to nothing")

    xd, wd = x.data, weight.data

    def vjp(g):
        gp = _pad2d(g, padding)
        patches = _patch_view(gp, kh, kw, stride, hi, wi)
        dx = np.tensordot(patches, wd, axes=([1, 4, 5], [1, 2, 3]))  # (N, Hi, Wi, F)
        dx = np.ascontiguousarray(dx.transpose(0, 3, 1, 2))
        dw = np.tensordot(xd, patches, axes=([0, 2, 3], [0, 2, 3]))
        db = g.sum(axis=(0, 2, 3))
        return (dx, dw, db)

    out = _tconv2d_forward(xd, wd, bias.data, stride, padding)
    return _node(out, (x, weight, bias), "transposed_conv2d", vjp=vjp,
                 recompute=lambda xa, wa, ba: _tconv2d_forward(xa, wa, ba, stride, padding))


# ---------------------------------------------------------------------------
# Classification loss
# ---------------------------------------------------------------------------

def bce_with_logits_mean(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy in logit space (stable for any magnitude).

    Per element: max(x, 0) - x*y + log(1 + exp(-|x|)).  Targets are a plain
    {0,1} array, not a differentiable input.
    """
    logits = _as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64)
    if logits.data.ndim != 1:
        raise ShapeError(f"bce_with_logits_mean: logits must be 1-d, got {logits.shape}")
    if y.shape != logits.shape:
        raise ShapeError(
            f"bce_with_logits_mean: targets shape {y.shape} != logits shape {logits.shape}")
    if logits.size == 0:
        raise ShapeError("bce_with_logits_mean: empty batch")
    n = logits.size

    def fwd(x):
        return np.mean(np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x))))

    xd = logits.data

    def vjp(g):
        return (float(g) * (_sigmoid_forward(xd) - y) / n,)

    return _node(fwd(xd), (logits,), "bce_with_logits_mean", vjp=vjp, recompute=fwd)


# ---------------------------------------------------------------------------
# Record walking: topological order, gradients, replay
# ---------------------------------------------------------------------------

def topo_order(output: Tensor) -> list[Tensor]:
    """All nodes reachable from ``output``, leaves first, deterministic order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(output: Tensor, params: Iterable[Tensor]) -> dict[Tensor, np.ndarray]:
    """Reverse-mode gradients of a scalar output for each requested parameter.

    Parameters not reachable from the output get zero gradients.
    """
    if output.size != 1:
        raise ShapeError(f"gradients: output must be scalar, got shape {output.shape}")
    params = list(params)
    order = topo_order(output)
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(order):
        if node._vjp is None:
            continue  # leaf: leave any accumulated gradient for collection
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    out: dict[Tensor, np.ndarray] = {}
    for p in params:
        g = grads.get(id(p))
        out[p] = g if g is not None else np.zeros_like(p.data)
    return out


def replay_forward(output: Tensor) -> np.ndarray:
    """Re-execute the recorded computation from leaf values.

    Recomputes every non-leaf node from (recomputed) parent values using the
    same forward code paths, and returns the fresh output array.  Must equal
    ``output.data`` bit for bit.
    """
    values: dict[int, np.ndarray] = {}
    for node in topo_order(output):
        if node._recompute is None:
            values[id(node)] = node.data
        else:
            values[id(node)] = node._recompute(*(values[id(p)] for p in node.parents))
    return np.asarray(values[id(output)], dtype=np.float64)
