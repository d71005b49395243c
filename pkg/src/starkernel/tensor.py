"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every op links its output tensor to its inputs together with
a closure mapping the upstream gradient to input gradients. The compute
graph is exactly this linked structure, rebuilt on every forward pass.
``backward()`` walks it once in reverse topological order, accumulates into
leaf ``.grad`` slots additively (calling it twice doubles leaf gradients),
and keeps intermediate gradients in a scratch dict so repeated calls stay
well defined.

Everything is 64-bit. Non-finite values produced by a forward op raise
``NonFiniteError`` instead of propagating silently; the check can be
suspended with ``no_finite_checks()`` for timing loops.

Gradient tracking is thread-local: independent forward/backward passes on
separate threads do not interact.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from . import costs
from .kernels import conv2d_forward, conv2d_grad_input, conv2d_grad_weight


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class NonFiniteError(ArithmeticError):
    """A forward op produced NaN or Inf from finite inputs."""


_tls = threading.local()


def _grad_enabled() -> bool:
    return getattr(_tls, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph construction (evaluation / timing loops)."""
    prev = _grad_enabled()
    _tls.grad_enabled = False
    try:
        yield
    finally:
        _tls.grad_enabled = prev


_FINITE_CHECKS = True


@contextmanager
def no_finite_checks():
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = False
    try:
        yield
    finally:
        _FINITE_CHECKS = prev


def _checked(data: np.ndarray, op: str) -> np.ndarray:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return data


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is not None:
                for parent, pg in zip(node._parents, node._vjp(g)):
                    if pg is None:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg
            elif node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g

    # Operator sugar; the module-level functions carry the real semantics.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __sub__(self, other):
        return add(self, mul(_lift(other), _lift(-1.0)))

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named leaf tensor that always tracks gradients."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, vjp, op: str) -> Tensor:
    out = Tensor(_checked(data, op))
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc
    costs.add_elems(data.size)
    return _result(
        data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc
    costs.add_elems(data.size)
    return _result(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ ({a.shape} @ {b.shape})")
    m, k = a.shape
    n = b.shape[1]
    costs.add_macs(m * k * n)
    data = a.data @ b.data
    return _result(data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


# --------------------------------------------------------------- convolution


def conv2d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Grouped cross-correlation over NCHW input (no kernel flip)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weight")
    n, c, h, wdt = x.shape
    cout, cg, kh, kw = w.shape
    if c % groups or cout % groups:
        raise ShapeError(f"channels ({c}->{cout}) not divisible by groups={groups}")
    if cg != c // groups:
        raise ShapeError(f"weight expects {cg * groups} input channels, got {c}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wdt + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"non-positive output extent ({ho}x{wo})")
    costs.add_macs(n * cout * ho * wo * cg * kh * kw)
    pointwise = kh == 1 and kw == 1 and stride == 1 and padding == 0 and groups == 1
    if pointwise:
        # A 1x1 stride-1 convolution is a linear layer over channels; route
        # it through BLAS instead of the conv backends.
        data = np.tensordot(w.data[:, :, 0, 0], x.data, axes=([1], [1])).transpose(1, 0, 2, 3)
    else:
        data = conv2d_forward(x.data, w.data, stride, padding, groups)
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError("conv2d bias must have one entry per output channel")
        data = data + bias.data[None, :, None, None]

    parents = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        gx = gw = None
        if pointwise:
            if x.requires_grad:
                gx = np.tensordot(w.data[:, :, 0, 0], g, axes=([0], [1])).transpose(1, 0, 2, 3)
            if w.requires_grad:
                gw = np.einsum("nohw,nchw->oc", g, x.data, optimize=True)[:, :, None, None]
        else:
            if x.requires_grad:
                gx = conv2d_grad_input(g, w.data, x.shape, stride, padding, groups)
            if w.requires_grad:
                gw = conv2d_grad_weight(g, x.data, w.shape, stride, padding, groups)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _result(data, parents, vjp, "conv2d")


# ------------------------------------------------------------- normalization


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis per position, then apply gamma/beta.

    Zero-variance convention: divide by sqrt(var + eps), so constant inputs
    map to zero before the affine.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("gamma/beta length must match the normalized axis")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    data = xhat * gamma.data + beta.data
    costs.add_elems(data.size)

    def vjp(g):
        gxh = g * gamma.data
        gx = inv * (
            gxh
            - gxh.mean(axis=-1, keepdims=True)
            - xhat * (gxh * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(data, (x, gamma, beta), vjp, "layer_norm")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize per channel (axis 1) over batch and spatial positions.

    Training mode normalizes with batch statistics and folds them into the
    running stats in place (biased variance on both sides, so eval mode on
    a frozen batch reproduces train mode exactly). Eval mode uses the
    running stats only.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if x.data.ndim not in (2, 4):
        raise ShapeError("batch_norm expects (N,C) or (N,C,H,W) input")
    ch = x.shape[1]
    if gamma.shape != (ch,) or beta.shape != (ch,):
        raise ShapeError("gamma/beta length must match the channel axis")
    axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
    cshape = (1, ch) if x.data.ndim == 2 else (1, ch, 1, 1)
    costs.add_elems(x.data.size)

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(cshape)) * inv.reshape(cshape)
    data = xhat * gamma.data.reshape(cshape) + beta.data.reshape(cshape)

    if training:
        count = x.data.size // ch

        def vjp(g):
            gxh = g * gamma.data.reshape(cshape)
            gx = inv.reshape(cshape) * (
                gxh
                - gxh.mean(axis=axes).reshape(cshape)
                - xhat * (gxh * xhat).sum(axis=axes).reshape(cshape) / count
            )
            return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    else:

        def vjp(g):
            gx = g * (gamma.data * inv).reshape(cshape)
            return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _result(data, (x, gamma, beta), vjp, "batch_norm")


# ---------------------------------------------------------------- activations


def relu(x: Tensor) -> Tensor:
    costs.add_elems(x.size)
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def relu6(x: Tensor) -> Tensor:
    costs.add_elems(x.size)
    mask = (x.data > 0) & (x.data < 6)
    return _result(np.clip(x.data, 0.0, 6.0), (x,), lambda g: (g * mask,), "relu6")


def gelu(x: Tensor) -> Tensor:
    """Exact-erf form: x/2 * (1 + erf(x / sqrt(2)))."""
    costs.add_elems(x.size)
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
    local = cdf + x.data * pdf
    return _result(x.data * cdf, (x,), lambda g: (g * local,), "gelu")


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    costs.add_elems(x.size)
    local = np.where(x.data > 0, 1.0, slope)
    return _result(x.data * local, (x,), lambda g: (g * local,), "leaky_relu")


def hardswish(x: Tensor) -> Tensor:
    """x * relu6(x + 3) / 6."""
    costs.add_elems(x.size)
    inner = np.clip(x.data + 3.0, 0.0, 6.0)
    local = np.where(x.data <= -3.0, 0.0, np.where(x.data >= 3.0, 1.0, (2.0 * x.data + 3.0) / 6.0))
    return _result(x.data * inner / 6.0, (x,), lambda g: (g * local,), "hardswish")


ACTIVATIONS = {
    "relu": relu,
    "relu6": relu6,
    "gelu": gelu,
    "leaky_relu": leaky_relu,
    "hardswish": hardswish,
}


# ----------------------------------------------------------- shape / reduce


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    data = x.data.reshape(shape)
    return _result(data, (x,), lambda g: (g.reshape(old),), "reshape")


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "permute")


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis (backward zero-pads)."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return _result(x.data[idx].copy(), (x,), vjp, "narrow")


def mean(x: Tensor, axes=None) -> Tensor:
    axes = tuple(range(x.data.ndim)) if axes is None else tuple(axes)
    data = x.data.mean(axis=axes)
    scale = 1.0
    for ax in axes:
        scale /= x.shape[ax]

    def vjp(g):
        g = np.expand_dims(g, axes)
        return (np.broadcast_to(g * scale, x.shape).copy(),)

    return _result(data, (x,), vjp, "mean")


def tsum(x: Tensor, axes=None) -> Tensor:
    axes = tuple(range(x.data.ndim)) if axes is None else tuple(axes)
    data = x.data.sum(axis=axes)

    def vjp(g):
        g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(data, (x,), vjp, "sum")


def mean_pool_spatial(x: Tensor, layout: str = "NCHW") -> Tensor:
    """Average over the two spatial axes, yielding (N, C)."""
    if x.data.ndim < 4:
        raise ShapeError("mean_pool_spatial expects rank-4 input")
    if layout == "NCHW":
        return mean(x, axes=(2, 3))
    if layout == "NHWC":
        return mean(x, axes=(1, 2))
    raise ValueError(f"unknown layout {layout!r}")


# ------------------------------------------------------------------- losses


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over the batch; labels are class indices."""
    if logits.data.ndim != 2:
        raise ShapeError("softmax_cross_entropy expects (N, K) logits")
    n = logits.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError("labels must be one index per row")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    data = -logp[np.arange(n), labels].mean()
    probs = np.exp(logp)

    def vjp(g):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return (g * grad / n,)

    return _result(np.asarray(data), (logits,), vjp, "softmax_cross_entropy")
