"""Central finite-difference verification of every backward rule.

Each named check draws one random small case (<= 64 elements per checked
leaf), computes a random linear functional of the op's output, and compares
autodiff gradients against central differences. Checks are deterministic:
trial t of check c is keyed by (crc32(c), t).

Inputs to kinked activations are nudged away from their kink points before
differencing; a derivative check is only meaningful where the derivative
exists.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .blocks import ActPlacement, BlockConfig, DemoBlock, DemoBlock2D, FusionMode, StarBlock
from .rngs import make_rng
from .tensor import Tensor

EPS = 1e-5


def numeric_gradient(f: Callable[..., float], arrays: list[np.ndarray], which: int,
                     eps: float = EPS) -> np.ndarray:
    """Central differences of a scalar function in its ``which``-th input."""
    base = [a.copy() for a in arrays]
    target = base[which]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(*base)
        flat[i] = keep - eps
        lo = f(*base)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def max_rel_error(build_scalar: Callable[..., Tensor], arrays: list[np.ndarray],
                  eps: float = EPS) -> float:
    """Worst |autodiff - central difference| / max(1, |difference|) over inputs."""
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    build_scalar(*leaves).backward()

    def scalar(*raw):
        with T.no_grad():
            return build_scalar(*(Tensor(a) for a in raw)).item()

    worst = 0.0
    for i, leaf in enumerate(leaves):
        fd = numeric_gradient(scalar, arrays, i, eps)
        ad = leaf.grad if leaf.grad is not None else np.zeros_like(fd)
        denom = max(1.0, float(np.abs(fd).max()))
        worst = max(worst, float(np.abs(ad - fd).max()) / denom)
    return worst


def _away_from(values: np.ndarray, kinks, margin: float = 1e-3) -> np.ndarray:
    out = values.copy()
    for k in kinks:
        near = np.abs(out - k) < margin
        out[near] = k + margin * np.where(out[near] >= k, 1.0, -1.0)
    return out


def _projected(op):
    """Scalar functional: sum of op output weighted by a fixed random array."""

    def build(weights):
        def scalar(*tensors):
            return T.tsum(T.mul(op(*tensors), Tensor(weights)))

        return scalar

    return build


# ------------------------------------------------------------- check cases


def _check_matmul(rng) -> float:
    a, b = rng.standard_normal((5, 4)), rng.standard_normal((4, 3))
    w = rng.standard_normal((5, 3))
    return max_rel_error(_projected(T.matmul)(w), [a, b])


def _check_mul(rng) -> float:
    a, b = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    w = rng.standard_normal((4, 4))
    return max_rel_error(_projected(T.mul)(w), [a, b])


def _check_add(rng) -> float:
    a, b = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    w = rng.standard_normal((4, 4))
    return max_rel_error(_projected(T.add)(w), [a, b])


def _check_conv2d(rng) -> float:
    n, c, h, wd, o, k, s, p, g = [
        (1, 2, 4, 4, 3, 3, 1, 1, 1),
        (1, 4, 4, 4, 4, 7, 1, 3, 4),
        (2, 2, 5, 5, 2, 2, 2, 0, 2),
        (1, 3, 3, 3, 4, 1, 1, 0, 1),
    ][int(rng.integers(4))]
    x = rng.standard_normal((n, c, h, wd))
    wt = rng.standard_normal((o, c // g, k, k))
    bias = rng.standard_normal(o)
    ho = (h + 2 * p - k) // s + 1
    wo = (wd + 2 * p - k) // s + 1
    proj = rng.standard_normal((n, o, ho, wo))

    def scalar(xt, wtt, bt):
        return T.tsum(T.mul(T.conv2d(xt, wtt, bt, s, p, g), Tensor(proj)))

    return max_rel_error(scalar, [x, wt, bias])


def _check_layer_norm(rng) -> float:
    x = rng.standard_normal((3, 4))
    gamma, beta = rng.standard_normal(4), rng.standard_normal(4)
    proj = rng.standard_normal((3, 4))

    def scalar(xt, gt, bt):
        return T.tsum(T.mul(T.layer_norm(xt, gt, bt), Tensor(proj)))

    return max_rel_error(scalar, [x, gamma, beta])


def _check_batch_norm(rng) -> float:
    x = rng.standard_normal((4, 3, 2, 2))
    gamma = 1.0 + 0.1 * rng.standard_normal(3)
    beta = rng.standard_normal(3)
    proj = rng.standard_normal(x.shape)

    def scalar(xt, gt, bt):
        y = T.batch_norm(xt, gt, bt, np.zeros(3), np.ones(3), training=True)
        return T.tsum(T.mul(y, Tensor(proj)))

    return max_rel_error(scalar, [x, gamma, beta])


def _activation_check(op, kinks):
    def check(rng) -> float:
        x = _away_from(3.0 * rng.standard_normal((4, 4)), kinks)
        w = rng.standard_normal((4, 4))
        return max_rel_error(_projected(op)(w), [x])

    return check


def _check_mean_pool(rng) -> float:
    x = rng.standard_normal((2, 2, 3, 3))
    w = rng.standard_normal((2, 2))
    return max_rel_error(_projected(lambda t: T.mean_pool_spatial(t, "NCHW"))(w), [x])


def _check_softmax_xent(rng) -> float:
    logits = rng.standard_normal((5, 3))
    labels = rng.integers(0, 3, size=5)
    return max_rel_error(lambda t: T.softmax_cross_entropy(t, labels), [logits])


def _smooth_probe(block_forward, probe, x, rng, kinks, attempts=50, margin=1e-4):
    """Redraw x until the kinked preactivations keep a margin from the kinks."""
    for _ in range(attempts):
        with T.no_grad():
            pre = probe(Tensor(x)).data
        if all(np.abs(pre - k).min() > margin for k in kinks):
            return x
        x = rng.standard_normal(x.shape)
    raise RuntimeError("could not find a kink-free probe point")


def _check_demo_block(rng) -> float:
    cfg = BlockConfig(dim=8, fusion=FusionMode.STAR if rng.random() < 0.5 else FusionMode.SUM)
    block = DemoBlock(cfg, rng).eval()
    x = rng.standard_normal((1, 2, 2, 8))
    proj = rng.standard_normal(x.shape)
    return max_rel_error(_projected(block)(proj), [x])


def _check_demo_block_2d(rng) -> float:
    cfg = BlockConfig(dim=8, fusion=FusionMode.STAR if rng.random() < 0.5 else FusionMode.SUM,
                      activation="relu", use_conv=False)
    block = DemoBlock2D(cfg, rng).eval()

    def preact(t):
        return T.narrow(block.f(block.norm(t)), -1, 0, cfg.hidden)

    x = _smooth_probe(block, preact, rng.standard_normal((4, 8)), rng, kinks=(0.0,))
    proj = rng.standard_normal(x.shape)
    return max_rel_error(_projected(block)(proj), [x])


def _check_star_block(rng) -> float:
    block = StarBlock(8, rng).eval()
    # Spread the branch preactivations away from the origin so the
    # kink-free rejection sampling below converges quickly.
    block.f1.bias.data[:] = 0.2 * rng.standard_normal(block.f1.bias.shape)
    block.f2.bias.data[:] = 0.2 * rng.standard_normal(block.f2.bias.shape)

    def preact(t):
        return block.f1(block.dwconv(t))

    x = _smooth_probe(block, preact, rng.standard_normal((1, 8, 2, 2)), rng,
                      kinks=(0.0, 6.0))
    proj = rng.standard_normal(x.shape)
    return max_rel_error(_projected(block)(proj), [x])


CHECKS: dict[str, tuple[str, Callable]] = {
    "matmul": ("tensor", _check_matmul),
    "elementwise_mul": ("tensor", _check_mul),
    "elementwise_add": ("tensor", _check_add),
    "conv2d": ("tensor", _check_conv2d),
    "layer_norm": ("tensor", _check_layer_norm),
    "batch_norm": ("tensor", _check_batch_norm),
    "relu": ("tensor", _activation_check(T.relu, (0.0,))),
    "relu6": ("tensor", _activation_check(T.relu6, (0.0, 6.0))),
    "gelu": ("tensor", _activation_check(T.gelu, ())),
    "leaky_relu": ("tensor", _activation_check(T.leaky_relu, (0.0,))),
    "hardswish": ("tensor", _activation_check(T.hardswish, (-3.0, 3.0))),
    "mean_pool_spatial": ("tensor", _check_mean_pool),
    "softmax_cross_entropy": ("tensor", _check_softmax_xent),
    "demo_block": ("blocks", _check_demo_block),
    "demo_block_2d": ("blocks", _check_demo_block_2d),
    "star_block": ("blocks", _check_star_block),
}


@dataclass
class CheckResult:
    name: str
    trials: int
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def run_check(name: str, trials: int = 100, tol: float = 1e-4) -> CheckResult:
    _, fn = CHECKS[name]
    key = zlib.crc32(name.encode())
    worst = 0.0
    for trial in range(trials):
        worst = max(worst, fn(make_rng(key, trial)))
    return CheckResult(name, trials, worst, tol)


def run_all(module: str = "all", trials: int = 100, tol: float = 1e-4) -> list[CheckResult]:
    if module not in ("all", "tensor", "blocks"):
        raise ValueError(f"unknown module {module!r}")
    return [
        run_check(name, trials, tol)
        for name, (group, _) in CHECKS.items()
        if module in ("all", group)
    ]
