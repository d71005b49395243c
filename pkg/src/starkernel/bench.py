"""Microbenchmarks: elementwise mul vs add, and the two conv backends.

The elementwise benchmark mirrors the published device-latency protocol
(50 warmup iterations, averages over 500 timed ones) at operator
granularity on the host CPU; the claim under test is that star's
elementwise multiply costs the same order as summation's add. Timing
loops run single-threaded over preallocated buffers so only the kernel
itself is measured.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import kernels
from .artifacts import host_descriptor
from .nets import build_star_net, fusion_activation_shapes
from .rngs import make_rng

ELEMENTWISE_OPS = {"mul": np.multiply, "add": np.add}


@dataclass
class BenchResult:
    op: str
    shape: tuple[int, ...]
    element_count: int
    iterations: int
    warmup_iterations: int
    min_s: float
    median_s: float
    p90_s: float
    ns_per_element: float
    throughput: float  # elements / second at the median
    timestamp: str
    host: str


def _time_loop(fn, iterations: int, warmup: int) -> np.ndarray:
    for _ in range(warmup):
        fn()
    samples = np.empty(iterations)
    for i in range(iterations):
        t0 = time.perf_counter()
        fn()
        samples[i] = time.perf_counter() - t0
    return samples


def bench_elementwise(op: str, shape, iterations: int = 500,
                      warmup: int = 50) -> BenchResult:
    if op not in ELEMENTWISE_OPS:
        raise ValueError(f"unknown op {op!r}")
    if iterations < 1 or warmup < 0:
        raise ValueError("need iterations >= 1 and warmup >= 0")
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ValueError("shape entries must be positive")
    rng = make_rng(0xBE7C)
    a = rng.standard_normal(shape)
    b = rng.standard_normal(shape)
    out = np.empty(shape)
    kernel = ELEMENTWISE_OPS[op]
    samples = _time_loop(lambda: kernel(a, b, out=out), iterations, warmup)
    median = float(np.median(samples))
    n = a.size
    return BenchResult(
        op=op,
        shape=shape,
        element_count=n,
        iterations=iterations,
        warmup_iterations=warmup,
        min_s=float(samples.min()),
        median_s=median,
        p90_s=float(np.percentile(samples, 90)),
        ns_per_element=median * 1e9 / n,
        throughput=n / median,
        timestamp=datetime.now(timezone.utc).isoformat(),
        host=host_descriptor(),
    )


def bench_mul_add_pair(shape, iterations: int = 500,
                       warmup: int = 50) -> tuple[BenchResult, BenchResult, float]:
    """Times mul and add on identical buffers; returns (mul, add, ratio)."""
    mul = bench_elementwise("mul", shape, iterations, warmup)
    add = bench_elementwise("add", shape, iterations, warmup)
    return mul, add, mul.median_s / add.median_s


def starnet_s4_shapes(input_hw: int = 224) -> list[tuple[int, ...]]:
    """Unique activation shapes at StarNet-S4's fuse sites, batch 1."""
    net = build_star_net("s4")
    seen: list[tuple[int, ...]] = []
    for shape in fusion_activation_shapes(net, input_hw):
        if shape not in seen:
            seen.append(shape)
    return seen


# ----------------------------------------------------- conv backend compare


@dataclass
class ConvBenchResult:
    backend: str
    case: str
    shape: tuple[int, ...]
    iterations: int
    median_s: float


CONV_CASES = {
    # name -> (n, c, h, w, cout, k, stride, padding, groups)
    "stem3x3_s2": (1, 3, 64, 64, 32, 3, 2, 1, 1),
    "dwconv7x7": (1, 64, 28, 28, 64, 7, 1, 3, 64),
    "pointwise": (1, 64, 28, 28, 256, 1, 1, 0, 1),
}


def bench_conv_backends(iterations: int = 20, warmup: int = 3,
                        backends=None) -> list[ConvBenchResult]:
    """Median forward-pass time per conv case for every available backend."""
    if backends is None:
        backends = kernels.available_backends()
    rng = make_rng(0xC0)
    results = []
    for case, (n, c, h, w, cout, k, stride, padding, groups) in CONV_CASES.items():
        x = rng.standard_normal((n, c, h, w))
        wt = rng.standard_normal((cout, c // groups, k, k))
        for backend in backends:
            fwd = kernels._BACKENDS[backend].conv2d_forward
            samples = _time_loop(lambda: fwd(x, wt, stride, padding, groups),
                                 iterations, warmup)
            results.append(ConvBenchResult(backend, case, x.shape, iterations,
                                           float(np.median(samples))))
    return results
