import numpy as np
import pytest

from starkernel import kernels
from starkernel.bench import (
    CONV_CASES,
    bench_conv_backends,
    bench_elementwise,
    bench_mul_add_pair,
    starnet_s4_shapes,
)


def test_bench_result_invariants():
    r = bench_elementwise("mul", (64, 64), iterations=30, warmup=3)
    assert r.op == "mul" and r.shape == (64, 64) and r.element_count == 4096
    assert r.iterations == 30 and r.warmup_iterations == 3
    assert 0 < r.min_s <= r.median_s <= r.p90_s
    assert r.ns_per_element == pytest.approx(r.median_s * 1e9 / 4096)
    assert r.throughput == pytest.approx(4096 / r.median_s)
    assert r.host and r.timestamp


def test_mul_add_ratio_is_same_order():
    mul, add, ratio = bench_mul_add_pair((256, 256), iterations=50, warmup=5)
    assert ratio == pytest.approx(mul.median_s / add.median_s)
    # generous sanity window; the acceptance gate uses the tight [0.5, 2.0]
    assert 0.1 < ratio < 10.0


def test_bench_time_scales_with_elements():
    # 16x the elements must cost measurably more; take the best of a few
    # repeats to shake scheduler noise out of the comparison.
    small = min(bench_elementwise("add", (128, 128), iterations=30).median_s
                for _ in range(5))
    large = min(bench_elementwise("add", (512, 512), iterations=30).median_s
                for _ in range(5))
    assert large > 2.0 * small


def test_bench_rejects_bad_arguments():
    with pytest.raises(ValueError):
        bench_elementwise("div", (8, 8))
    with pytest.raises(ValueError):
        bench_elementwise("mul", (8, 8), iterations=0)
    with pytest.raises(ValueError):
        bench_elementwise("mul", ())
    with pytest.raises(ValueError):
        bench_elementwise("mul", (0, 4))


def test_starnet_s4_shapes_are_the_four_fuse_widths():
    shapes = starnet_s4_shapes()
    assert shapes == [
        (1, 128, 56, 56),
        (1, 256, 28, 28),
        (1, 512, 14, 14),
        (1, 1024, 7, 7),
    ]


def test_conv_bench_covers_all_backends_and_cases():
    results = bench_conv_backends(iterations=2, warmup=1)
    backends = kernels.available_backends()
    assert len(results) == len(CONV_CASES) * len(backends)
    seen = {(r.case, r.backend) for r in results}
    assert seen == {(c, b) for c in CONV_CASES for b in backends}
    assert all(r.median_s > 0 for r in results)
