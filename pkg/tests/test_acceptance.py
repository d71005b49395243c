"""Acceptance gate: the nine primary claims, each printing one PASS/FAIL line.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the lines inline;
under plain ``pytest`` they appear in captured output on failure.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np

from starkernel import algebra, gradcheck
from starkernel.bench import bench_mul_add_pair, starnet_s4_shapes
from starkernel.blocks import (
    ActPlacement,
    BlockConfig,
    ConvBN,
    DemoBlock,
    FusionMode,
    StarBlock,
)
from starkernel.cli import main as cli_main
from starkernel.nets import build_demo_net_2d, build_star_net, count_costs
from starkernel.rngs import make_rng
from starkernel.tensor import Tensor
from starkernel.train import MOONS_RECIPE, make_moons, train


def _report(num: int, desc: str, ok: bool) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {desc}")
    assert ok, f"criterion {num}: {desc}"


def test_criterion_1_expansion_equivalence():
    t0 = time.perf_counter()
    ok = True
    for d in (1, 2, 4, 8, 16, 32):
        report = algebra.verify_star_equivalence(d, trials=100, tol=1e-9)
        ok &= report.passed
        ok &= algebra.implicit_dims_one_layer(d) == (d + 2) * (d + 1) // 2
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    _report(1, f"expansion exact for d in {{1..32}}, 100 trials each, "
               f"tol 1e-9 rel, {elapsed:.2f}s < 1s", ok)


def test_criterion_2_implicit_dims_magnitude():
    report = algebra.implicit_dims_multi_layer(128, 10)
    target = 1024 * math.log10(128 / math.sqrt(2))
    ok = abs(report.log10_dims - target) < 0.5
    _report(2, f"implicit dims 10^{report.log10_dims:.2f} within 0.5 of "
               f"1024*log10(128/sqrt(2)) = {target:.2f}", ok)


def test_criterion_3_cost_tables():
    rows = {
        "s1": (2.9e6, 425e6), "s2": (3.7e6, 547e6),
        "s3": (5.8e6, 757e6), "s4": (7.5e6, 1075e6),
        "n050": (0.54e6, 92.8e6), "n100": (1.04e6, 187.1e6),
        "n150": (1.56e6, 229.0e6),
    }
    t0 = time.perf_counter()
    ok = True
    for variant, (params, macs) in rows.items():
        rep = count_costs(build_star_net(variant), (1, 3, 224, 224))
        ok &= abs(rep.total_params - params) <= 0.05e6
        ok &= abs(rep.total_macs - macs) <= 0.03 * macs
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5.0
    _report(3, f"all 7 variants within ±0.05M params / ±3% MACs, "
               f"{elapsed:.2f}s < 5s", ok)


def test_criterion_4_gradient_checks():
    t0 = time.perf_counter()
    results = gradcheck.run_all("all", trials=100, tol=1e-4)
    elapsed = time.perf_counter() - t0
    worst = max(r.max_rel_error for r in results)
    ok = all(r.passed for r in results) and elapsed < 30.0
    _report(4, f"{len(results)} op/block checks x 100 trials, worst rel err "
               f"{worst:.2e} < 1e-4, {elapsed:.1f}s < 30s", ok)


def test_criterion_5_moons_directional_claims():
    t0 = time.perf_counter()
    acc: dict[tuple[str, str, int], float] = {}
    for fusion in (FusionMode.STAR, FusionMode.SUM):
        for placement in (ActPlacement.ONE, ActPlacement.NONE):
            for seed in (0, 1, 2):
                net = build_demo_net_2d(fusion=fusion, placement=placement,
                                        seed=seed)
                history = train(net, make_moons(1000, 0.2, seed),
                                replace(MOONS_RECIPE, seed=seed))
                acc[(fusion.value, placement.value, seed)] = history[-1].eval_acc
    elapsed = time.perf_counter() - t0

    def mean(fusion, placement):
        return float(np.mean([acc[(fusion, placement, s)] for s in (0, 1, 2)]))

    star, summ = mean("star", "one"), mean("sum", "one")
    claim_a = star >= summ
    claim_b = all(acc[("star", "one", s)] >= 0.95 for s in (0, 1, 2))
    star_gap = star - mean("star", "none")
    sum_gap = summ - mean("sum", "none")
    claim_c = star_gap < sum_gap
    ok = claim_a and claim_b and claim_c and elapsed < 120.0
    _report(5, f"(a) star {star:.4f} >= sum {summ:.4f}; (b) star >= 0.95 every "
               f"seed; (c) removal gap {star_gap:+.4f} < {sum_gap:+.4f}; "
               f"{elapsed:.0f}s < 120s", ok)


def test_criterion_6_kernel_analogy_ordering():
    from starkernel.train import run_boundary_suite

    t0 = time.perf_counter()
    suite = run_boundary_suite([0, 1, 2, 3])
    elapsed = time.perf_counter() - t0
    votes = suite.agreement_ordering_votes()
    ok = votes >= 3 and elapsed < 180.0
    _report(6, f"agreement(star, poly) > agreement(star, rbf) in {votes}/4 "
               f"seeds (need >= 3), {elapsed:.0f}s < 180s", ok)


def test_criterion_7_elementwise_latency_parity():
    t0 = time.perf_counter()
    ratios = {}
    for shape in starnet_s4_shapes():
        _, _, ratio = bench_mul_add_pair(shape, iterations=500, warmup=50)
        ratios[shape] = ratio
    elapsed = time.perf_counter() - t0
    ok = all(0.5 <= r <= 2.0 for r in ratios.values()) and elapsed < 60.0
    worst = max(ratios.values(), key=lambda r: abs(math.log(r)))
    _report(7, f"mul/add median ratio in [0.5, 2.0] on all 4 fuse shapes "
               f"(extreme {worst:.3f}), {elapsed:.0f}s < 60s", ok)


def test_criterion_8_seeded_artifacts_are_byte_identical(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / "train" / name
        assert cli_main(["train-moons", "--seed", "1", "--n", "128",
                         "--out", str(out)]) == 0
        runs.append({p.name: p.read_bytes() for p in out.iterdir()})
    for name in ("c", "d"):
        out = tmp_path / "verify" / name
        assert cli_main(["expand-verify", "--dims", "1,4", "--trials", "10",
                         "--out", str(out)]) == 0
        runs.append({p.name: p.read_bytes() for p in out.iterdir()})
    ok = True
    for first, second in (runs[:2], runs[2:]):
        ok &= set(first) == set(second)
        for fname in first:
            if fname == "manifest.json":
                a = {k: v for k, v in json.loads(first[fname]).items()
                     if k != "timestamp"}
                b = {k: v for k, v in json.loads(second[fname]).items()
                     if k != "timestamp"}
                ok &= a == b
            else:
                ok &= first[fname] == second[fname]
    _report(8, "rerun train-moons and expand-verify artifacts byte-identical "
               "(manifest differs only in timestamp)", ok)


def test_criterion_9_residual_identity_and_bn_fold():
    t0 = time.perf_counter()
    rng = make_rng(90)

    demo = DemoBlock(BlockConfig(dim=8), make_rng(91)).eval()
    for mod in (demo.f, demo.g):
        mod.weight.data[:] = 0.0
        mod.bias.data[:] = 0.0
    x = rng.standard_normal((2, 3, 3, 8))
    demo_exact = np.array_equal(demo(Tensor(x)).data, x)

    star = StarBlock(8, make_rng(92)).eval()
    for mod in (star.f1, star.f2, star.g):
        mod.weight.data[:] = 0.0
        mod.bias.data[:] = 0.0
    xs = rng.standard_normal((2, 8, 4, 4))
    star_dev = float(np.abs(star(Tensor(xs)).data - xs).max())

    cb = ConvBN(4, 6, 3, make_rng(93), padding=1, with_bn=True)
    cb.bn.running_mean[:] = 0.3 * rng.standard_normal(6)
    cb.bn.running_var[:] = 1.0 + 0.2 * rng.random(6)
    cb.eval()
    xf = Tensor(rng.standard_normal((2, 4, 6, 6)))
    fold_dev = float(np.abs(cb(xf).data - cb.fold()(xf).data).max())

    elapsed = time.perf_counter() - t0
    ok = demo_exact and star_dev < 1e-12 and fold_dev < 1e-9 and elapsed < 5.0
    _report(9, f"demo residual bit-exact; efficient-block residual dev "
               f"{star_dev:.1e} < 1e-12; BN fold dev {fold_dev:.1e} < 1e-9; "
               f"{elapsed:.2f}s < 5s", ok)
