"""Command-line entry point.

Exit codes: 0 success, 1 verification/assertion failure, 2 usage error.
Every subcommand that takes --out writes a manifest.json beside its
artifacts; all seeded data artifacts are byte-reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, algebra, bench, gradcheck
from .artifacts import (
    RunManifest,
    atomic_write_text,
    fmt9,
    write_csv,
    write_json,
    write_manifest,
    write_pgm,
)
from .blocks import ActPlacement, FusionMode
from .nets import STARNET_VARIANTS, build_demo_net, build_star_net, count_costs
from .train import (
    DivergenceError,
    GridSpec,
    MOONS_RECIPE,
    SUITE_MODELS,
    boundary_eval,
    build_demo_net_2d,
    heldout_moons,
    make_moons,
    net_decision_function,
    run_boundary_suite,
    train,
)


def _parse_int_list(text: str, flag: str, minimum: int | None = None) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise UsageError(f"{flag} wants a comma-separated integer list, got {text!r}")
    if not values:
        raise UsageError(f"{flag} must be nonempty")
    if minimum is not None and any(v < minimum for v in values):
        raise UsageError(f"{flag} entries must be >= {minimum}")
    return values


class UsageError(Exception):
    pass


def _suite_workers() -> int | None:
    raw = os.environ.get("STARKERNEL_THREADS")
    if raw is None:
        return os.cpu_count()
    try:
        workers = int(raw)
    except ValueError:
        raise UsageError(f"STARKERNEL_THREADS={raw!r} is not an integer")
    if workers < 1:
        raise UsageError("STARKERNEL_THREADS must be >= 1")
    return workers


# ------------------------------------------------------------- subcommands


def cmd_expand_verify(args) -> int:
    dims = _parse_int_list(args.dims, "--dims", minimum=1)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    reports = [
        algebra.verify_star_equivalence(d, args.trials, args.tol, seed=args.seed)
        for d in dims
    ]
    payload = {
        "trials": args.trials,
        "tol": args.tol,
        "dims": [
            {
                "d": r.width,
                "term_count": algebra.implicit_dims_one_layer(r.width),
                "max_deviation": r.max_deviation,
                "failures": r.failures,
                "passed": r.passed,
            }
            for r in reports
        ],
        "passed": all(r.passed for r in reports),
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    if args.out:
        write_json(Path(args.out) / "expand_verify.json", payload)
        write_manifest(args.out, RunManifest(
            "expand-verify",
            {"dims": args.dims, "trials": args.trials, "tol": args.tol,
             "seed": args.seed},
            args.seed, __version__, ["expand_verify.json"]))
    if not payload["passed"]:
        failing = [d["d"] for d in payload["dims"] if not d["passed"]]
        print(f"FAIL: expansion mismatch at d={failing}", file=sys.stderr)
        return 1
    return 0


def cmd_implicit_dims(args) -> int:
    if args.width < 2:
        raise UsageError("--width must be >= 2")
    if args.layers < 0:
        raise UsageError("--layers must be >= 0")
    if args.layers == 0:
        count = algebra.implicit_dims_one_layer(args.width)
        print(f"width {args.width}, single fused layer: {count} monomials")
        return 0
    report = algebra.implicit_dims_multi_layer(args.width, args.layers)
    print(f"width {report.width}, {report.layers} fused layers: "
          f"implicit dims ≈ 10^{fmt9(report.log10_dims)}")
    return 0


def _boundary_artifacts(out_dir: Path, stem: str, grid) -> list[str]:
    r = grid.spec.resolution
    rows = []
    for iy in range(r):
        for ix in range(r):
            rows.append((grid.xs[ix], grid.ys[iy],
                         int(grid.classes[iy, ix]), grid.margins[iy, ix]))
    write_csv(out_dir / f"{stem}.csv", ["x", "y", "class", "margin"], rows)
    # Image convention: y_max at the top row.
    write_pgm(out_dir / f"{stem}.pgm", grid.classes[::-1].astype(np.uint8) * 255)
    return [f"{stem}.csv", f"{stem}.pgm"]


def cmd_train_moons(args) -> int:
    try:
        fusion = FusionMode(args.fusion)
        placement = ActPlacement(args.placement)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = make_moons(args.n, args.noise, args.seed)
    net = build_demo_net_2d(fusion=fusion, placement=placement, seed=args.seed)
    recipe = dataclasses.replace(MOONS_RECIPE, seed=args.seed)
    try:
        history = train(net, data, recipe, heldout_moons(data))
    except DivergenceError as exc:
        print(f"FAIL: training diverged: {exc}", file=sys.stderr)
        return 1
    write_csv(out_dir / "history.csv",
              ["epoch", "lr", "train_loss", "train_acc", "eval_acc"],
              [(h.epoch, h.lr, h.train_loss, h.train_acc, h.eval_acc) for h in history])
    grid = boundary_eval(net_decision_function(net), GridSpec())
    outputs = ["history.csv"] + _boundary_artifacts(out_dir, "boundary", grid)
    write_manifest(out_dir, RunManifest(
        "train-moons",
        {"fusion": args.fusion, "placement": args.placement, "seed": args.seed,
         "n": args.n, "noise": args.noise},
        args.seed, __version__, outputs))
    last = history[-1]
    print(f"{args.fusion}/{args.placement} seed {args.seed}: "
          f"train_acc {last.train_acc:.4f} eval_acc {last.eval_acc:.4f}")
    return 0


def cmd_boundary_suite(args) -> int:
    seeds = _parse_int_list(args.seeds, "--seeds", minimum=0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    suite = run_boundary_suite(seeds, n=args.n, noise_std=args.noise,
                               max_workers=_suite_workers())
    outputs = []
    agreement = {}
    for res in suite.results:
        for name, grid in res.grids.items():
            outputs += _boundary_artifacts(out_dir, f"seed{res.seed}_{name}", grid)
        agreement[str(res.seed)] = res.agreement.tolist()
    payload = {
        "models": list(SUITE_MODELS),
        "agreement": agreement,
        "poly_over_rbf_votes": suite.agreement_ordering_votes(),
        "seeds": seeds,
    }
    write_json(out_dir / "agreement.json", payload)
    outputs.append("agreement.json")
    write_manifest(out_dir, RunManifest(
        "boundary-suite", {"seeds": args.seeds, "n": args.n, "noise": args.noise},
        None, __version__, outputs))
    print(json.dumps({"poly_over_rbf_votes": payload["poly_over_rbf_votes"],
                      "seeds": seeds}, sort_keys=True))
    return 0


def cmd_cost_report(args) -> int:
    if args.variant == "demo":
        if args.width is None or args.depth is None:
            raise UsageError("--variant demo needs --width and --depth")
        net = build_demo_net(args.width, args.depth)
    elif args.variant in STARNET_VARIANTS:
        net = build_star_net(args.variant)
    else:
        raise UsageError(f"unknown variant {args.variant!r} "
                         f"(have: {', '.join(STARNET_VARIANTS)}, demo)")
    report = count_costs(net, (1, 3, args.input, args.input))
    print(report.to_table())
    print(f"total: {report.total_params / 1e6:.3f}M params, "
          f"{report.total_macs / 1e6:.1f}M FLOPs")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "cost_report.json", report.to_json() + "\n")
        write_manifest(out_dir, RunManifest(
            "cost-report",
            {"variant": args.variant, "width": args.width, "depth": args.depth,
             "input": args.input},
            None, __version__, ["cost_report.json"]))
    return 0


def cmd_bench_elementwise(args) -> int:
    if args.shapes == "starnet-s4":
        shapes = bench.starnet_s4_shapes()
    else:
        shapes = []
        for part in args.shapes.split(","):
            if not part.strip():
                raise UsageError("--shapes contains an empty entry")
            try:
                shape = tuple(int(s) for s in part.split("x"))
            except ValueError:
                raise UsageError(f"bad shape {part!r} (want NxCxHxW)")
            if not shape or any(s < 1 for s in shape):
                raise UsageError(f"bad shape {part!r} (positive dims only)")
            shapes.append(shape)
    results = []
    for shape in shapes:
        mul, add, ratio = bench.bench_mul_add_pair(shape, args.iters, args.warmup)
        results.append({"shape": list(shape), "elements": mul.element_count,
                        "mul_median_s": mul.median_s, "add_median_s": add.median_s,
                        "mul_min_s": mul.min_s, "add_min_s": add.min_s,
                        "mul_p90_s": mul.p90_s, "add_p90_s": add.p90_s,
                        "mul_ns_per_element": mul.ns_per_element,
                        "add_ns_per_element": add.ns_per_element,
                        "mul_add_ratio": ratio})
        print(f"{'x'.join(map(str, shape))}: mul {mul.median_s * 1e6:.1f}us "
              f"add {add.median_s * 1e6:.1f}us ratio {ratio:.3f}")
    payload = {"host": results and bench.host_descriptor() or "",
               "iterations": args.iters, "warmup": args.warmup,
               "note": ("operator-level microbenchmark on host CPU; the published "
                        "table times whole converted models on device"),
               "results": results}
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "bench_elementwise.json", payload)
        write_manifest(out_dir, RunManifest(
            "bench-elementwise",
            {"shapes": args.shapes, "iters": args.iters, "warmup": args.warmup},
            None, __version__, ["bench_elementwise.json"]))
    return 0


def cmd_bench_conv(args) -> int:
    results = bench.bench_conv_backends(iterations=args.iters)
    for r in results:
        print(f"{r.case:12s} {r.backend:7s} median {r.median_s * 1e3:.3f} ms")
    return 0


def cmd_grad_check(args) -> int:
    try:
        results = gradcheck.run_all(args.module, trials=args.trials)
    except ValueError as exc:
        raise UsageError(str(exc))
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:22s} max rel err {r.max_rel_error:.3e} "
              f"({r.trials} trials, tol {r.tol:g})")
    return 1 if failed else 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starkernel",
        description="star-operation algebra, networks, and desk-scale experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("expand-verify",
                       help="check the product-of-branches polynomial expansion")
    p.add_argument("--dims", default="1,2,4,8,16,32")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_expand_verify)

    p = sub.add_parser("implicit-dims", help="implicit dimension count report")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.set_defaults(func=cmd_implicit_dims)

    p = sub.add_parser("train-moons", help="train the 2-D point network on moons")
    p.add_argument("--fusion", default="star")
    p.add_argument("--placement", default="one")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_moons)

    p = sub.add_parser("boundary-suite",
                       help="star/sum nets vs kernel classifiers, multi-seed")
    p.add_argument("--seeds", default="0,1,2,3")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_boundary_suite)

    p = sub.add_parser("cost-report", help="parameter/MAC accounting per variant")
    p.add_argument("--variant", required=True)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--input", type=int, default=224)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_cost_report)

    p = sub.add_parser("bench-elementwise", help="star (mul) vs sum (add) latency")
    p.add_argument("--shapes", default="starnet-s4")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_elementwise)

    p = sub.add_parser("bench-conv", help="compare the conv kernel backends")
    p.add_argument("--iters", type=int, default=20)
    p.set_defaults(func=cmd_bench_conv)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--module", default="all")
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
