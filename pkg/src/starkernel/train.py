"""Deterministic training on the two-moons testbed, plus the ablations.

Every source of randomness flows from counter-based Philox keyed on the
recipe seed: init uses ``seed``, the shuffle of epoch e uses ``(seed, e)``,
and the held-out split regenerates the moons with ``seed + 1000``. Two
runs with the same recipe produce bit-identical histories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .algebra import KernelRidgeClassifier
from .blocks import ActPlacement, FusionMode
from .nets import DemoNet2D, build_demo_net_2d
from .nn import Module
from .rngs import make_rng
from .tensor import Tensor


class DivergenceError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


# -------------------------------------------------------------------- data


@dataclass
class MoonsDataset:
    points: np.ndarray
    labels: np.ndarray
    noise_std: float
    seed: int

    def __len__(self) -> int:
        return self.points.shape[0]


def make_moons(n: int, noise_std: float, seed: int) -> MoonsDataset:
    """Two interleaving half circles with isotropic Gaussian noise.

    Class 0 sits on (cos t, sin t) and class 1 on (1 - cos t, 0.5 - sin t)
    for t evenly spaced on [0, pi]; class 0 gets ceil(n/2) points. The
    returned order is a seeded shuffle.
    """
    if n < 2:
        raise ValueError("need at least two points")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    pts = np.concatenate(
        [
            np.stack([np.cos(t0), np.sin(t0)], axis=1),
            np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1),
        ]
    )
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    rng = make_rng(seed)
    pts = pts + noise_std * rng.standard_normal(pts.shape)
    order = rng.permutation(n)
    return MoonsDataset(pts[order], labels[order], noise_std, seed)


def heldout_moons(dataset: MoonsDataset) -> MoonsDataset:
    return make_moons(len(dataset), dataset.noise_std, dataset.seed + 1000)


# ------------------------------------------------------------- optimization


@dataclass
class TrainRecipe:
    optimizer: str = "sgd"  # "sgd" | "adamw"
    base_lr: float = 0.1
    min_lr: float = 0.005
    weight_decay: float = 2e-4
    momentum: float = 0.9
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 32
    epochs: int = 30
    warmup_epochs: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.min_lr > self.base_lr:
            raise ValueError("min_lr must not exceed base_lr")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


# The published 2-D points setting: SGD momentum 0.9, lr 0.1 -> 0.005
# cosine, weight decay 2e-4, batch 32, 30 epochs.
MOONS_RECIPE = TrainRecipe()


def cosine_lr(step: int, total_steps: int, base_lr: float, min_lr: float,
              warmup_steps: int = 0) -> float:
    """Linear warmup 0 -> base_lr, then cosine decay base_lr -> min_lr."""
    if total_steps <= warmup_steps:
        raise ValueError("total_steps must exceed warmup_steps")
    if not 0 <= step <= total_steps:
        raise ValueError("step out of range")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


def _grad_of(param, step: int) -> np.ndarray:
    if param.grad is None:
        return np.zeros_like(param.data)
    if not np.all(np.isfinite(param.grad)):
        raise DivergenceError(f"non-finite gradient in {param.name or 'parameter'}", step)
    return param.grad


class SGDMomentum:
    def __init__(self, params, momentum: float, weight_decay: float = 0.0):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]
        self.step_index = 0

    def step(self, lr: float) -> None:
        for p, v in zip(self.params, self.velocity):
            g = _grad_of(p, self.step_index)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= lr * v
        self.step_index += 1


class AdamW:
    """Adam with decoupled weight decay applied before the moment update."""

    def __init__(self, params, betas=(0.9, 0.999), weight_decay: float = 0.0,
                 eps: float = 1e-8):
        self.params = list(params)
        self.betas = betas
        self.weight_decay = weight_decay
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_index = 0

    def step(self, lr: float) -> None:
        b1, b2 = self.betas
        t = self.step_index + 1
        for p, m, v in zip(self.params, self.m, self.v):
            g = _grad_of(p, self.step_index)
            if self.weight_decay:
                p.data *= 1.0 - lr * self.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / (1.0 - b1 ** t)
            vhat = v / (1.0 - b2 ** t)
            p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)
        self.step_index += 1


def make_optimizer(params, recipe: TrainRecipe):
    if recipe.optimizer == "sgd":
        return SGDMomentum(params, recipe.momentum, recipe.weight_decay)
    if recipe.optimizer == "adamw":
        return AdamW(params, recipe.betas, recipe.weight_decay)
    raise ValueError(f"unknown optimizer {recipe.optimizer!r}")


# ----------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    eval_acc: float


def _evaluate(net: Module, points: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    was_training = net.training
    net.eval()
    try:
        with T.no_grad():
            logits = net(Tensor(points))
            loss = T.softmax_cross_entropy(logits, labels).item()
        pred = np.argmax(logits.data, axis=1)
        return loss, float((pred == labels).mean())
    finally:
        net.train(was_training)


def train(net: Module, dataset: MoonsDataset, recipe: TrainRecipe,
          eval_dataset: MoonsDataset | None = None) -> list[EpochRecord]:
    """Seeded full training run; returns one record per epoch."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if eval_dataset is None:
        eval_dataset = heldout_moons(dataset)
    n = len(dataset)
    steps_per_epoch = math.ceil(n / recipe.batch_size)
    total_steps = recipe.epochs * steps_per_epoch
    warmup_steps = recipe.warmup_epochs * steps_per_epoch
    opt = make_optimizer(net.parameters(), recipe)
    history: list[EpochRecord] = []
    step = 0
    net.train()
    for epoch in range(recipe.epochs):
        epoch_lr = cosine_lr(step, total_steps, recipe.base_lr, recipe.min_lr, warmup_steps)
        order = make_rng(recipe.seed, epoch).permutation(n)
        for start in range(0, n, recipe.batch_size):
            batch = order[start : start + recipe.batch_size]
            lr = cosine_lr(step, total_steps, recipe.base_lr, recipe.min_lr, warmup_steps)
            logits = net(Tensor(dataset.points[batch]))
            loss = T.softmax_cross_entropy(logits, dataset.labels[batch])
            if not np.isfinite(loss.item()):
                raise DivergenceError("non-finite loss", step)
            net.zero_grad()
            loss.backward()
            opt.step(lr)
            step += 1
        train_loss, train_acc = _evaluate(net, dataset.points, dataset.labels)
        _, eval_acc = _evaluate(net, eval_dataset.points, eval_dataset.labels)
        history.append(EpochRecord(epoch, epoch_lr, train_loss, train_acc, eval_acc))
    net.eval()
    return history


def set_block_fusion(net: DemoNet2D, modes) -> DemoNet2D:
    """Per-block fusion override (for the progressive star/sum sweeps)."""
    modes = list(modes)
    if len(modes) != len(net.blocks):
        raise ValueError("need one fusion mode per block")
    for block, mode in zip(net.blocks, modes):
        block.cfg = replace(block.cfg, fusion=mode)
    return net


# ---------------------------------------------------------------- ablations


@dataclass
class AblationRow:
    placement: ActPlacement
    final_train_acc: float
    final_eval_acc: float
    final_train_loss: float


def ablate_activations(build_net, placements, dataset: MoonsDataset,
                       recipe: TrainRecipe) -> list[AblationRow]:
    """One seeded run per activation placement; build_net(placement) -> net."""
    if not placements:
        raise ValueError("placements must be nonempty")
    rows = []
    for placement in placements:
        net = build_net(placement)
        history = train(net, dataset, recipe)
        last = history[-1]
        rows.append(AblationRow(placement, last.train_acc, last.eval_acc, last.train_loss))
    return rows


# ----------------------------------------------------------- boundary grids


@dataclass
class GridSpec:
    x_min: float = -1.5
    x_max: float = 2.5
    y_min: float = -1.5
    y_max: float = 2.0
    resolution: int = 200

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")


@dataclass
class BoundaryGrid:
    spec: GridSpec
    xs: np.ndarray
    ys: np.ndarray
    classes: np.ndarray  # (R, R) int8, [iy, ix]
    margins: np.ndarray  # (R, R) float64

    def agreement(self, other: "BoundaryGrid") -> float:
        if self.classes.shape != other.classes.shape:
            raise ValueError("grids have different resolutions")
        return float((self.classes == other.classes).mean())

    def boundary_cell_count(self) -> int:
        c = self.classes
        changes = (c[1:, :] != c[:-1, :]).sum() + (c[:, 1:] != c[:, :-1]).sum()
        return int(changes)


def net_decision_function(net: Module):
    """Binary margin logit[1] - logit[0]; ties resolve to class 0."""

    def score(points: np.ndarray) -> np.ndarray:
        was_training = net.training
        net.eval()
        try:
            with T.no_grad():
                logits = net(Tensor(points))
            return logits.data[:, 1] - logits.data[:, 0]
        finally:
            net.train(was_training)

    return score


def boundary_eval(score_fn, spec: GridSpec = GridSpec(),
                  chunk: int = 20000) -> BoundaryGrid:
    """Evaluate a decision function on an R x R lattice over the spec box."""
    r = spec.resolution
    xs = np.linspace(spec.x_min, spec.x_max, r)
    ys = np.linspace(spec.y_min, spec.y_max, r)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    scores = np.concatenate(
        [np.asarray(score_fn(pts[i : i + chunk])) for i in range(0, pts.shape[0], chunk)]
    )
    margins = scores.reshape(r, r)
    classes = (margins > 0).astype(np.int8)
    return BoundaryGrid(spec, xs, ys, classes, margins)


# --------------------------------------------------------------- the suite

# Degree picked by fit quality on held-out moons; low odd degrees underfit
# the interleaved arms and the boundary comparison degenerates.
POLY_BASELINE = dict(kernel="poly", lam=1e-3, gamma=1.0, c=1.0, degree=7)
RBF_BASELINE = dict(kernel="rbf", lam=1e-3, sigma=0.5)

SUITE_MODELS = ("star", "sum", "poly", "rbf")


@dataclass
class SeedResult:
    seed: int
    grids: dict[str, BoundaryGrid]
    histories: dict[str, list[EpochRecord]]
    agreement: np.ndarray  # (4, 4) over SUITE_MODELS order


@dataclass
class SuiteResult:
    seeds: list[int]
    results: list[SeedResult] = field(default_factory=list)

    def agreement_ordering_votes(self) -> int:
        """Seeds where agreement(star, poly) > agreement(star, rbf)."""
        i_star = SUITE_MODELS.index("star")
        i_poly = SUITE_MODELS.index("poly")
        i_rbf = SUITE_MODELS.index("rbf")
        return sum(
            1
            for res in self.results
            if res.agreement[i_star, i_poly] > res.agreement[i_star, i_rbf]
        )


def run_seed(seed: int, n: int = 1000, noise_std: float = 0.2,
             recipe: TrainRecipe = MOONS_RECIPE, spec: GridSpec = GridSpec()) -> SeedResult:
    data = make_moons(n, noise_std, seed)
    held = heldout_moons(data)
    grids: dict[str, BoundaryGrid] = {}
    histories: dict[str, list[EpochRecord]] = {}
    for name, fusion in (("star", FusionMode.STAR), ("sum", FusionMode.SUM)):
        net = build_demo_net_2d(fusion=fusion, seed=seed)
        histories[name] = train(net, data, replace(recipe, seed=seed), held)
        grids[name] = boundary_eval(net_decision_function(net), spec)
    signed = 2.0 * data.labels - 1.0
    for name, params in (("poly", POLY_BASELINE), ("rbf", RBF_BASELINE)):
        clf = KernelRidgeClassifier(**params).fit(data.points, signed)
        grids[name] = boundary_eval(clf.decision_function, spec)
    k = len(SUITE_MODELS)
    agreement = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            a = grids[SUITE_MODELS[i]].agreement(grids[SUITE_MODELS[j]])
            agreement[i, j] = agreement[j, i] = a
    return SeedResult(seed, grids, histories, agreement)


def run_boundary_suite(seeds, n: int = 1000, noise_std: float = 0.2,
                       recipe: TrainRecipe = MOONS_RECIPE,
                       spec: GridSpec = GridSpec(),
                       max_workers: int | None = None) -> SuiteResult:
    """Train star/sum nets and fit both kernel baselines for every seed.

    Jobs are independent (disjoint nets and data) and may run on a small
    thread pool; STARKERNEL_THREADS is applied by the CLI layer.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    suite = SuiteResult(seeds=seeds)
    if max_workers is None or max_workers <= 1 or len(seeds) == 1:
        suite.results = [run_seed(s, n, noise_std, recipe, spec) for s in seeds]
        return suite
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        suite.results = list(
            pool.map(lambda s: run_seed(s, n, noise_std, recipe, spec), seeds)
        )
    return suite


def run_mixed_sweep(seed: int, n: int = 1000, noise_std: float = 0.2,
                    recipe: TrainRecipe = MOONS_RECIPE,
                    depth: int = 4) -> list[tuple[int, list[EpochRecord]]]:
    """Star in the first k blocks, sum in the rest, k = 0..depth."""
    data = make_moons(n, noise_std, seed)
    held = heldout_moons(data)
    out = []
    for k in range(depth + 1):
        net = build_demo_net_2d(depth=depth, seed=seed)
        set_block_fusion(net, [FusionMode.STAR] * k + [FusionMode.SUM] * (depth - k))
        out.append((k, train(net, data, replace(recipe, seed=seed), held)))
    return out
