"""Network zoo and exact parameter / multiply-accumulate accounting.

DemoNet is the isotropic patchify-stem network of the width/depth sweeps;
DemoNet2D is its conv-free point-cloud variant; StarNet is the 4-stage
hierarchical efficient network (stem conv3x3/s2 + BN + ReLU6 into 32
channels, per-stage conv3x3/s2 downsampling onto embed * 2^i channels,
head = global average pool -> BN -> linear). These stem/downsample/head
choices reproduce the published parameter and MAC tables for all seven
variants; convolutions carry biases alongside their BN.

Cost reports count one MAC per multiply-accumulate and label the totals
"FLOPs" to match the convention of the efficient-network tables they are
compared against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import costs
from . import tensor as T
from .blocks import ActPlacement, BlockConfig, ConvBN, DemoBlock, DemoBlock2D, FusionMode, StarBlock
from .nn import BatchNorm, Conv2d, LayerNorm, Linear, Module, ModuleList
from .rngs import make_rng
from .tensor import Tensor

MAC_CONVENTION_NOTE = (
    "FLOPs column counts multiply-accumulates (1 MAC = 1 'FLOP'), "
    "the efficient-network literature's convention"
)


class DemoNet(Module):
    """Isotropic: conv 16x16/s16 stem, homogeneous fused blocks, pooled head."""

    def __init__(self, width: int, depth: int, fusion: FusionMode = FusionMode.STAR,
                 placement: ActPlacement = ActPlacement.ONE, activation: str = "gelu",
                 num_classes: int = 1000, seed: int = 0):
        super().__init__()
        if width < 1 or depth < 1:
            raise ValueError("width and depth must be >= 1")
        rng = make_rng(seed)
        self.num_classes = num_classes
        self.stem = Conv2d(3, width, 16, rng, stride=16)
        cfg = BlockConfig(dim=width, fusion=fusion, placement=placement,
                          activation=activation, use_conv=True, expansion=3.0)
        self.blocks = ModuleList(DemoBlock(cfg, rng) for _ in range(depth))
        self.norm = LayerNorm(width)
        self.head = Linear(width, num_classes, rng)
        self.assign_parameter_names()

    def forward(self, x: Tensor) -> Tensor:
        y = T.permute(self.stem(x), (0, 2, 3, 1))
        y = self.blocks(y)
        return self.head(self.norm(T.mean_pool_spatial(y, "NHWC")))


class DemoNet2D(Module):
    """Point-cloud variant: linear stem on 2-D inputs, conv-free blocks, ReLU."""

    def __init__(self, dim: int = 100, depth: int = 4, fusion: FusionMode = FusionMode.STAR,
                 placement: ActPlacement = ActPlacement.ONE, activation: str = "relu",
                 num_classes: int = 2, seed: int = 0):
        super().__init__()
        rng = make_rng(seed)
        self.num_classes = num_classes
        self.stem = Linear(2, dim, rng, init="he")
        cfg = BlockConfig(dim=dim, fusion=fusion, placement=placement,
                          activation=activation, use_conv=False, expansion=3.0)
        self.blocks = ModuleList(DemoBlock2D(cfg, rng) for _ in range(depth))
        self.norm = LayerNorm(dim)
        self.head = Linear(dim, num_classes, rng, init="he")
        self.assign_parameter_names()

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self.norm(self.blocks(self.stem(x))))


class _Stage(Module):
    def __init__(self, cin: int, dim: int, depth: int, rng, expansion: int,
                 drop_path_rate: float, drop_rng):
        super().__init__()
        self.down = ConvBN(cin, dim, 3, rng, stride=2, padding=1, with_bn=True)
        self.blocks = ModuleList(
            StarBlock(dim, rng, expansion=expansion, drop_path_rate=drop_path_rate,
                      drop_rng=drop_rng)
            for _ in range(depth)
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.blocks(self.down(x))


STARNET_VARIANTS = {
    "s1": dict(embed=24, depths=(2, 2, 8, 3), expansion=4, drop_path_rate=0.0),
    "s2": dict(embed=32, depths=(1, 2, 6, 2), expansion=4, drop_path_rate=0.0),
    "s3": dict(embed=32, depths=(2, 2, 8, 4), expansion=4, drop_path_rate=0.0),
    "s4": dict(embed=32, depths=(3, 3, 12, 5), expansion=4, drop_path_rate=0.1),
    "n050": dict(embed=16, depths=(1, 1, 3, 1), expansion=3, drop_path_rate=0.0),
    "n100": dict(embed=20, depths=(1, 2, 4, 1), expansion=4, drop_path_rate=0.0),
    "n150": dict(embed=24, depths=(1, 2, 4, 2), expansion=3, drop_path_rate=0.0),
}

STEM_WIDTH = 32


class StarNet(Module):
    """4-stage hierarchical network, width doubling at every stage."""

    def __init__(self, embed: int, depths, expansion: int = 4,
                 drop_path_rate: float = 0.0, num_classes: int = 1000, seed: int = 0):
        super().__init__()
        depths = tuple(depths)
        if len(depths) != 4:
            raise ValueError("expected a per-stage depth list of length 4")
        rng = make_rng(seed)
        drop_rng = make_rng(seed, 1) if drop_path_rate > 0 else None
        self.embed, self.depths, self.expansion = embed, depths, expansion
        self.num_classes = num_classes
        self.stem = ConvBN(3, STEM_WIDTH, 3, rng, stride=2, padding=1, with_bn=True)
        self.stages = ModuleList()
        cin = STEM_WIDTH
        for i, depth in enumerate(depths):
            dim = embed * 2 ** i
            self.stages.append(_Stage(cin, dim, depth, rng, expansion,
                                      drop_path_rate, drop_rng))
            cin = dim
        self.norm = BatchNorm(cin)
        self.head = Linear(cin, num_classes, rng)
        self.assign_parameter_names()

    @property
    def stage_dims(self) -> tuple[int, ...]:
        return tuple(self.embed * 2 ** i for i in range(4))

    def forward(self, x: Tensor) -> Tensor:
        y = T.relu6(self.stem(x))
        y = self.stages(y)
        return self.head(self.norm(T.mean_pool_spatial(y, "NCHW")))


def build_demo_net(width: int, depth: int, fusion: FusionMode = FusionMode.STAR,
                   num_classes: int = 1000, seed: int = 0, **kwargs) -> DemoNet:
    return DemoNet(width, depth, fusion, num_classes=num_classes, seed=seed, **kwargs)


def build_demo_net_2d(dim: int = 100, depth: int = 4,
                      fusion: FusionMode = FusionMode.STAR, seed: int = 0,
                      **kwargs) -> DemoNet2D:
    return DemoNet2D(dim, depth, fusion, seed=seed, **kwargs)


def build_star_net(variant: str | None = None, num_classes: int = 1000, seed: int = 0,
                   **custom) -> StarNet:
    if variant is not None:
        key = variant.lower()
        if key not in STARNET_VARIANTS:
            raise ValueError(f"unknown variant {variant!r} "
                             f"(have: {', '.join(STARNET_VARIANTS)})")
        cfg = dict(STARNET_VARIANTS[key])
        cfg.update(custom)
    else:
        cfg = custom
    return StarNet(num_classes=num_classes, seed=seed, **cfg)


def replace_fusion_by_stage(net: StarNet, per_stage) -> StarNet:
    """Set each stage's blocks to the given fusion mode, in place."""
    if not isinstance(net, StarNet):
        raise TypeError("stage-wise fusion replacement applies to StarNet only")
    per_stage = list(per_stage)
    if len(per_stage) != len(net.stages):
        raise ValueError("need one fusion mode per stage")
    for stage, fusion in zip(net.stages, per_stage):
        for block in stage.blocks:
            block.set_fusion(fusion)
    return net


def fusion_activation_shapes(net: StarNet, input_hw: int = 224) -> list[tuple[int, ...]]:
    """Activation shapes at every fuse site for batch size 1."""
    shapes = []
    hw = input_hw // 2
    for i, stage in enumerate(net.stages):
        hw //= 2
        dim = net.stage_dims[i] * net.expansion
        shapes.extend([(1, dim, hw, hw)] * len(stage.blocks))
    return shapes


# ------------------------------------------------------------------ costing


@dataclass
class LayerCost:
    name: str
    params: int
    macs: int
    elems: int


@dataclass
class CostReport:
    input_shape: tuple[int, ...]
    layers: list[LayerCost]
    note: str = MAC_CONVENTION_NOTE

    @property
    def total_params(self) -> int:
        return sum(layer.params for layer in self.layers)

    @property
    def total_macs(self) -> int:
        return sum(layer.macs for layer in self.layers)

    def to_json(self) -> str:
        payload = {
            "input_shape": list(self.input_shape),
            "layers": [
                {"name": c.name, "params": c.params, "macs": c.macs, "elems": c.elems}
                for c in self.layers
            ],
            "total_params": self.total_params,
            "total_macs": self.total_macs,
            "note": self.note,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_table(self) -> str:
        rows = [("layer", "params", "FLOPs", "elems")]
        rows += [(c.name, str(c.params), str(c.macs), str(c.elems)) for c in self.layers]
        rows.append(("total", str(self.total_params), str(self.total_macs), ""))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                 for row in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.append(f"# {self.note}")
        return "\n".join(lines)


def count_costs(net: Module, input_shape) -> CostReport:
    """Exact per-layer accounting from a traced eval-mode forward pass.

    Conv and matmul MACs are recorded by the ops themselves; normalization,
    activation, and elementwise element counts are listed but excluded from
    the MAC total. Parameters are attributed to the module that owns them.
    """
    input_shape = tuple(input_shape)
    was_training = net.training
    net.eval()
    try:
        with T.no_grad(), costs.trace() as tr:
            net(Tensor(np.zeros(input_shape)))
    finally:
        net.train(was_training)
    own_params = {
        path: sum(p.data.size for p in mod._params.values())
        for path, mod in net.named_modules()
    }
    order = [path for path, _ in net.named_modules()]
    order += [path for path in tr.records if path not in own_params]
    layers = []
    for path in order:
        params = own_params.get(path, 0)
        rec = tr.records.get(path)
        macs = rec.macs if rec else 0
        elems = rec.elems if rec else 0
        if params or macs or elems:
            layers.append(LayerCost(path or "<root>", params, macs, elems))
    return CostReport(input_shape=input_shape, layers=layers)
