"""Building blocks fusing two feature branches by product or sum.

Two families:

* demo blocks (channel-last): LayerNorm -> optional depthwise 7x7 conv ->
  width-expanding linear split into two branches -> fuse -> projection ->
  residual. The 2-D variant drops the conv and uses ReLU.
* efficient blocks (channel-first): depthwise conv + BN -> two parallel
  pointwise expansions -> fuse (default: activate one branch) -> pointwise
  projection -> trailing depthwise conv + BN (foldable at eval) ->
  residual with optional drop path.

The fusion operator and the activation placement are switchable everywhere;
that is the whole point of the ablations built on top.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import BatchNorm, Conv2d, DropPath, LayerNorm, Linear, Module
from .tensor import Parameter, Tensor


class FusionMode(enum.Enum):
    STAR = "star"
    SUM = "sum"


class ActPlacement(enum.Enum):
    NONE = "none"
    BOTH = "both"
    POST = "post"
    ONE = "one"


@dataclass
class BlockConfig:
    dim: int
    fusion: FusionMode = FusionMode.STAR
    placement: ActPlacement = ActPlacement.ONE
    activation: str = "gelu"
    use_conv: bool = True
    expansion: float = 3.0

    def __post_init__(self):
        if self.activation not in T.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        hidden = self.expansion * self.dim
        if hidden <= 0 or hidden != int(hidden):
            raise ValueError("expansion * dim must be a positive integer")

    @property
    def hidden(self) -> int:
        return int(self.expansion * self.dim)


def fuse_branches(x1: Tensor, x2: Tensor, fusion: FusionMode,
                  placement: ActPlacement, activation: str) -> Tensor:
    combine = T.mul if fusion is FusionMode.STAR else T.add
    act = T.ACTIVATIONS[activation]
    if placement is ActPlacement.NONE:
        return combine(x1, x2)
    if placement is ActPlacement.BOTH:
        return combine(act(x1), act(x2))
    if placement is ActPlacement.POST:
        return act(combine(x1, x2))
    return combine(act(x1), x2)


class DemoBlock(Module):
    """Channel-last block over (N, H, W, dim)."""

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.norm = LayerNorm(cfg.dim)
        if cfg.use_conv:
            self.dwconv = Conv2d(cfg.dim, cfg.dim, 7, rng, padding=3, groups=cfg.dim)
        self.f = Linear(cfg.dim, 2 * cfg.hidden, rng)
        self.g = Linear(cfg.hidden, cfg.dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        y = self.norm(x)
        if cfg.use_conv:
            y = T.permute(self.dwconv(T.permute(y, (0, 3, 1, 2))), (0, 2, 3, 1))
        y = self.f(y)
        x1 = T.narrow(y, -1, 0, cfg.hidden)
        x2 = T.narrow(y, -1, cfg.hidden, cfg.hidden)
        y = self.g(fuse_branches(x1, x2, cfg.fusion, cfg.placement, cfg.activation))
        return T.add(x, y)


class DemoBlock2D(Module):
    """Point-cloud variant over (N, dim): no conv, ReLU by default."""

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.norm = LayerNorm(cfg.dim)
        self.f = Linear(cfg.dim, 2 * cfg.hidden, rng, init="he")
        self.g = Linear(cfg.hidden, cfg.dim, rng, init="he")

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        y = self.f(self.norm(x))
        x1 = T.narrow(y, -1, 0, cfg.hidden)
        x2 = T.narrow(y, -1, cfg.hidden, cfg.hidden)
        y = self.g(fuse_branches(x1, x2, cfg.fusion, cfg.placement, cfg.activation))
        return T.add(x, y)


class ConvBN(Module):
    """Convolution followed by (optional) batch norm, foldable at eval."""

    def __init__(self, cin, cout, kernel_size, rng, stride=1, padding=0, groups=1,
                 with_bn=True, init="kaiming"):
        super().__init__()
        self.conv = Conv2d(cin, cout, kernel_size, rng, stride=stride,
                           padding=padding, groups=groups, bias=True, init=init)
        self.bn = BatchNorm(cout) if with_bn else None

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        return self.bn(y) if self.bn is not None else y

    def fold(self) -> Conv2d:
        """Absorb eval-mode BN into the convolution's weights and bias."""
        if self.bn is None:
            raise ValueError("nothing to fold")
        bn = self.bn
        scale = bn.gamma.data / np.sqrt(bn.running_var + bn.eps)
        folded = Conv2d.__new__(Conv2d)
        Module.__init__(folded)
        folded.stride = self.conv.stride
        folded.padding = self.conv.padding
        folded.groups = self.conv.groups
        folded.weight = Parameter(self.conv.weight.data * scale[:, None, None, None])
        folded.bias = Parameter(
            (self.conv.bias.data - bn.running_mean) * scale + bn.beta.data
        )
        return folded


class StarBlock(Module):
    """Channel-first efficient block over (N, dim, H, W)."""

    def __init__(
        self,
        dim: int,
        rng: np.random.Generator,
        expansion: int = 4,
        fusion: FusionMode = FusionMode.STAR,
        placement: ActPlacement = ActPlacement.ONE,
        activation: str = "relu6",
        drop_path_rate: float = 0.0,
        drop_rng: np.random.Generator | None = None,
    ):
        super().__init__()
        hidden = expansion * dim
        self.fusion, self.placement, self.activation = fusion, placement, activation
        self.dwconv = ConvBN(dim, dim, 7, rng, padding=3, groups=dim, with_bn=True)
        self.f1 = Conv2d(dim, hidden, 1, rng, init="trunc")
        self.f2 = Conv2d(dim, hidden, 1, rng, init="trunc")
        self.g = Conv2d(hidden, dim, 1, rng, init="trunc")
        self.dwconv2 = ConvBN(dim, dim, 7, rng, padding=3, groups=dim, with_bn=True)
        self.drop_path = DropPath(drop_path_rate, drop_rng)

    def set_fusion(self, fusion: FusionMode) -> None:
        self.fusion = fusion

    def forward(self, x: Tensor) -> Tensor:
        y = self.dwconv(x)
        z = fuse_branches(self.f1(y), self.f2(y), self.fusion, self.placement, self.activation)
        z = self.dwconv2(self.g(z))
        return T.add(x, self.drop_path(z))


def matched_hidden_width(dim: int, expansion: int = 4) -> int:
    """Hidden width giving the one-branch variant the same pointwise MACs
    as the two-branch block: 2*dim*hidden = 3*expansion*dim^2."""
    return (3 * expansion * dim) // 2


class OneBranchBlock(Module):
    """Product of a transformed branch with the raw input (channel-last).

    expand: dim -> hidden, project: hidden -> dim; output is
    project(act(expand(x))) * x. Only one branch is transformed.
    """

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator,
                 activation: str | None = "relu6"):
        super().__init__()
        self.activation = activation
        self.expand = Linear(dim, hidden, rng)
        self.project = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.expand(x)
        if self.activation is not None:
            y = T.ACTIVATIONS[self.activation](y)
        return T.mul(self.project(y), x)


def square_fusion(x: Tensor) -> Tensor:
    """Element-wise self-product x * x (the no-transform special case)."""
    return T.mul(x, x)
