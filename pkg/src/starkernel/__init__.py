"""starkernel: the star operation (elementwise product of two linear
branches), its polynomial-expansion algebra, the demo and efficient
network families built on it, and the desk-scale experiments comparing
star against summation and against kernel classifiers.
"""

__version__ = "0.1.0"

from .algebra import (
    StarExpansion,
    expand_star,
    evaluate_expansion,
    implicit_dims_multi_layer,
    implicit_dims_one_layer,
    verify_star_equivalence,
)
from .blocks import ActPlacement, FusionMode
from .nets import build_demo_net, build_demo_net_2d, build_star_net, count_costs
from .tensor import NonFiniteError, Parameter, ShapeError, Tensor

__all__ = [
    "__version__",
    "ActPlacement",
    "FusionMode",
    "NonFiniteError",
    "Parameter",
    "ShapeError",
    "StarExpansion",
    "Tensor",
    "build_demo_net",
    "build_demo_net_2d",
    "build_star_net",
    "count_costs",
    "evaluate_expansion",
    "expand_star",
    "implicit_dims_multi_layer",
    "implicit_dims_one_layer",
    "verify_star_equivalence",
]
