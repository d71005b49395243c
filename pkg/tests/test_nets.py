import json

import numpy as np
import pytest

from starkernel import tensor as T
from starkernel.blocks import FusionMode
from starkernel.nets import (
    DemoNet,
    DemoNet2D,
    STARNET_VARIANTS,
    StarNet,
    build_demo_net,
    build_demo_net_2d,
    build_star_net,
    count_costs,
    fusion_activation_shapes,
    replace_fusion_by_stage,
)
from starkernel.rngs import make_rng
from starkernel.tensor import Tensor

# Published (rounded) parameter / MAC rows the builders must reproduce:
# params within the rounding interval +-0.05M, MACs within +-3%.
PUBLISHED_ROWS = {
    "s1": (2.9e6, 425e6),
    "s2": (3.7e6, 547e6),
    "s3": (5.8e6, 757e6),
    "s4": (7.5e6, 1075e6),
    "n050": (0.54e6, 92.8e6),
    "n100": (1.04e6, 187.1e6),
    "n150": (1.56e6, 229.0e6),
}


def _param_count(net):
    return sum(p.data.size for p in net.parameters())


@pytest.mark.parametrize("variant", sorted(PUBLISHED_ROWS))
def test_starnet_variant_matches_published_row(variant):
    net = build_star_net(variant)
    report = count_costs(net, (1, 3, 224, 224))
    params, macs = PUBLISHED_ROWS[variant]
    assert abs(report.total_params - params) <= 0.05e6
    assert abs(report.total_macs - macs) <= 0.03 * macs
    # traced parameter total equals the module tree's own count
    assert report.total_params == _param_count(net)


def test_demo_net_192x12_regression_constants():
    report = count_costs(build_demo_net(192, 12), (1, 3, 224, 224))
    assert report.total_params == 4458280
    assert report.total_macs == 831558144


@pytest.mark.parametrize("width,approx_params", [(96, 1.26e6), (288, 9.68e6)])
def test_demo_net_width_sweep_param_totals(width, approx_params):
    net = build_demo_net(width, 12)
    assert abs(_param_count(net) - approx_params) <= 0.05e6


def test_starnet_stage_dims_double():
    net = build_star_net("n050")
    assert net.stage_dims == (16, 32, 64, 128)
    assert build_star_net("s2").stage_dims == (32, 64, 128, 256)


def test_starnet_forward_shape():
    net = build_star_net("n050", num_classes=7).eval()
    x = Tensor(make_rng(50).standard_normal((2, 3, 64, 64)))
    assert net(x).shape == (2, 7)


def test_demo_net_forward_shape():
    net = DemoNet(width=16, depth=1, num_classes=5).eval()
    x = Tensor(make_rng(51).standard_normal((2, 3, 32, 32)))
    assert net(x).shape == (2, 5)


def test_demo_net_2d_forward_backward_smoke():
    net = build_demo_net_2d(dim=16, depth=2)
    x = Tensor(make_rng(52).standard_normal((8, 2)))
    loss = T.softmax_cross_entropy(net(x), np.array([0, 1] * 4))
    loss.backward()
    grads = [p.grad for p in net.parameters()]
    assert all(g is not None for g in grads)
    assert any(np.abs(g).max() > 0 for g in grads)


def test_demo_net_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        DemoNet(width=0, depth=1)
    with pytest.raises(ValueError):
        StarNet(embed=16, depths=(1, 1, 1))


def test_build_star_net_rejects_unknown_variant():
    with pytest.raises(ValueError):
        build_star_net("s5")


def test_param_parity_across_fusion_modes():
    star = build_demo_net_2d(dim=16, depth=2, fusion=FusionMode.STAR)
    summ = build_demo_net_2d(dim=16, depth=2, fusion=FusionMode.SUM)
    assert _param_count(star) == _param_count(summ)


def test_replace_fusion_by_stage():
    net = build_star_net("n050").eval()
    x = Tensor(make_rng(53).standard_normal((1, 3, 32, 32)))
    y_star = net(x).data
    replace_fusion_by_stage(net, [FusionMode.SUM] * 4)
    y_sum = net(x).data
    assert np.abs(y_star - y_sum).max() > 0.0
    with pytest.raises(ValueError):
        replace_fusion_by_stage(net, [FusionMode.SUM] * 3)
    with pytest.raises(TypeError):
        replace_fusion_by_stage(build_demo_net_2d(dim=8, depth=1), [FusionMode.SUM] * 4)


def test_fusion_activation_shapes_s4():
    net = build_star_net("s4")
    shapes = fusion_activation_shapes(net, 224)
    assert len(shapes) == sum(STARNET_VARIANTS["s4"]["depths"])
    assert set(shapes) == {
        (1, 128, 56, 56),
        (1, 256, 28, 28),
        (1, 512, 14, 14),
        (1, 1024, 7, 7),
    }


def test_cost_report_formats_carry_mac_note():
    report = count_costs(build_demo_net_2d(dim=8, depth=1), (1, 2))
    table = report.to_table()
    assert "multiply-accumulates" in table
    assert "total" in table
    payload = json.loads(report.to_json())
    assert "multiply-accumulates" in payload["note"]
    assert payload["total_params"] == report.total_params
    assert payload["total_macs"] == sum(l["macs"] for l in payload["layers"])


def test_count_costs_restores_training_mode_and_leaves_no_grads():
    net = build_demo_net_2d(dim=8, depth=1)
    net.train()
    count_costs(net, (1, 2))
    assert net.training
    assert all(p.grad is None for p in net.parameters())
