import math

import pytest

from imcmap.cost import CostParams, build_cost_table, classify, node_time
from imcmap.errors import ConfigError, GraphError
from imcmap.graph import Act, ModelGraph, NodeSpec, Op, PuType
from imcmap.models import builtin_model


def _node(op, **kw):
    return NodeSpec(1, "n", op, **kw)


@pytest.mark.parametrize(
    "node, want",
    [
        (_node(Op.CONV, fused_activation=Act.RELU), PuType.IMC),
        (_node(Op.MVM), PuType.IMC),
        (_node(Op.ADD), PuType.DPU),
        (_node(Op.RESHAPE), PuType.DPU),
        (_node(Op.ACTIVATION), PuType.DPU),
        (_node(Op.MAXPOOL), PuType.DPU),
    ],
)
def test_classify(node, want):
    assert classify(node) is want


def test_time_examples():
    p = CostParams()
    assert node_time(_node(Op.CONV, macs=20000), p) == 3.0
    assert node_time(_node(Op.ADD, out_elems=500), p) == 1.5
    assert node_time(_node(Op.CONV, macs=10**9, explicit_time=7.25), p) == 7.25


def test_table_covers_every_node():
    g = builtin_model("resnet18")
    t = build_cost_table(g)
    assert list(t) == g.ids
    assert all(t.time(u) > 0 for u in t)
    assert all(t.weight(n.id) == n.weight_count for n in g.nodes)
    assert all(t.pu_type(n.id) is classify(n) for n in g.nodes)


def test_missing_entry():
    t = build_cost_table(builtin_model("resnet8"))
    with pytest.raises(GraphError, match="99"):
        t.time(99)


def test_monotone_and_scaling():
    g = builtin_model("resnet8")
    base = build_cost_table(g)
    fast = build_cost_table(g, CostParams(imc_mac_rate=2e4))
    for n in g.nodes:
        if n.op.is_mac:
            assert fast.time(n.id) - 1.0 == pytest.approx((base.time(n.id) - 1.0) / 2, rel=1e-12)
        else:
            assert fast.time(n.id) == base.time(n.id)
    p = CostParams()
    assert node_time(_node(Op.CONV, macs=100), p) <= node_time(_node(Op.CONV, macs=101), p)
    assert node_time(_node(Op.ADD, out_elems=100), p) <= node_time(_node(Op.ADD, out_elems=101), p)


@pytest.mark.parametrize(
    "kw", [{"imc_mac_rate": 0}, {"dpu_elem_rate": -1}, {"imc_overhead": -0.1}, {"dpu_mac_penalty": 0.5}]
)
def test_param_validation(kw):
    with pytest.raises(ConfigError):
        CostParams(**kw)


def test_zero_overhead_zero_macs_rejected():
    g = ModelGraph((NodeSpec(1, "c", Op.CONV, macs=0),), ())
    with pytest.raises(GraphError, match="non-positive"):
        build_cost_table(g, CostParams(imc_overhead=0))


def test_precedence():
    p = CostParams.resolve({"imc_mac_rate": 5e3, "dpu_overhead": 2}, {"imc_mac_rate": 8e3, "dpu_overhead": None})
    assert p.imc_mac_rate == 8e3  # CLI beats file
    assert p.dpu_overhead == 2  # file beats default
    assert p.dpu_elem_rate == 1e3  # default
    with pytest.raises(ConfigError, match="bogus"):
        CostParams.resolve({"bogus": 1})


def test_dpu_penalty_alt_time():
    g = builtin_model("resnet8")
    hard = build_cost_table(g)
    soft = build_cost_table(g, CostParams(dpu_mac_penalty=4))
    assert math.isinf(CostParams().dpu_mac_penalty)
    assert hard[1].alt_time is None
    assert soft.time_on(1, PuType.DPU) == 4 * soft.time(1)
    with pytest.raises(GraphError):
        hard.time_on(1, PuType.DPU)
