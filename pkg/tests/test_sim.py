import random

import pytest

from conftest import chain, diamond, make_graph, random_dag
from imcmap.cost import build_cost_table
from imcmap.errors import ConfigError, InfeasibleMappingError, NonConvergenceError
from imcmap.graph import Op, PuPool
from imcmap.models import builtin_model
from imcmap.scheduler import ALGORITHMS, Mapping, schedule
from imcmap.sim import (
    SimConfig,
    _cycle_mean,
    bottleneck_bound,
    latency_lower_bound,
    simulate,
    trace_csv,
    write_trace,
)

LOOSE = SimConfig(require_periodic=False)


def _random_case(rng, max_nodes=12):
    g = random_dag(rng, rng.randint(1, max_nodes), int_times=True)
    c = build_cost_table(g)
    pool = PuPool(rng.randint(1, 3), rng.randint(1, 3))
    m = schedule(rng.choice(ALGORITHMS), g, pool, c, rng.randint(0, 999))
    return g, c, pool, m


def test_chain_on_one_pu():
    g = chain([2, 3, 5])
    c = build_cost_table(g)
    r = simulate(g, PuPool(1, 0), c, Mapping({1: 0, 2: 0, 3: 0}, "RR"))
    assert (r.latency, r.period) == (10, 10)
    assert r.per_pu[0].utilization == 1.0
    assert latency_lower_bound(g, c) == 10


def test_diamond_dedicated_pus():
    g = diamond((1, 2, 5, 1))
    c = build_cost_table(g)
    r = simulate(g, PuPool(4, 0), c, Mapping({1: 0, 2: 1, 3: 2, 4: 3}, "RR"))
    assert r.latency == 7 and r.period == 5
    assert r.per_pu[2].utilization == 1.0
    assert r.per_pu[0].utilization == pytest.approx(0.2, abs=1e-12)
    assert r.rate * r.period == pytest.approx(1.0, rel=1e-15)
    assert latency_lower_bound(g, c) == 7


def test_bottleneck_bound_examples():
    g = make_graph([Op.CONV] * 5, [], [5, 4, 3, 2, 1])
    c = build_cost_table(g)
    assert bottleneck_bound(c, Mapping({1: 0, 2: 1, 3: 1, 4: 0, 5: 0}, "LBLP")) == 8
    assert bottleneck_bound(c, Mapping({i: i - 1 for i in range(1, 6)}, "LBLP")) == 5
    # all-conv graph on a mixed pool: idle DPUs contribute nothing
    r = simulate(g, PuPool(2, 2), c, Mapping({1: 0, 2: 1, 3: 1, 4: 0, 5: 0}, "LBLP"))
    assert r.per_pu[2].busy_per_frame == 0 and r.per_pu[3].utilization == 0
    assert r.period == 8


def test_latency_bound_with_comm_cost():
    g = chain([2, 3, 5])
    c = build_cost_table(g)
    assert latency_lower_bound(g, c, comm_cost=0.5) == 11
    r = simulate(g, PuPool(3, 0), c, Mapping({1: 0, 2: 1, 3: 2}, "RR"), SimConfig(comm_cost=0.5))
    assert r.latency == 11


@pytest.mark.parametrize("algo", ["LBLP", "WB", "RR"])
def test_resnet8_period_is_bottleneck(algo):
    g = builtin_model("resnet8")
    c = build_cost_table(g)
    misses = []
    for n_imc in range(1, 11):
        for n_dpu in range(1, 5):
            pool = PuPool(n_imc, n_dpu)
            m = schedule(algo, g, pool, c)
            r = simulate(g, pool, c, m, LOOSE)
            b = bottleneck_bound(c, m)
            if abs(r.period - b) > 1e-9 * b:
                misses.append((n_imc, n_dpu, r.period / b))
    assert not misses, f"period != bottleneck at (imc, dpu, ratio) {misses}"


def test_trace_invariants():
    rng = random.Random(5)
    for _ in range(60):
        g, c, pool, m = _random_case(rng)
        comm = rng.choice([0.0, 0.5, 2.0])
        cfg = SimConfig(frames=12, warmup_frames=3, comm_cost=comm, require_periodic=False)
        r = simulate(g, pool, c, m, cfg, keep_trace=True)
        tasks = r.trace
        frames = max(t.frame for t in tasks) + 1  # 12, or more after horizon extensions
        assert frames in [12 * 2**i for i in range(cfg.max_extensions + 1)]
        assert sorted((t.node, t.frame) for t in tasks) == [(u, f) for u in g.ids for f in range(frames)]
        end = {(t.node, t.frame): t.end for t in tasks}
        for t in tasks:
            assert t.end == pytest.approx(t.start + c.time(t.node))
            assert t.pu == m.assign[t.node]
            for p in g.preds[t.node]:
                assert t.start >= end[(p, t.frame)] + comm - 1e-9
        by_pu = {}
        for t in tasks:
            by_pu.setdefault(t.pu, []).append((t.start, t.end))
        for spans in by_pu.values():
            spans.sort()
            assert all(a[1] <= b[0] + 1e-9 for a, b in zip(spans, spans[1:]))


def test_latency_floor_random():
    rng = random.Random(11)
    for _ in range(100):
        g, c, pool, m = _random_case(rng)
        r = simulate(g, pool, c, m, LOOSE)
        assert r.latency >= latency_lower_bound(g, c) - 1e-9
        dedicated = Mapping({u: i for i, u in enumerate(g.ids)}, "RR")
        n_imc = sum(1 for n in g.nodes if n.op.is_mac)
        order = [n.id for n in g.nodes if n.op.is_mac] + [n.id for n in g.nodes if not n.op.is_mac]
        dedicated = Mapping({u: i for i, u in enumerate(order)}, "RR")
        pool = PuPool(n_imc, len(order) - n_imc)
        r = simulate(g, pool, c, dedicated, LOOSE)
        assert r.latency == pytest.approx(latency_lower_bound(g, c), rel=1e-12)


def _anomaly_case():
    """12 nodes on 4 PUs where slowing node 4 lets source 11 start earlier on PU 2."""
    edges = [(1, 6), (2, 7), (2, 10), (3, 4), (3, 8), (4, 8), (4, 12), (5, 6), (5, 7), (6, 7), (6, 10),
             (6, 12), (7, 9), (7, 10), (7, 12), (8, 10), (8, 12), (11, 12)]
    times = [9, 9, 3, 3, 3, 4, 1, 7, 9, 9, 5, 4]
    g = make_graph([Op.CONV] * 12, edges, times)
    m = Mapping({1: 2, 2: 0, 3: 2, 4: 0, 5: 2, 6: 3, 7: 1, 8: 2, 9: 2, 10: 3, 11: 2, 12: 1}, "RD")
    return g, build_cost_table(g), PuPool(4, 0), m, 4


def test_monotone_in_exec_time():
    """Raising one node's time never lowers latency or period."""
    rng = random.Random(3)
    cases = [_anomaly_case()]
    for _ in range(300):
        g, c, pool, m = _random_case(rng)
        cases.append((g, c, pool, m, rng.choice(g.ids)))
    violations = []
    for i, (g, c, pool, m, u) in enumerate(cases):
        r = simulate(g, pool, c, m, LOOSE)
        c2 = c.with_time(u, c.time(u) + (4 if i == 0 else rng.randint(1, 5)))
        r2 = simulate(g, pool, c2, m, LOOSE)
        if r2.latency < r.latency - 1e-9:
            violations.append((i, "latency", r.latency, r2.latency))
        if r.periodic and r2.periodic and r2.period < r.period * (1 - 1e-9):
            violations.append((i, "period", r.period, r2.period))
    assert not violations, violations


def test_deterministic_trace_bytes(tmp_path):
    g = builtin_model("resnet18")
    c = build_cost_table(g)
    pool = PuPool(6, 3)
    texts = []
    for i in range(2):
        m = schedule("RD", g, pool, c, 9)
        r = simulate(g, pool, c, m, SimConfig(frames=20, warmup_frames=4, require_periodic=False), keep_trace=True)
        write_trace(r.trace, tmp_path / f"t{i}.csv")
        texts.append((tmp_path / f"t{i}.csv").read_bytes())
    assert texts[0] == texts[1]


def test_trace_csv_format():
    g = diamond((1, 2, 5, 1))
    c = build_cost_table(g)
    r = simulate(g, PuPool(2, 0), c, Mapping({1: 0, 2: 0, 3: 1, 4: 0}, "RR"),
                 SimConfig(frames=3, warmup_frames=1, require_periodic=False), keep_trace=True)
    text = trace_csv(r.trace)
    lines = text.split("\n")
    assert lines[0] == "node_id,frame,pu_id,start,end"
    assert lines[1] == "1,0,0,0.000000,1.000000"
    assert "\r" not in text and text.endswith("\n")
    rows = [tuple(map(float, l.split(","))) for l in lines[1:-1]]
    keys = [(r[3], r[2], r[0]) for r in rows]
    assert keys == sorted(keys)


def test_idle_pus_reported():
    g = chain([1, 1])
    r = simulate(g, PuPool(3, 2), build_cost_table(g), Mapping({1: 0, 2: 0}, "RR"))
    assert sorted(r.per_pu) == [0, 1, 2, 3, 4]
    assert r.per_pu[4].utilization == 0 and r.per_pu[4].weights_area == 0
    assert r.bottleneck_pu == 0


def test_infeasible_mapping_rejected():
    g = make_graph([Op.CONV, Op.ADD], [(1, 2)], [1, 1])
    with pytest.raises(InfeasibleMappingError, match="needs an IMC"):
        simulate(g, PuPool(1, 1), build_cost_table(g), Mapping({1: 1, 2: 1}, "RR"))
    with pytest.raises(InfeasibleMappingError, match="not assigned"):
        simulate(g, PuPool(1, 1), build_cost_table(g), Mapping({1: 0}, "RR"))


def test_nonconvergence_raised():
    # a mapping whose completion gaps never repeat inside the default horizon
    g = builtin_model("resnet8")
    c = build_cost_table(g)
    pool = PuPool(3, 1)
    m = schedule("LBLP", g, pool, c)
    with pytest.raises(NonConvergenceError, match="1e-06"):
        simulate(g, pool, c, m)
    r = simulate(g, pool, c, m, LOOSE)
    assert not r.periodic
    assert r.period == pytest.approx(bottleneck_bound(c, m), rel=0.01)


@pytest.mark.parametrize("kw", [{"frames": 4, "warmup_frames": 4}, {"warmup_frames": -1}, {"comm_cost": -1}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_cycle_mean():
    assert _cycle_mean([0, 2, 4, 6, 8, 10]) == 2
    # alternating gaps 1, 3 after a transient
    c = [0, 10, 11, 14, 15, 18, 19, 22, 23, 26]
    assert _cycle_mean(c) == 2
    assert _cycle_mean([0, 1, 3, 7, 15, 31, 63, 127, 255]) is None
