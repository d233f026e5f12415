import random

import pytest

from imcmap.graph import ModelGraph, NodeSpec, Op

MAC_OPS = (Op.CONV, Op.MVM)
DIGITAL_OPS = (Op.ADD, Op.MAXPOOL, Op.AVGPOOL, Op.CONCAT, Op.SPLIT, Op.RESHAPE, Op.ACTIVATION)


def make_graph(ops, edges, times=None, weights=None, name="t"):
    """Graph with ids 1..len(ops); `times` pins explicit execution times."""
    nodes = []
    for i, op in enumerate(ops, start=1):
        t = times[i - 1] if times else None
        w = weights[i - 1] if weights and op.is_mac else 0
        nodes.append(NodeSpec(i, f"n{i}", op, macs=0, out_elems=1, weight_count=w, explicit_time=t))
    return ModelGraph(tuple(nodes), tuple(edges), name)


def chain(times, op=Op.CONV):
    n = len(times)
    return make_graph([op] * n, [(i, i + 1) for i in range(1, n)], times)


def diamond(times=(1, 2, 5, 1), op=Op.CONV):
    return make_graph([op] * 4, [(1, 2), (1, 3), (2, 4), (3, 4)], list(times))


def random_dag(rng: random.Random, n: int, p: float = 0.3, mixed: bool = True, int_times: bool = False):
    ops = [rng.choice(MAC_OPS + (DIGITAL_OPS if mixed else ())) for _ in range(n)]
    edges = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < p]
    if int_times:
        times = [rng.randint(1, 9) for _ in range(n)]
    else:
        times = [round(rng.uniform(0.5, 10.0), 3) for _ in range(n)]
    weights = [rng.randint(1, 1000) for _ in range(n)]
    return make_graph(ops, edges, times, weights, name=f"rand{n}")


def all_paths(g):
    """Every source-to-sink path, by DFS."""
    out = []

    def walk(u, path):
        if not g.succs[u]:
            out.append(path)
            return
        for v in g.succs[u]:
            walk(v, path + [v])

    for s in g.sources:
        walk(s, [s])
    return out


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
