"""Node-to-PU allocation algorithms: LBLP, WB, RR and RD.

All four keep the hard IMC/DPU partition: a node is only ever placed on a PU
of the type returned by :func:`imcmap.cost.classify`. Node orderings break
ties by ascending node id and PU choices by ascending PU id, which makes
LBLP, WB and RR bit-deterministic and RD deterministic given its seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable

from .cost import CostTable, classify
from .errors import ConfigError, InfeasibleMappingError
from .graph import ModelGraph, PuPool, PuType, concurrent_map, longest_path

ALGORITHMS = ("LBLP", "WB", "RR", "RD")


@dataclass
class Mapping:
    assign: dict[int, int]
    algo: str
    seed: int | None = None

    def on(self, pu: int) -> list[int]:
        return sorted(n for n, p in self.assign.items() if p == pu)

    def to_json(self) -> str:
        doc = {
            "algo": self.algo,
            "seed": self.seed,
            "assign": [[n, self.assign[n]] for n in sorted(self.assign)],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> Mapping:
        doc = json.loads(text)
        return cls({int(n): int(p) for n, p in doc["assign"]}, doc["algo"], doc.get("seed"))


@dataclass
class LoadLedger:
    """Accumulated execution time and weight size per PU."""

    time: dict[int, float] = field(default_factory=dict)
    weight: dict[int, int] = field(default_factory=dict)

    @classmethod
    def for_pool(cls, pool: PuPool) -> LoadLedger:
        ids = [pu for pu, _ in pool.units]
        return cls({pu: 0.0 for pu in ids}, {pu: 0 for pu in ids})

    def add(self, pu: int, time: float, weight: int = 0) -> None:
        self.time[pu] += time
        self.weight[pu] += weight


def min_load_assign(
    node: int,
    candidates: list[int],
    ledger: LoadLedger,
    avoid: Iterable[int] = (),
    metric: str = "time",
) -> int:
    """Pick the least-loaded candidate outside `avoid`.

    If every candidate is avoided, the constraint is dropped and the global
    minimum is returned. Ties go to the lowest PU id.
    """
    if not candidates:
        raise InfeasibleMappingError(f"no processing unit can host node {node}")
    loads = ledger.time if metric == "time" else ledger.weight
    avoid = set(avoid)
    allowed = [c for c in candidates if c not in avoid] or list(candidates)
    return min(allowed, key=lambda pu: (loads[pu], pu))


def _pus_by_type(g: ModelGraph, pool: PuPool, costs: CostTable) -> dict[PuType, list[int]]:
    out = {t: pool.of_type(t) for t in PuType}
    for n in g.nodes:
        t = costs.pu_type(n.id)
        if not out[t]:
            raise InfeasibleMappingError(
                f"graph '{g.name}' needs an {t.value} unit (node {n.id}) but the pool has none"
            )
    return out


def _nodes_of(g: ModelGraph, costs: CostTable, t: PuType) -> list[int]:
    return [n.id for n in g.nodes if costs.pu_type(n.id) is t]


def schedule_lblp(g: ModelGraph, pool: PuPool, costs: CostTable, trace: list | None = None) -> Mapping:
    """Load Balance Longest Path.

    The longest path is placed first, heaviest node first, each node on the
    least-loaded PU of its type. The remaining nodes follow in the same way,
    steering away from PUs that already host a node concurrent with them.

    When `trace` is a list, one ``(node, candidates, avoid, loads_before, pu)``
    record per decision is appended to it.
    """
    pus = _pus_by_type(g, pool, costs)
    lp, _ = longest_path(g, costs)
    on_lp = set(lp)
    concurrent = concurrent_map(g)
    ledger = LoadLedger.for_pool(pool)
    assign: dict[int, int] = {}

    def place(order: list[int], cands: list[int]) -> None:
        for u in order:
            avoid = {assign[v] for v in concurrent[u] if v in assign}
            pu = min_load_assign(u, cands, ledger, avoid)
            if trace is not None:
                trace.append((u, list(cands), frozenset(avoid), {c: ledger.time[c] for c in cands}, pu))
            assign[u] = pu
            ledger.add(pu, costs.time(u), costs.weight(u))

    def by_time(ids):
        return sorted(ids, key=lambda u: (-costs.time(u), u))

    for t in PuType:
        lp_nodes = [u for u in lp if costs.pu_type(u) is t]
        rest = [u for u in _nodes_of(g, costs, t) if u not in on_lp]
        place(by_time(lp_nodes), pus[t])
        place(by_time(rest), pus[t])
    return Mapping(assign, "LBLP")


def schedule_wb(g: ModelGraph, pool: PuPool, costs: CostTable) -> Mapping:
    """Weights Balance: spread weights over IMC units, time over DPU units."""
    pus = _pus_by_type(g, pool, costs)
    ledger = LoadLedger.for_pool(pool)
    assign: dict[int, int] = {}
    imc = sorted(_nodes_of(g, costs, PuType.IMC), key=lambda u: (-costs.weight(u), u))
    for u in imc:
        pu = min_load_assign(u, pus[PuType.IMC], ledger, metric="weight")
        assign[u] = pu
        ledger.add(pu, costs.time(u), costs.weight(u))
    dpu = sorted(_nodes_of(g, costs, PuType.DPU), key=lambda u: (-costs.time(u), u))
    for u in dpu:
        pu = min_load_assign(u, pus[PuType.DPU], ledger)
        assign[u] = pu
        ledger.add(pu, costs.time(u), costs.weight(u))
    return Mapping(assign, "WB")


def schedule_rr(g: ModelGraph, pool: PuPool, costs: CostTable) -> Mapping:
    """Round-robin over the PUs of each type, nodes taken in id order."""
    pus = _pus_by_type(g, pool, costs)
    assign = {}
    for t in PuType:
        for k, u in enumerate(_nodes_of(g, costs, t)):
            assign[u] = pus[t][k % len(pus[t])]
    return Mapping(assign, "RR")


def schedule_rd(g: ModelGraph, pool: PuPool, costs: CostTable, seed: int = 0) -> Mapping:
    """Random placement, seeded.

    Per type, as many nodes as there are PUs are drawn and put on distinct
    PUs (fewer if the type has fewer nodes); the rest go to uniformly random
    PUs of their type.
    """
    pus = _pus_by_type(g, pool, costs)
    rng = random.Random(seed)
    assign = {}
    for t in PuType:
        nodes = _nodes_of(g, costs, t)
        if not nodes:
            continue
        k = min(len(nodes), len(pus[t]))
        first = rng.sample(nodes, k)
        perm = rng.sample(pus[t], len(pus[t]))
        for u, pu in zip(first, perm):
            assign[u] = pu
        taken = set(first)
        for u in nodes:
            if u not in taken:
                assign[u] = rng.choice(pus[t])
    return Mapping(assign, "RD", seed)


def schedule(algo: str, g: ModelGraph, pool: PuPool, costs: CostTable, seed: int | None = None) -> Mapping:
    algo = algo.upper()
    if algo == "LBLP":
        return schedule_lblp(g, pool, costs)
    if algo == "WB":
        return schedule_wb(g, pool, costs)
    if algo == "RR":
        return schedule_rr(g, pool, costs)
    if algo == "RD":
        return schedule_rd(g, pool, costs, 0 if seed is None else seed)
    raise ConfigError(f"unknown algorithm '{algo}' (expected one of {', '.join(ALGORITHMS)})")


def validate_mapping(g: ModelGraph, pool: PuPool, m: Mapping, costs: CostTable | None = None) -> list[str]:
    """Return every totality / type-feasibility violation; empty means ok.

    With a cost table that allows MAC ops on DPUs, those placements are
    accepted.
    """
    problems = []
    for n in g.nodes:
        if n.id not in m.assign:
            problems.append(f"node {n.id} ({n.name}) is not assigned")
            continue
        pu = m.assign[n.id]
        if not 0 <= pu < pool.size:
            problems.append(f"node {n.id} assigned to unknown PU {pu}")
            continue
        want, have = classify(n), pool.type_of(pu)
        if want is not have:
            alt_ok = costs is not None and n.id in costs and costs[n.id].alt_time is not None
            if not alt_ok:
                problems.append(
                    f"node {n.id} ({n.op.value}) needs an {want.value} unit but PU {pu} is {have.value}"
                )
    for nid in sorted(set(m.assign) - set(g.by_id)):
        problems.append(f"mapping names unknown node {nid}")
    return problems
