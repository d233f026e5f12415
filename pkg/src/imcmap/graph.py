"""Node-weighted DAG representation of CNN inference graphs.

Graphs are immutable once built. Structural queries (topological order,
longest path, concurrency) are pure functions so they can be shared freely
between experiment workers.
"""

from __future__ import annotations

import enum
import heapq
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .errors import GraphError


class Op(str, enum.Enum):
    CONV = "Conv"
    MVM = "Mvm"
    ADD = "Add"
    MAXPOOL = "MaxPool"
    AVGPOOL = "AvgPool"
    CONCAT = "Concat"
    SPLIT = "Split"
    RESHAPE = "Reshape"
    ACTIVATION = "Activation"

    @property
    def is_mac(self) -> bool:
        return self in (Op.CONV, Op.MVM)


class Act(str, enum.Enum):
    RELU = "ReLU"
    SILU = "SiLU"


class PuType(str, enum.Enum):
    IMC = "IMC"
    DPU = "DPU"


@dataclass(frozen=True)
class NodeSpec:
    id: int
    name: str
    op: Op
    macs: int = 0
    out_elems: int = 1
    weight_count: int = 0
    fused_activation: Act | None = None
    explicit_time: float | None = None

    def __post_init__(self):
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 1:
            raise GraphError(f"node id must be an integer >= 1, got {self.id!r}")
        if self.fused_activation is not None and not self.op.is_mac:
            raise GraphError(
                f"node {self.id}: fused_activation only allowed on Conv/Mvm, not {self.op.value}"
            )
        if not self.op.is_mac and self.weight_count != 0:
            raise GraphError(f"node {self.id}: {self.op.value} node cannot carry weights")
        if self.macs < 0:
            raise GraphError(f"node {self.id}: macs must be >= 0")
        if self.out_elems < 1:
            raise GraphError(f"node {self.id}: out_elems must be >= 1")
        if self.weight_count < 0:
            raise GraphError(f"node {self.id}: weight_count must be >= 0")
        if self.explicit_time is not None and not self.explicit_time > 0:
            raise GraphError(f"node {self.id}: explicit time must be > 0")


@dataclass(frozen=True)
class ModelGraph:
    """A validated CNN graph. Construction checks every structural invariant."""

    nodes: tuple[NodeSpec, ...]
    edges: tuple[tuple[int, int], ...]
    name: str = "graph"
    # optional cost-parameter overrides carried by a graph file
    cost: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        if not self.nodes:
            raise GraphError("graph has no nodes")
        ids = [n.id for n in self.nodes]
        dup = sorted({i for i in ids if ids.count(i) > 1}) if len(set(ids)) != len(ids) else []
        if dup:
            raise GraphError(f"duplicate node id(s): {dup}")
        known = set(ids)
        seen = set()
        for a, b in self.edges:
            for end in (a, b):
                if end not in known:
                    raise GraphError(f"edge ({a}, {b}) references unknown node id {end}")
            if a == b:
                raise GraphError(f"self-edge on node {a}")
            if (a, b) in seen:
                raise GraphError(f"duplicate edge ({a}, {b})")
            seen.add((a, b))
        topo_order(self)  # raises on cycles

    @cached_property
    def by_id(self) -> dict[int, NodeSpec]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def preds(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for a, b in self.edges:
            out[b].append(a)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    @cached_property
    def succs(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for a, b in self.edges:
            out[a].append(b)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    @property
    def sources(self) -> list[int]:
        return [i for i, p in self.preds.items() if not p]

    @property
    def sinks(self) -> list[int]:
        return [i for i, s in self.succs.items() if not s]

    def node(self, nid: int) -> NodeSpec:
        return self.by_id[nid]

    def param_total(self) -> int:
        return sum(n.weight_count for n in self.nodes)

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for n in self.nodes:
            counts[n.op.value] = counts.get(n.op.value, 0) + 1
        return counts

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            d = {
                "id": n.id,
                "name": n.name,
                "op": n.op.value,
                "macs": n.macs,
                "out_elems": n.out_elems,
                "weight_count": n.weight_count,
            }
            if n.fused_activation is not None:
                d["fused_activation"] = n.fused_activation.value
            if n.explicit_time is not None:
                d["time"] = n.explicit_time
            nodes.append(d)
        doc = {"name": self.name, "nodes": nodes, "edges": [list(e) for e in self.edges]}
        if self.cost:
            doc["cost"] = dict(self.cost)
        return doc


# ---------------------------------------------------------------------------
# file format

_GRAPH_KEYS = {"name", "nodes", "edges", "cost"}
_NODE_KEYS = {"id", "name", "op", "fused_activation", "macs", "out_elems", "weight_count", "time"}
_COST_KEYS = {"imc_mac_rate", "dpu_elem_rate", "imc_overhead", "dpu_overhead", "dpu_mac_penalty"}


def graph_from_dict(doc: Mapping) -> ModelGraph:
    if not isinstance(doc, Mapping):
        raise GraphError("graph document must be a JSON object")
    extra = set(doc) - _GRAPH_KEYS
    if extra:
        raise GraphError(f"unknown top-level field(s): {sorted(extra)}")
    for key in ("name", "nodes", "edges"):
        if key not in doc:
            raise GraphError(f"missing top-level field '{key}'")
    if not isinstance(doc["name"], str):
        raise GraphError("'name' must be a string")

    nodes = []
    for i, raw in enumerate(doc["nodes"]):
        if not isinstance(raw, Mapping):
            raise GraphError(f"nodes[{i}] must be an object")
        extra = set(raw) - _NODE_KEYS
        if extra:
            raise GraphError(f"nodes[{i}] (id={raw.get('id')}): unknown field(s) {sorted(extra)}")
        try:
            op = Op(raw["op"])
            act = Act(raw["fused_activation"]) if raw.get("fused_activation") is not None else None
            nodes.append(
                NodeSpec(
                    id=_as_int(raw["id"], "id"),
                    name=str(raw.get("name", f"n{raw['id']}")),
                    op=op,
                    macs=_as_int(raw.get("macs", 0), "macs"),
                    out_elems=_as_int(raw.get("out_elems", 1), "out_elems"),
                    weight_count=_as_int(raw.get("weight_count", 0), "weight_count"),
                    fused_activation=act,
                    explicit_time=float(raw["time"]) if raw.get("time") is not None else None,
                )
            )
        except KeyError as exc:
            raise GraphError(f"nodes[{i}]: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"nodes[{i}] (id={raw.get('id')}): {exc}") from None

    edges = []
    for i, e in enumerate(doc["edges"]):
        if not (isinstance(e, (list, tuple)) and len(e) == 2):
            raise GraphError(f"edges[{i}] must be a [from, to] pair, got {e!r}")
        edges.append((_as_int(e[0], "edge"), _as_int(e[1], "edge")))

    cost = doc.get("cost") or {}
    if not isinstance(cost, Mapping):
        raise GraphError("'cost' must be an object")
    extra = set(cost) - _COST_KEYS
    if extra:
        raise GraphError(f"unknown cost field(s): {sorted(extra)}")
    return ModelGraph(tuple(nodes), tuple(edges), doc["name"], dict(cost))


def _as_int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise GraphError(f"{what} must be an integer, got {v!r}")
    return v


def load_graph(path: str | Path) -> ModelGraph:
    """Load and validate a graph from a JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise GraphError(f"graph file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: parse error at line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return graph_from_dict(doc)


def save_graph(g: ModelGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(g.to_dict(), indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# structural queries


def topo_order(g: ModelGraph) -> list[int]:
    """Kahn's algorithm; among ready nodes the lowest id goes first."""
    indeg = {n.id: 0 for n in g.nodes}
    succ: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    for a, b in g.edges:
        indeg[b] += 1
        succ[a].append(b)
    frontier = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(frontier)
    order = []
    while frontier:
        u = heapq.heappop(frontier)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(frontier, v)
    if len(order) != len(indeg):
        stuck = sorted(i for i, d in indeg.items() if d > 0)
        raise GraphError(f"graph contains a cycle through node(s) {stuck[:10]}")
    return order


def longest_path(g: ModelGraph, costs) -> tuple[list[int], float]:
    """Heaviest source-to-sink path by summed node time.

    `costs` is anything exposing ``time(node_id)`` (a CostTable) or a plain
    mapping of node id to time. Sums are exact (rational), and ties go to the
    lexicographically smallest id sequence.
    """
    time = _time_lookup(costs)
    best: dict[int, tuple[Fraction, tuple[int, ...]]] = {}
    for u in reversed(topo_order(g)):
        tu = Fraction(time(u))
        tail: tuple[Fraction, tuple[int, ...]] | None = None
        for v in g.succs[u]:  # ascending id, so first max wins the tie
            if tail is None or best[v][0] > tail[0]:
                tail = best[v]
        if tail is None:
            best[u] = (tu, (u,))
        else:
            best[u] = (tu + tail[0], (u,) + tail[1])
    total, path = None, None
    for s in g.sources:
        cand = best[s]
        if total is None or cand[0] > total:
            total, path = cand
    return list(path), float(total)


def _time_lookup(costs):
    if hasattr(costs, "time"):
        return costs.time

    def lookup(nid):
        try:
            return costs[nid]
        except KeyError:
            raise GraphError(f"missing cost for node {nid}") from None

    return lookup


def reachability(g: ModelGraph) -> dict[int, int]:
    """Map node id -> bitmask (over topo index) of nodes reachable from it."""
    order = topo_order(g)
    index = {u: i for i, u in enumerate(order)}
    reach: dict[int, int] = {}
    for u in reversed(order):
        mask = 0
        for v in g.succs[u]:
            mask |= (1 << index[v]) | reach[v]
        reach[u] = mask
    return reach


def concurrent_map(g: ModelGraph) -> dict[int, frozenset[int]]:
    """For each node, the set of nodes neither reaching it nor reachable from it."""
    order = topo_order(g)
    index = {u: i for i, u in enumerate(order)}
    down = reachability(g)
    up = {u: 0 for u in order}
    for u in order:
        for v in g.succs[u]:
            up[v] |= up[u] | (1 << index[u])
    full = (1 << len(order)) - 1
    out = {}
    for u in order:
        mask = full & ~(down[u] | up[u] | (1 << index[u]))
        out[u] = frozenset(order[i] for i in _bits(mask))
    return out


def _bits(mask: int) -> Iterable[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def concurrency_relation(g: ModelGraph) -> set[frozenset[int]]:
    """Unordered pairs of nodes with no directed path between them."""
    pairs = set()
    for u, others in concurrent_map(g).items():
        for v in others:
            if u < v:
                pairs.add(frozenset((u, v)))
    return pairs


# ---------------------------------------------------------------------------
# processing units


@dataclass(frozen=True)
class PuPool:
    """Processing units: IMC units first, then DPU units, ids contiguous from 0."""

    n_imc: int
    n_dpu: int

    def __post_init__(self):
        if self.n_imc < 0 or self.n_dpu < 0:
            raise GraphError("PU counts must be non-negative")

    @property
    def units(self) -> list[tuple[int, PuType]]:
        return [(i, PuType.IMC) for i in range(self.n_imc)] + [
            (self.n_imc + j, PuType.DPU) for j in range(self.n_dpu)
        ]

    @property
    def size(self) -> int:
        return self.n_imc + self.n_dpu

    def of_type(self, t: PuType) -> list[int]:
        if t is PuType.IMC:
            return list(range(self.n_imc))
        return list(range(self.n_imc, self.n_imc + self.n_dpu))

    def type_of(self, pu: int) -> PuType:
        if not 0 <= pu < self.size:
            raise GraphError(f"PU {pu} not in pool of size {self.size}")
        return PuType.IMC if pu < self.n_imc else PuType.DPU
