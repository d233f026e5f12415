"""Analytical execution-time model for IMC and DPU processing units.

IMC-class nodes (Conv, Mvm) cost ``macs / imc_mac_rate + imc_overhead``;
every other node costs ``out_elems / dpu_elem_rate + dpu_overhead``. A node's
explicit time, when present, replaces the formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Mapping

from .errors import ConfigError, GraphError
from .graph import ModelGraph, NodeSpec, PuType

DISALLOWED = math.inf


@dataclass(frozen=True)
class CostParams:
    imc_mac_rate: float = 1e4
    dpu_elem_rate: float = 1e3
    imc_overhead: float = 1.0
    dpu_overhead: float = 1.0
    # slowdown for a MAC op run on a DPU; inf keeps the hard IMC/DPU partition
    dpu_mac_penalty: float = DISALLOWED

    def __post_init__(self):
        if not (self.imc_mac_rate > 0 and self.dpu_elem_rate > 0):
            raise ConfigError("cost rates must be > 0")
        if self.imc_overhead < 0 or self.dpu_overhead < 0:
            raise ConfigError("cost overheads must be >= 0")
        if not self.dpu_mac_penalty >= 1:
            raise ConfigError("dpu_mac_penalty must be >= 1 (or inf to disallow)")

    @classmethod
    def resolve(cls, file_cost: Mapping | None = None, cli: Mapping | None = None) -> CostParams:
        """Merge defaults < graph-file ``cost`` object < CLI flags."""
        known = {f.name for f in fields(cls)}
        merged = {}
        for layer in (file_cost or {}, cli or {}):
            for k, v in layer.items():
                if k not in known:
                    raise ConfigError(f"unknown cost parameter '{k}'")
                if v is not None:
                    merged[k] = float(v)
        return replace(cls(), **merged)


def classify(node: NodeSpec) -> PuType:
    return PuType.IMC if node.op.is_mac else PuType.DPU


@dataclass(frozen=True)
class CostEntry:
    pu_type: PuType
    exec_time: float
    weight_size: int
    # time if executed on the other PU type, None when that is not allowed
    alt_time: float | None = None


class CostTable:
    """Per-node execution time on its PU type plus weight size."""

    def __init__(self, entries: Mapping[int, CostEntry]):
        self.entries = dict(sorted(entries.items()))

    def __getitem__(self, nid: int) -> CostEntry:
        try:
            return self.entries[nid]
        except KeyError:
            raise GraphError(f"missing cost entry for node {nid}") from None

    def __contains__(self, nid: int) -> bool:
        return nid in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def time(self, nid: int) -> float:
        return self[nid].exec_time

    def weight(self, nid: int) -> int:
        return self[nid].weight_size

    def pu_type(self, nid: int) -> PuType:
        return self[nid].pu_type

    def time_on(self, nid: int, t: PuType) -> float:
        e = self[nid]
        if t is e.pu_type:
            return e.exec_time
        if e.alt_time is None:
            raise GraphError(f"node {nid} cannot execute on a {t.value} unit")
        return e.alt_time

    def with_time(self, nid: int, exec_time: float) -> CostTable:
        entries = dict(self.entries)
        entries[nid] = replace(entries[nid], exec_time=exec_time)
        return CostTable(entries)


def node_time(node: NodeSpec, p: CostParams) -> float:
    if node.explicit_time is not None:
        return float(node.explicit_time)
    if classify(node) is PuType.IMC:
        return node.macs / p.imc_mac_rate + p.imc_overhead
    return node.out_elems / p.dpu_elem_rate + p.dpu_overhead


def build_cost_table(g: ModelGraph, p: CostParams | None = None) -> CostTable:
    p = p or CostParams()
    entries = {}
    for n in g.nodes:
        t = node_time(n, p)
        if not t > 0:
            raise GraphError(f"node {n.id}: non-positive execution time {t}")
        alt = None
        if classify(n) is PuType.IMC and math.isfinite(p.dpu_mac_penalty):
            alt = t * p.dpu_mac_penalty
        entries[n.id] = CostEntry(classify(n), t, n.weight_count, alt)
    return CostTable(entries)
