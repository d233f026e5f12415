"""Discrete-event simulation of pipelined compute-and-forward execution.

Every frame's inputs are available at time 0. A ``(node, frame)`` task becomes
ready once all its same-frame predecessors have finished (plus an optional
per-edge transfer cost). Each PU runs one task at a time, non-preemptively,
choosing the ready task with the lowest ``(frame, topological rank, node id)``.
Buffers between nodes are unbounded.
"""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field
from pathlib import Path

from .cost import CostTable
from .errors import ConfigError, InfeasibleMappingError, NonConvergenceError
from .graph import ModelGraph, PuPool, longest_path, topo_order
from .scheduler import Mapping, validate_mapping

CONVERGENCE_RTOL = 1e-6
# the repeating pattern must cover at least this share of the measured gaps
STEADY_FRACTION = 0.5


@dataclass(frozen=True)
class SimConfig:
    frames: int = 64
    warmup_frames: int = 16
    comm_cost: float = 0.0
    # raise NonConvergenceError when the completion gaps never repeat
    require_periodic: bool = True
    # how many times frames and warmup may be doubled while looking for a cycle
    max_extensions: int = 4

    def __post_init__(self):
        if not (self.frames > self.warmup_frames >= 0):
            raise ConfigError(
                f"need frames > warmup_frames >= 0, got frames={self.frames}, warmup={self.warmup_frames}"
            )
        if self.comm_cost < 0:
            raise ConfigError("comm_cost must be >= 0")
        if self.max_extensions < 0:
            raise ConfigError("max_extensions must be >= 0")


@dataclass(frozen=True)
class Task:
    node: int
    frame: int
    pu: int
    start: float
    end: float


@dataclass(frozen=True)
class PuStats:
    busy_per_frame: float
    utilization: float
    weights_area: int


@dataclass
class SimReport:
    latency: float
    period: float
    rate: float
    per_pu: dict[int, PuStats]
    periodic: bool = True
    trace: list[Task] | None = field(default=None, repr=False)

    @property
    def bottleneck_pu(self) -> int:
        return min(self.per_pu, key=lambda pu: (-self.per_pu[pu].busy_per_frame, pu))


def bottleneck_bound(costs: CostTable, m: Mapping) -> float:
    """Largest per-PU sum of assigned execution times."""
    loads: dict[int, float] = {}
    for nid, pu in m.assign.items():
        loads[pu] = loads.get(pu, 0.0) + costs.time(nid)
    return max(loads.values(), default=0.0)


def latency_lower_bound(g: ModelGraph, costs: CostTable, comm_cost: float = 0.0) -> float:
    path, total = longest_path(g, costs)
    if comm_cost > 0:
        total += comm_cost * (len(path) - 1)
    return total


def _run(
    g: ModelGraph,
    pool: PuPool,
    costs: CostTable,
    m: Mapping,
    frames: int,
    comm_cost: float,
) -> tuple[list[tuple[float, int, int, int, float]], list[float]]:
    """Event loop.

    Returns executed tasks as ``(start, pu, node, frame, end)`` tuples in
    dispatch order, and the completion time of every frame.
    """
    order = topo_order(g)
    rank = {u: i for i, u in enumerate(order)}
    pu_of = m.assign
    dur = {u: costs.time_on(u, pool.type_of(pu_of[u])) for u in order}
    npred = {u: len(g.preds[u]) for u in order}
    succs = g.succs
    sinks = set(g.sinks)
    push, pop = heapq.heappush, heapq.heappop

    remaining: dict[tuple[int, int], int] = {}
    arrival: dict[tuple[int, int], float] = {}
    ready: dict[int, list] = {pu: [] for pu, _ in pool.units}
    idle = set(ready)
    sinks_left = [len(sinks)] * frames
    done_at = [0.0] * frames

    # (time, kind, pu, node, frame); kind 0 = completion, 1 = delayed input arrival
    events: list[tuple[float, int, int, int, int]] = []
    for f in range(frames):
        for u in g.sources:
            push(ready[pu_of[u]], (f, rank[u], u))

    trace = []
    now = 0.0
    while True:
        for pu in sorted(idle):
            q = ready[pu]
            if q:
                f, _, u = pop(q)
                end = now + dur[u]
                idle.discard(pu)
                trace.append((now, pu, u, f, end))
                push(events, (end, 0, pu, u, f))
        if not events:
            break
        now = events[0][0]
        while events and events[0][0] == now:
            _, kind, pu, u, f = pop(events)
            if kind == 1:
                push(ready[pu_of[u]], (f, rank[u], u))
                continue
            idle.add(pu)
            if u in sinks:
                sinks_left[f] -= 1
                if not sinks_left[f]:
                    done_at[f] = now
            for v in succs[u]:
                key = (v, f)
                left = remaining.get(key, npred[v]) - 1
                if comm_cost:
                    arrival[key] = max(arrival.get(key, 0.0), now + comm_cost)
                if left:
                    remaining[key] = left
                    continue
                remaining.pop(key, None)
                if comm_cost:
                    push(events, (arrival.pop(key), 1, pu_of[v], v, f))
                else:
                    push(ready[pu_of[v]], (f, rank[v], v))

    if len(trace) != frames * len(order):
        raise InfeasibleMappingError("simulation stalled before executing every task")
    return trace, done_at


def _cycle_mean(c: list[float]) -> float | None:
    """Mean gap of `c` over whole cycles of its shortest repeating gap pattern.

    The pattern must hold over at least the last ``STEADY_FRACTION`` of the
    gaps and repeat at least twice there; earlier gaps are treated as transient.
    """
    gaps = [b - a for a, b in zip(c, c[1:])]
    n = len(gaps)
    if n == 0:
        return None
    tol = CONVERGENCE_RTOL * (max(gaps) or 1.0)
    for k in range(1, max(1, n // 4) + 1):
        i = n - 1
        while i >= k and abs(gaps[i] - gaps[i - k]) <= tol:
            i -= 1
        steady = n - 1 - i + k  # gaps in the repeating suffix
        if steady >= max(STEADY_FRACTION * n, 2 * k):
            whole = (steady // k) * k
            return (c[-1] - c[-1 - whole]) / whole
    return None


def measure_period(
    g: ModelGraph,
    pool: PuPool,
    costs: CostTable,
    m: Mapping,
    cfg: SimConfig,
) -> tuple[float, bool, list[tuple[float, int, int, int, float]]]:
    """Steady-state period from frame completion times.

    The measured window is the completions of frames ``warmup-1 .. frames-1``
    (sorted by time). As many flush frames again are queued behind them so the
    window never sees the pipeline drain. When the completion gaps settle into
    a repeating cycle over at least the latter half of the window, the period
    is the mean over whole cycles, which is exact. Otherwise frames and warmup are doubled, up to
    ``cfg.max_extensions`` times, after which the plain window mean is returned
    with ``periodic=False``.

    Returns ``(period, periodic, tasks of the measured frames)``; after an
    extension the tasks cover the extended frame count.
    """
    frames, warmup = cfg.frames, cfg.warmup_frames
    for attempt in range(cfg.max_extensions + 1):
        trace, done = _run(g, pool, costs, m, 2 * frames, cfg.comm_cost)
        c = sorted(done[:frames])[max(warmup - 1, 0) :]
        period = _cycle_mean(c)
        periodic = period is not None
        if periodic or attempt == cfg.max_extensions:
            if not periodic:
                period = (c[-1] - c[0]) / (len(c) - 1)
            return period, periodic, [t for t in trace if t[3] < frames]
        frames, warmup = 2 * frames, 2 * warmup
    raise AssertionError("unreachable")


def simulate(
    g: ModelGraph,
    pool: PuPool,
    costs: CostTable,
    m: Mapping,
    cfg: SimConfig | None = None,
    keep_trace: bool = False,
) -> SimReport:
    cfg = cfg or SimConfig()
    problems = validate_mapping(g, pool, m, costs)
    if problems:
        raise InfeasibleMappingError("; ".join(problems))

    latency = _run(g, pool, costs, m, 1, cfg.comm_cost)[1][0]
    period, periodic, trace = measure_period(g, pool, costs, m, cfg)
    if not periodic and cfg.require_periodic:
        raise NonConvergenceError(
            f"completion intervals did not repeat within {CONVERGENCE_RTOL:g} relative, even after "
            f"extending the run to {cfg.frames * 2 ** cfg.max_extensions} frames; increase frames "
            "or accept an aperiodic estimate"
        )

    per_pu = {}
    for pu, t in pool.units:
        nodes = m.on(pu)
        busy = sum(costs.time_on(u, t) for u in nodes)
        weights = sum(costs.weight(u) for u in nodes)
        per_pu[pu] = PuStats(busy, busy / period, weights)
    tasks = [Task(u, f, pu, start, end) for start, pu, u, f, end in trace] if keep_trace else None
    return SimReport(latency, period, 1.0 / period, per_pu, periodic, tasks)


def trace_csv(trace: list[Task]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "frame", "pu_id", "start", "end"])
    for t in sorted(trace, key=lambda t: (t.start, t.pu, t.node)):
        w.writerow([t.node, t.frame, t.pu, f"{t.start:.6f}", f"{t.end:.6f}"])
    return buf.getvalue()


def write_trace(trace: list[Task], path: str | Path) -> None:
    Path(path).write_text(trace_csv(trace), encoding="utf-8", newline="")
