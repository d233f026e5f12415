"""Experiment harness: single runs, PU sweeps, normalized metrics and reports."""

from __future__ import annotations

import csv
import io
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .cost import CostParams, build_cost_table
from .errors import ConfigError
from .graph import ModelGraph, PuPool, PuType, concurrency_relation, load_graph, longest_path
from .models import BUILTIN_MODELS, builtin_model
from .scheduler import ALGORITHMS, Mapping, schedule
from .sim import SimConfig, SimReport, simulate

log = logging.getLogger(__name__)

CSV_HEADER = (
    "model,algo,n_imc,n_dpu,seed,rate,norm_rate,latency,norm_latency,"
    "mean_util_imc,mean_util_dpu,bottleneck_pu"
)
DEFAULT_RD_SEEDS = tuple(range(1, 21))


def resolve_model(model: str | ModelGraph) -> ModelGraph:
    if isinstance(model, ModelGraph):
        return model
    if model in BUILTIN_MODELS:
        return builtin_model(model)
    path = Path(model)
    if path.suffix == ".json" or path.exists():
        return load_graph(path)
    raise ConfigError(f"unknown model '{model}': not a builtin ({', '.join(BUILTIN_MODELS)}) or a graph file")


@dataclass
class RunResult:
    model: str
    algo: str
    n_imc: int
    n_dpu: int
    seed: int | None
    mapping: Mapping
    report: SimReport

    def mean_util(self, t: PuType) -> float:
        pool = PuPool(self.n_imc, self.n_dpu)
        pus = pool.of_type(t)
        if not pus:
            return 0.0
        return sum(self.report.per_pu[p].utilization for p in pus) / len(pus)


def run_single(
    model: str | ModelGraph,
    algo: str,
    n_imc: int,
    n_dpu: int,
    seed: int | None = None,
    cost: CostParams | None = None,
    cfg: SimConfig | None = None,
    keep_trace: bool = False,
) -> RunResult:
    algo = algo.upper()
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm '{algo}'")
    if n_imc < 0 or n_dpu < 0:
        raise ConfigError("PU counts must be >= 0")
    g = resolve_model(model)
    cost = cost or CostParams.resolve(g.cost)
    costs = build_cost_table(g, cost)
    pool = PuPool(n_imc, n_dpu)
    if algo == "RD" and seed is None:
        seed = 0
    m = schedule(algo, g, pool, costs, seed if algo == "RD" else None)
    report = simulate(g, pool, costs, m, cfg, keep_trace=keep_trace)
    return RunResult(g.name, algo, n_imc, n_dpu, m.seed, m, report)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    model: str
    algorithms: tuple[str, ...] = ALGORITHMS
    imc_counts: tuple[int, ...] = (1,)
    dpu_counts: tuple[int, ...] = (1,)
    rd_seeds: tuple[int, ...] = DEFAULT_RD_SEEDS
    cost: CostParams | None = None
    frames: int = 64
    warmup_frames: int = 16
    # one horizon doubling keeps a 1840-run sweep inside a half-minute budget
    max_extensions: int = 1
    # explicit (n_imc, n_dpu) points; replaces the imc x dpu cross-product
    pairs: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        self.algorithms = tuple(a.upper() for a in self.algorithms)
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm '{a}'")
        if not self.algorithms:
            raise ConfigError("sweep needs at least one algorithm")
        if "RD" in self.algorithms and not self.rd_seeds:
            raise ConfigError("RD sweep needs at least one seed")
        for n_imc, n_dpu in self.points():
            if n_imc < 1 or n_dpu < 1:
                raise ConfigError(f"PU counts must be >= 1, got imc={n_imc} dpu={n_dpu}")

    def points(self) -> list[tuple[int, int]]:
        if self.pairs is not None:
            if not self.pairs:
                raise ConfigError("sweep has no (imc, dpu) points")
            return list(self.pairs)
        if not self.imc_counts or not self.dpu_counts:
            raise ConfigError("imc and dpu count lists must be non-empty")
        return [(i, d) for i in self.imc_counts for d in self.dpu_counts]

    def jobs(self) -> list[tuple[str, int, int, int | None]]:
        """Cross-product in output order: algorithm, then PU point, then seed."""
        out = []
        for algo in self.algorithms:
            for n_imc, n_dpu in self.points():
                seeds = self.rd_seeds if algo == "RD" else (None,)
                for s in seeds:
                    out.append((algo, n_imc, n_dpu, s))
        return out


@dataclass
class SweepRow:
    model: str
    algo: str
    n_imc: int
    n_dpu: int
    seed: str
    rate: float
    latency: float
    mean_util_imc: float
    mean_util_dpu: float
    bottleneck_pu: str
    period: float = 0.0
    periodic: bool = True
    norm_rate: float = field(default=0.0)
    norm_latency: float = field(default=0.0)

    def csv_fields(self) -> list[str]:
        return [
            self.model,
            self.algo,
            str(self.n_imc),
            str(self.n_dpu),
            self.seed,
            f"{self.rate:.6f}",
            f"{self.norm_rate:.6f}",
            f"{self.latency:.6f}",
            f"{self.norm_latency:.6f}",
            f"{self.mean_util_imc:.6f}",
            f"{self.mean_util_dpu:.6f}",
            self.bottleneck_pu,
        ]


def _sweep_job(args) -> SweepRow:
    graph, algo, n_imc, n_dpu, seed, cost, cfg = args
    r = run_single(graph, algo, n_imc, n_dpu, seed, cost, cfg)
    return SweepRow(
        model=r.model,
        algo=algo,
        n_imc=n_imc,
        n_dpu=n_dpu,
        seed="" if seed is None else str(seed),
        rate=r.report.rate,
        latency=r.report.latency,
        mean_util_imc=r.mean_util(PuType.IMC),
        mean_util_dpu=r.mean_util(PuType.DPU),
        bottleneck_pu=str(r.report.bottleneck_pu),
        period=r.report.period,
        periodic=r.report.periodic,
    )


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """Run every combination; RD points also get a ``seed=median`` summary row.

    Row order follows the cross-product, independent of `workers`. Rates and
    latencies are normalized by the sweep-wide maximum rate and minimum latency.
    """
    g = resolve_model(spec.model)
    cost = spec.cost or CostParams.resolve(g.cost)
    cfg = SimConfig(spec.frames, spec.warmup_frames, require_periodic=False, max_extensions=spec.max_extensions)
    jobs = [(g, a, i, d, s, cost, cfg) for a, i, d, s in spec.jobs()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_sweep_job(j) for j in jobs]

    aperiodic = sum(not r.periodic for r in rows)
    if aperiodic:
        log.warning("%d of %d runs never settled into a repeating pattern; their rate is a window mean",
                    aperiodic, len(rows))

    out: list[SweepRow] = []
    k = 0
    for algo in spec.algorithms:
        for n_imc, n_dpu in spec.points():
            if algo != "RD":
                out.append(rows[k])
                k += 1
                continue
            group = rows[k : k + len(spec.rd_seeds)]
            k += len(group)
            out.extend(group)
            out.append(_median_row(group))
    _normalize(out)
    return out


def _median_row(group: list[SweepRow]) -> SweepRow:
    first = group[0]
    rate = statistics.median(r.rate for r in group)
    return SweepRow(
        model=first.model,
        algo=first.algo,
        n_imc=first.n_imc,
        n_dpu=first.n_dpu,
        seed="median",
        rate=rate,
        latency=statistics.median(r.latency for r in group),
        mean_util_imc=statistics.median(r.mean_util_imc for r in group),
        mean_util_dpu=statistics.median(r.mean_util_dpu for r in group),
        bottleneck_pu="",
        period=1.0 / rate,
        periodic=all(r.periodic for r in group),
    )


def _normalize(rows: list[SweepRow]) -> None:
    best_rate = max(r.rate for r in rows)
    best_latency = min(r.latency for r in rows)
    for r in rows:
        r.norm_rate = r.rate / best_rate
        r.norm_latency = r.latency / best_latency


def normalize_values(values: list[float], mode: str) -> list[float]:
    """Divide by the max ('rate') or by the min ('latency')."""
    ref = max(values) if mode == "rate" else min(values)
    return [v / ref for v in values]


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def single_csv(result: RunResult) -> str:
    row = SweepRow(
        model=result.model,
        algo=result.algo,
        n_imc=result.n_imc,
        n_dpu=result.n_dpu,
        seed="" if result.seed is None else str(result.seed),
        rate=result.report.rate,
        latency=result.report.latency,
        mean_util_imc=result.mean_util(PuType.IMC),
        mean_util_dpu=result.mean_util(PuType.DPU),
        bottleneck_pu=str(result.report.bottleneck_pu),
        norm_rate=1.0,
        norm_latency=1.0,
    )
    return sweep_csv([row])


# ---------------------------------------------------------------------------
# reports


def report_table(model: str, mapping: Mapping, report: SimReport, pool: PuPool) -> str:
    """Per-PU allocation table with normalized weights area and utilization."""
    max_area = max((s.weights_area for s in report.per_pu.values()), default=0)
    lines = [f"model {model}  algorithm {mapping.algo}"
             + (f"  seed {mapping.seed}" if mapping.seed is not None else "")]
    lines.append(f"period {report.period:.6f}  rate {report.rate:.9f}  latency {report.latency:.6f}")
    for t in PuType:
        pus = pool.of_type(t)
        if not pus:
            continue
        lines.append("")
        lines.append(f"[{t.value}]")
        lines.append(f"{'PU':>4}  {'Nodes':<28} {'Weights Area [%]':>16} {'Utilization [%]':>16}")
        utils = []
        for pu in pus:
            st = report.per_pu[pu]
            nodes = mapping.on(pu)
            area = 100.0 * st.weights_area / max_area if max_area else 0.0
            util = 100.0 * st.utilization
            utils.append(util)
            node_txt = ", ".join(map(str, nodes)) if nodes else "—"
            lines.append(f"{pu:>4}  {node_txt:<28} {area:>16.1f} {util:>16.1f}")
        lines.append(f"mean {t.value} utilization: {sum(utils) / len(utils):.1f}%")
    return "\n".join(lines) + "\n"


@dataclass
class ModelSummary:
    name: str
    n_nodes: int
    n_imc_class: int
    kind_counts: dict[str, int]
    param_total: int
    longest_path: list[int]
    longest_path_time: float
    concurrent_pairs: int

    def text(self) -> str:
        kinds = ", ".join(f"{k}={v}" for k, v in sorted(self.kind_counts.items()))
        return (
            f"{self.name}: {self.n_nodes} nodes, {self.n_imc_class} IMC-class\n"
            f"kinds: {kinds}\n"
            f"parameters: {self.param_total}\n"
            f"longest path ({len(self.longest_path)} nodes, time {self.longest_path_time:.6f}): "
            f"{' -> '.join(map(str, self.longest_path))}\n"
            f"{self.concurrent_pairs} concurrent pairs\n"
        )


def inspect_model(model: str | ModelGraph, cost: CostParams | None = None) -> ModelSummary:
    g = resolve_model(model)
    costs = build_cost_table(g, cost or CostParams.resolve(g.cost))
    path, total = longest_path(g, costs)
    return ModelSummary(
        name=g.name,
        n_nodes=len(g.nodes),
        n_imc_class=sum(1 for n in g.nodes if n.op.is_mac),
        kind_counts=g.kind_counts(),
        param_total=g.param_total(),
        longest_path=path,
        longest_path_time=total,
        concurrent_pairs=len(concurrency_relation(g)),
    )


# ---------------------------------------------------------------------------
# plots

_COLORS = {"LBLP": "#d62728", "WB": "#1f77b4", "RR": "#2ca02c", "RD": "#9467bd"}


def plot_series(rows: list[SweepRow]) -> dict[str, dict[str, list[tuple[int, float]]]]:
    """Per algorithm, best normalized rate and latency at each total PU count.

    RD uses its median rows.
    """
    series: dict[str, dict[str, dict[int, float]]] = {}
    for r in rows:
        if r.algo == "RD" and r.seed != "median":
            continue
        s = series.setdefault(r.algo, {"rate": {}, "latency": {}})
        total = r.n_imc + r.n_dpu
        s["rate"][total] = max(s["rate"].get(total, 0.0), r.norm_rate)
        s["latency"][total] = min(s["latency"].get(total, float("inf")), r.norm_latency)
    return {a: {k: sorted(v.items()) for k, v in d.items()} for a, d in series.items()}


def sweep_svg(rows: list[SweepRow], title: str = "") -> str:
    """Two-panel line chart (normalized rate, normalized latency) vs total PUs."""
    series = plot_series(rows)
    xs = sorted({x for d in series.values() for x, _ in d["rate"]})
    w, h, pad = 360, 260, 44
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * w}" height="{h + 40}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{w}" y="16" text-anchor="middle" font-size="13">{_esc(title)}</text>',
    ]
    for panel, (key, label) in enumerate([("rate", "Normalized rate"), ("latency", "Normalized latency")]):
        ox = panel * w
        ys = [y for d in series.values() for _, y in d[key]]
        lo, hi = (0.0, 1.0) if key == "rate" else (1.0, max(ys + [1.0]))
        if hi <= lo:
            hi = lo + 1.0
        x0, x1 = min(xs), max(xs)
        span = (x1 - x0) or 1

        def px(x, ox=ox, x0=x0, span=span):
            return ox + pad + (x - x0) / span * (w - 2 * pad)

        def py(y, lo=lo, hi=hi):
            return 30 + (h - pad) - (y - lo) / (hi - lo) * (h - pad - 10)

        out.append(f'<text x="{ox + w / 2:.1f}" y="{h + 30}" text-anchor="middle">Number of PUs</text>')
        out.append(f'<text x="{ox + 12}" y="{30 + (h - pad) / 2:.1f}" '
                   f'transform="rotate(-90 {ox + 12} {30 + (h - pad) / 2:.1f})" text-anchor="middle">{label}</text>')
        out.append(f'<line x1="{px(x0):.1f}" y1="{py(lo):.1f}" x2="{px(x1):.1f}" y2="{py(lo):.1f}" stroke="black"/>')
        out.append(f'<line x1="{px(x0):.1f}" y1="{py(lo):.1f}" x2="{px(x0):.1f}" y2="{py(hi):.1f}" stroke="black"/>')
        for x in xs:
            out.append(f'<text x="{px(x):.1f}" y="{py(lo) + 14:.1f}" text-anchor="middle">{x}</text>')
        for y in (lo, (lo + hi) / 2, hi):
            out.append(f'<text x="{px(x0) - 4:.1f}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.2f}</text>')
        for i, (algo, d) in enumerate(series.items()):
            pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in d[key])
            color = _COLORS.get(algo, "#333333")
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
            ly = 40 + 14 * i
            out.append(f'<text x="{ox + w - pad}" y="{ly}" fill="{color}" text-anchor="end">{algo}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
