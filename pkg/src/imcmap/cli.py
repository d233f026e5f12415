"""Command-line entry point: ``imcmap run | sweep | inspect``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import SweepSpec, inspect_model, report_table, run_single, run_sweep, single_csv, sweep_csv, sweep_svg
from .cost import CostParams
from .errors import ConfigError, GraphError, InfeasibleMappingError, NonConvergenceError
from .graph import PuPool
from .scheduler import ALGORITHMS
from .sim import CONVERGENCE_RTOL, SimConfig, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NONCONVERGENT = 0, 2, 3, 4

log = logging.getLogger("imcmap")


def parse_range(text: str) -> tuple[int, ...]:
    """``"3"``, ``"1..14"`` or ``"1,2,8"`` (items may themselves be ranges)."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = (int(x) for x in part.split("..", 1))
                if hi < lo:
                    raise ConfigError(f"empty range '{part}'")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"bad integer list '{text}' (use N, A..B or comma-separated)") from None
    return tuple(out)


def _add_cost_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("cost model (overrides the graph file's cost object)")
    g.add_argument("--imc-mac-rate", type=float, metavar="R", help="MACs per time unit on IMC (default 1e4)")
    g.add_argument("--dpu-elem-rate", type=float, metavar="R", help="output elements per time unit on DPU (default 1e3)")
    g.add_argument("--imc-overhead", type=float, metavar="T", help="per-node IMC overhead (default 1.0)")
    g.add_argument("--dpu-overhead", type=float, metavar="T", help="per-node DPU overhead (default 1.0)")


def _cli_cost(args) -> dict:
    return {
        "imc_mac_rate": args.imc_mac_rate,
        "dpu_elem_rate": args.dpu_elem_rate,
        "imc_overhead": args.imc_overhead,
        "dpu_overhead": args.dpu_overhead,
    }


def build_parser() -> argparse.ArgumentParser:
    # argparse exits 2 on usage errors, which already means "invalid configuration"
    p = argparse.ArgumentParser(
        prog="imcmap",
        description="Map CNN graphs onto IMC/DPU processing units and simulate pipelined execution.",
        epilog=(
            "exit codes: 0 ok, 2 invalid configuration, 3 infeasible mapping, 4 simulation "
            f"non-convergence (completion intervals not repeating within {CONVERGENCE_RTOL:g} relative)"
        ),
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="cmd", required=True)

    algos = ",".join(a.lower() for a in ALGORITHMS)
    r = sub.add_parser("run", help="schedule and simulate one configuration")
    r.add_argument("--model", required=True, help="builtin name (resnet8, resnet18, yolov8n_subset) or graph JSON path")
    r.add_argument("--algo", required=True, type=str.upper, choices=ALGORITHMS, metavar=f"{{{algos}}}")
    r.add_argument("--imc", required=True, type=int, help="number of IMC units")
    r.add_argument("--dpu", required=True, type=int, help="number of DPU units")
    r.add_argument("--seed", type=int, help="RD seed (default 0)")
    r.add_argument("--frames", type=int, default=64, help="frames pushed through the pipeline (default 64)")
    r.add_argument("--warmup", type=int, default=16, help="frames excluded from the period (default 16)")
    r.add_argument("--comm-cost", type=float, default=0.0, help="per-edge transfer time (default 0)")
    r.add_argument("--max-extensions", type=int, default=4,
                   help="times the horizon may double while looking for a repeating pattern (default 4)")
    r.add_argument(
        "--allow-aperiodic",
        action="store_true",
        help=f"report a window-mean period instead of failing when completion gaps never repeat "
        f"within {CONVERGENCE_RTOL:g} relative",
    )
    r.add_argument("--trace", type=Path, help="write the task trace CSV here")
    r.add_argument("--mapping", type=Path, help="write the mapping JSON here")
    r.add_argument("--table", action="store_true", help="print the per-PU allocation table")
    r.add_argument("--out", type=Path, help="write the result CSV here instead of stdout")
    _add_cost_flags(r)

    s = sub.add_parser("sweep", help="run a grid of PU counts and algorithms")
    s.add_argument("--model", required=True)
    s.add_argument("--algos", default=algos, help=f"comma list (default {algos})")
    s.add_argument("--imc", default="1..10", help="IMC counts, e.g. 1..14 (default 1..10)")
    s.add_argument("--dpu", default="1..4", help="DPU counts, e.g. 1..6 (default 1..4)")
    s.add_argument("--total-pus", metavar="A..B", help="sweep total PU counts with --dpu fixed to one value")
    s.add_argument("--seeds", default="1..20", help="RD seeds (default 1..20)")
    s.add_argument("--frames", type=int, default=64)
    s.add_argument("--warmup", type=int, default=16)
    s.add_argument("--max-extensions", type=int, default=1, help="horizon doublings per run (default 1)")
    s.add_argument("--workers", type=int, default=1, help="parallel processes; output is identical for any value")
    s.add_argument("--out", type=Path, help="write the CSV here instead of stdout")
    s.add_argument("--svg", type=Path, help="write a normalized rate/latency chart here")
    _add_cost_flags(s)

    i = sub.add_parser("inspect", help="print a structural summary of a model")
    i.add_argument("--model", required=True)
    i.add_argument("--dump", type=Path, help="also write the graph as JSON in the file format")
    _add_cost_flags(i)
    return p


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8", newline="")


def _cost(args, model) -> CostParams:
    from .bench import resolve_model

    return CostParams.resolve(resolve_model(model).cost, _cli_cost(args))


def cmd_run(args) -> int:
    cfg = SimConfig(args.frames, args.warmup, args.comm_cost, not args.allow_aperiodic, args.max_extensions)
    res = run_single(args.model, args.algo, args.imc, args.dpu, args.seed, _cost(args, args.model), cfg,
                     keep_trace=args.trace is not None)
    if not res.report.periodic:
        log.warning("completion gaps never repeated; period is a window mean")
    if args.trace:
        write_trace(res.report.trace, args.trace)
    if args.mapping:
        args.mapping.write_text(res.mapping.to_json() + "\n", encoding="utf-8")
    if args.table:
        sys.stdout.write(report_table(res.model, res.mapping, res.report, PuPool(args.imc, args.dpu)))
    _emit(single_csv(res), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    algos = tuple(a.strip().upper() for a in args.algos.split(",") if a.strip())
    pairs = None
    imc, dpu = parse_range(args.imc), parse_range(args.dpu)
    if args.total_pus:
        if len(dpu) != 1:
            raise ConfigError("--total-pus needs a single --dpu value")
        pairs = tuple((t - dpu[0], dpu[0]) for t in parse_range(args.total_pus))
    spec = SweepSpec(
        model=args.model,
        algorithms=algos,
        imc_counts=imc,
        dpu_counts=dpu,
        rd_seeds=parse_range(args.seeds),
        cost=_cost(args, args.model),
        frames=args.frames,
        warmup_frames=args.warmup,
        max_extensions=args.max_extensions,
        pairs=pairs,
    )
    rows = run_sweep(spec, workers=args.workers)
    _emit(sweep_csv(rows), args.out)
    if args.svg:
        args.svg.write_text(sweep_svg(rows, title=rows[0].model), encoding="utf-8", newline="")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .bench import resolve_model
    from .graph import save_graph

    sys.stdout.write(inspect_model(args.model, _cost(args, args.model)).text())
    if args.dump:
        save_graph(resolve_model(args.model), args.dump)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="imcmap: %(message)s")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "inspect": cmd_inspect}[args.cmd]
    try:
        return handler(args)
    except (ConfigError, GraphError) as e:
        print(f"imcmap: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleMappingError as e:
        print(f"imcmap: infeasible mapping: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergenceError as e:
        print(f"imcmap: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENT
    except OSError as e:
        print(f"imcmap: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
