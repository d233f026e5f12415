"""Map CNN inference graphs onto heterogeneous IMC/DPU processing units."""

from .bench import SweepRow, SweepSpec, inspect_model, report_table, run_single, run_sweep
from .cost import CostParams, CostTable, build_cost_table, classify
from .errors import ConfigError, GraphError, ImcMapError, InfeasibleMappingError, NonConvergenceError
from .graph import (
    Act,
    ModelGraph,
    NodeSpec,
    Op,
    PuPool,
    PuType,
    concurrency_relation,
    load_graph,
    longest_path,
    save_graph,
    topo_order,
)
from .models import BUILTIN_MODELS, builtin_model
from .scheduler import (
    ALGORITHMS,
    Mapping,
    min_load_assign,
    schedule,
    schedule_lblp,
    schedule_rd,
    schedule_rr,
    schedule_wb,
    validate_mapping,
)
from .sim import SimConfig, SimReport, bottleneck_bound, latency_lower_bound, simulate

__version__ = "0.1.0"
