"""Traffic assignment under road closures, with surrogate-model benchmarking.

The package solves static user-equilibrium assignment on closure scenarios,
generates labeled closure datasets, engineers features, and benchmarks
heuristic and regression surrogates for total travel time under an online
learning protocol.
"""

from .network import (
    ClosureConfig,
    DemandMatrix,
    Link,
    LinkAdjustment,
    Network,
    apply_closures,
    bundled_sioux_falls,
    connectivity_check,
    dump_tntp,
    load_tntp,
    network_fingerprint,
)
from .tap import (
    Equilibrium,
    SolverOptions,
    all_or_nothing,
    beckmann_objective,
    bpr_cost,
    line_search,
    relative_gap,
    solve_ue,
    total_travel_time,
)

__version__ = "0.1.0"


def __getattr__(name):
    # heavier subsystems load lazily so `import closurelab` stays light
    if name in ("scenarios", "features", "heuristics", "models", "evaluation", "config"):
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

__all__ = [
    "ClosureConfig",
    "DemandMatrix",
    "Equilibrium",
    "Link",
    "LinkAdjustment",
    "Network",
    "SolverOptions",
    "all_or_nothing",
    "apply_closures",
    "beckmann_objective",
    "bpr_cost",
    "bundled_sioux_falls",
    "connectivity_check",
    "dump_tntp",
    "line_search",
    "load_tntp",
    "network_fingerprint",
    "relative_gap",
    "solve_ue",
    "total_travel_time",
]
