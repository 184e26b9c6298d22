"""User-equilibrium traffic assignment via Frank-Wolfe.

Flows are stored per link in a dense float array over the network's link-id
space; links absent from a (closed) network keep zero entries so flows from
different closure scenarios remain directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DisconnectedDemandError, SolverError
from .network import DemandMatrix, Link, Network

FlowVector = np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rules for the equilibrium solver."""

    gap_tolerance: float = 1e-4
    max_iterations: int = 20000
    line_search_tolerance: float = 1e-8
    line_search_max_halvings: int = 64

    def __post_init__(self):
        if not self.gap_tolerance > 0:
            raise ValueError("gap_tolerance must be > 0")
        if not self.line_search_tolerance > 0:
            raise ValueError("line_search_tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class Equilibrium:
    """Solver result: link flows plus convergence diagnostics."""

    flows: FlowVector
    relative_gap: float
    iterations: int
    ttt: float
    converged: bool

    def to_json_dict(self, network: Network) -> dict:
        arrays = network.arrays
        compact = self.flows[arrays.link_ids]
        return {
            "flows": {int(lid): float(f) for lid, f in zip(arrays.link_ids, compact)},
            "relative_gap": float(self.relative_gap),
            "iterations": int(self.iterations),
            "ttt": float(self.ttt),
            "converged": bool(self.converged),
        }


def bpr_cost(link: Link, flow: float) -> float:
    """Travel time on one link at the given flow (BPR delay curve)."""
    if flow < 0:
        raise ValueError(f"flow must be >= 0, got {flow}")
    return link.fft * (1.0 + link.alpha * (flow / link.capacity) ** link.beta)


def _compact_flows(network: Network, flows: FlowVector) -> np.ndarray:
    flows = np.asarray(flows, dtype=np.float64)
    if flows.shape != (network.link_id_space,):
        raise ValueError(
            f"flow vector must have length {network.link_id_space}, got {flows.shape}"
        )
    return flows[network.arrays.link_ids]


def _expand_flows(network: Network, compact: np.ndarray) -> FlowVector:
    full = np.zeros(network.link_id_space, dtype=np.float64)
    full[network.arrays.link_ids] = compact
    return full


def link_costs(network: Network, flows: FlowVector) -> FlowVector:
    """Per-link travel times at the given flows, over the full link-id space.

    Entries for links absent from the network are 0.
    """
    arrays = network.arrays
    compact = kernels.bpr_costs(
        _compact_flows(network, flows), arrays.fft, arrays.capacity, arrays.alpha, arrays.beta
    )
    return _expand_flows(network, compact)


def beckmann_objective(network: Network, flows: FlowVector) -> float:
    """Sum of integrated link delays; the quantity Frank-Wolfe descends.

    The BPR integral has the closed form
    fft*f + fft*alpha*f**(beta+1) / ((beta+1)*capacity**beta).
    """
    arrays = network.arrays
    f = _compact_flows(network, flows)
    integral = arrays.fft * f + (
        arrays.fft * arrays.alpha * f ** (arrays.beta + 1.0)
        / ((arrays.beta + 1.0) * arrays.capacity ** arrays.beta)
    )
    return float(np.sum(integral))


def total_travel_time(network: Network, flows: FlowVector) -> float:
    """Aggregate travel time over all vehicles: sum of flow * delay."""
    arrays = network.arrays
    f = _compact_flows(network, flows)
    costs = kernels.bpr_costs(f, arrays.fft, arrays.capacity, arrays.alpha, arrays.beta)
    return float(np.dot(f, costs))


def _demand_csr(network: Network, demand: DemandMatrix):
    arrays = network.arrays
    node_index = arrays.node_index
    by_origin: dict[int, list[tuple[int, float]]] = {}
    for (origin, dest), value in sorted(demand.entries.items()):
        by_origin.setdefault(origin, []).append((dest, value))
    origins = np.empty(len(by_origin), dtype=np.int64)
    dest_start = np.zeros(len(by_origin) + 1, dtype=np.int64)
    dest_node = []
    dest_demand = []
    for i, origin in enumerate(sorted(by_origin)):
        if origin not in node_index:
            raise DisconnectedDemandError([(origin, d) for d, _ in by_origin[origin]])
        origins[i] = node_index[origin]
        for dest, value in by_origin[origin]:
            if dest not in node_index:
                raise DisconnectedDemandError([(origin, dest)])
            dest_node.append(node_index[dest])
            dest_demand.append(value)
        dest_start[i + 1] = len(dest_node)
    return (
        origins,
        dest_start,
        np.asarray(dest_node, dtype=np.int64),
        np.asarray(dest_demand, dtype=np.float64),
    )


def _aon_compact(network: Network, compact_costs: np.ndarray, demand_csr):
    arrays = network.arrays
    origins, dest_start, dest_node, dest_demand = demand_csr
    flows, sptt, loaded, bad_origin, bad_node = kernels.aon_assign(
        compact_costs,
        arrays.n_nodes,
        arrays.out_start,
        arrays.out_link,
        arrays.head,
        arrays.in_start,
        arrays.in_link,
        arrays.tail,
        origins,
        dest_start,
        dest_node,
        dest_demand,
    )
    if bad_origin >= 0:
        origin_id = int(arrays.node_ids[origins[bad_origin]])
        dest_id = int(arrays.node_ids[bad_node])
        raise DisconnectedDemandError([(origin_id, dest_id)])
    return flows, sptt, loaded


def all_or_nothing(network: Network, costs: FlowVector, demand: DemandMatrix) -> FlowVector:
    """Load every OD demand onto its single shortest path under ``costs``.

    ``costs`` spans the full link-id space. Ties between equal-cost paths are
    broken toward the lowest predecessor link id, so the result is
    deterministic.
    """
    arrays = network.arrays
    costs = np.asarray(costs, dtype=np.float64)
    if costs.shape != (network.link_id_space,):
        raise ValueError(f"cost vector must have length {network.link_id_space}")
    compact_costs = costs[arrays.link_ids]
    if not np.all(np.isfinite(compact_costs)) or np.any(compact_costs <= 0):
        raise ValueError("link costs must be finite and positive")
    flows, _, _ = _aon_compact(network, compact_costs, _demand_csr(network, demand))
    return _expand_flows(network, flows)


def line_search(
    network: Network,
    current: FlowVector,
    auxiliary: FlowVector,
    tolerance: float = 1e-8,
    max_halvings: int = 64,
) -> float:
    """Step toward ``auxiliary`` minimizing the Beckmann objective."""
    arrays = network.arrays
    return float(
        kernels.line_search_bisect(
            _compact_flows(network, current),
            _compact_flows(network, auxiliary),
            arrays.fft,
            arrays.capacity,
            arrays.alpha,
            arrays.beta,
            tolerance,
            max_halvings,
        )
    )


def relative_gap(network: Network, flows: FlowVector, demand: DemandMatrix) -> float:
    """Normalized excess of current cost over the best linearized response.

    Zero exactly at user equilibrium; non-negative for any demand-feasible
    flow vector.
    """
    arrays = network.arrays
    f = _compact_flows(network, flows)
    costs = kernels.bpr_costs(f, arrays.fft, arrays.capacity, arrays.alpha, arrays.beta)
    _, sptt, _ = _aon_compact(network, costs, _demand_csr(network, demand))
    if sptt == 0.0:
        return 0.0
    tstt = float(np.dot(f, costs))
    return (tstt - sptt) / sptt


def solve_ue(network: Network, demand: DemandMatrix, opts: SolverOptions | None = None) -> Equilibrium:
    """Frank-Wolfe user-equilibrium assignment.

    Iterates cost update, all-or-nothing assignment, bisection line search,
    and convex combination until the relative gap reaches tolerance. The
    Beckmann objective is asserted non-increasing every iteration.
    """
    opts = opts or SolverOptions()
    arrays = network.arrays
    demand_csr = _demand_csr(network, demand)

    if len(demand_csr[3]) == 0:
        zero = _expand_flows(network, np.zeros(arrays.n_links))
        return Equilibrium(flows=zero, relative_gap=0.0, iterations=0, ttt=0.0, converged=True)

    freeflow = kernels.bpr_costs(
        np.zeros(arrays.n_links), arrays.fft, arrays.capacity, arrays.alpha, arrays.beta
    )
    flows, _, loaded = _aon_compact(network, freeflow, demand_csr)
    _check_conservation(loaded, demand_csr)

    objective = _beckmann_compact(arrays, flows)
    gap = np.inf
    converged = False
    iterations = 0
    while iterations < opts.max_iterations:
        iterations += 1
        costs = kernels.bpr_costs(flows, arrays.fft, arrays.capacity, arrays.alpha, arrays.beta)
        aux, sptt, loaded = _aon_compact(network, costs, demand_csr)
        _check_conservation(loaded, demand_csr)
        tstt = float(np.dot(flows, costs))
        if not np.isfinite(tstt):
            raise SolverError("non-finite total cost; check link capacities and demands")
        gap = (tstt - sptt) / sptt
        if gap <= opts.gap_tolerance:
            converged = True
            break
        lam = kernels.line_search_bisect(
            flows, aux, arrays.fft, arrays.capacity, arrays.alpha, arrays.beta,
            opts.line_search_tolerance, opts.line_search_max_halvings,
        )
        flows = flows + lam * (aux - flows)
        new_objective = _beckmann_compact(arrays, flows)
        if not np.isfinite(new_objective):
            raise SolverError("non-finite Beckmann objective; check link capacities")
        if new_objective > objective + max(1e-9, 1e-12 * abs(objective)):
            raise SolverError(
                f"Beckmann objective increased at iteration {iterations}: "
                f"{objective!r} -> {new_objective!r}"
            )
        objective = new_objective

    costs = kernels.bpr_costs(flows, arrays.fft, arrays.capacity, arrays.alpha, arrays.beta)
    ttt = float(np.dot(flows, costs))
    return Equilibrium(
        flows=_expand_flows(network, flows),
        relative_gap=float(gap),
        iterations=iterations,
        ttt=ttt,
        converged=converged,
    )


def _beckmann_compact(arrays, f: np.ndarray) -> float:
    integral = arrays.fft * f + (
        arrays.fft * arrays.alpha * f ** (arrays.beta + 1.0)
        / ((arrays.beta + 1.0) * arrays.capacity ** arrays.beta)
    )
    return float(np.sum(integral))


def _check_conservation(loaded: np.ndarray, demand_csr) -> None:
    _, dest_start, _, dest_demand = demand_csr
    expected = np.add.reduceat(dest_demand, dest_start[:-1])
    if not np.allclose(loaded, expected, rtol=1e-12, atol=1e-9):
        raise SolverError("assignment failed demand conservation check")
