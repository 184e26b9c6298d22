"""Numba kernels for the equilibrium solver's hot path.

Everything here operates on the flat arrays of ``NetworkArrays`` (compact
link positions, dense node indices). Kernels are compiled with ``nogil`` so
scenario labeling can run them from worker threads concurrently.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True, nogil=True)
def bpr_costs(flow, fft, capacity, alpha, beta):
    """Vector BPR delay: fft * (1 + alpha * (flow/capacity)**beta)."""
    m = flow.shape[0]
    out = np.empty(m, dtype=np.float64)
    for i in range(m):
        out[i] = fft[i] * (1.0 + alpha[i] * (flow[i] / capacity[i]) ** beta[i])
    return out


@njit(cache=True, nogil=True)
def _dijkstra_dense(origin, n_nodes, costs, out_start, out_link, head):
    """Single-source shortest distances; O(n^2) scan, exact for tiny graphs."""
    dist = np.full(n_nodes, INF)
    done = np.zeros(n_nodes, dtype=np.bool_)
    dist[origin] = 0.0
    for _ in range(n_nodes):
        best = -1
        best_d = INF
        for v in range(n_nodes):
            if not done[v] and dist[v] < best_d:
                best_d = dist[v]
                best = v
        if best < 0:
            break
        done[best] = True
        for k in range(out_start[best], out_start[best + 1]):
            l = out_link[k]
            nd = best_d + costs[l]
            if nd < dist[head[l]]:
                dist[head[l]] = nd
    return dist


@njit(cache=True, nogil=True)
def _predecessor_links(origin, dist, costs, in_start, in_link, tail):
    """Per-node predecessor link on a shortest-path tree.

    Among in-links attaining dist[tail] + cost == dist[node] exactly, the one
    with the lowest link id wins (in_link is ordered by link id within each
    head node), which makes downstream assignment deterministic.
    """
    n_nodes = dist.shape[0]
    pred = np.full(n_nodes, -1, dtype=np.int64)
    for v in range(n_nodes):
        if v == origin or dist[v] == INF:
            continue
        for k in range(in_start[v], in_start[v + 1]):
            l = in_link[k]
            if dist[tail[l]] + costs[l] == dist[v]:
                pred[v] = l
                break
    return pred


@njit(cache=True, nogil=True)
def aon_assign(costs, n_nodes, out_start, out_link, head, in_start, in_link, tail,
               origins, dest_start, dest_node, dest_demand):
    """All-or-nothing assignment over every origin's shortest-path tree.

    Returns (link flows, shortest-path total travel time, demand loaded per
    origin, first disconnected origin position, first disconnected node).
    A negative origin position means all demand was routed.
    """
    m = costs.shape[0]
    flows = np.zeros(m, dtype=np.float64)
    loaded = np.zeros(origins.shape[0], dtype=np.float64)
    sptt = 0.0
    for oi in range(origins.shape[0]):
        origin = origins[oi]
        dist = _dijkstra_dense(origin, n_nodes, costs, out_start, out_link, head)
        pred = _predecessor_links(origin, dist, costs, in_start, in_link, tail)
        for k in range(dest_start[oi], dest_start[oi + 1]):
            d = dest_node[k]
            demand = dest_demand[k]
            if dist[d] == INF:
                return flows, sptt, loaded, oi, d
            sptt += dist[d] * demand
            j = d
            while j != origin:
                l = pred[j]
                flows[l] += demand
                j = tail[l]
            loaded[oi] += demand
    return flows, sptt, loaded, -1, -1


@njit(cache=True, nogil=True)
def shortest_path_tree(origin, costs, n_nodes, out_start, out_link, head,
                       in_start, in_link, tail):
    """Distances and predecessor links for one origin (diagnostic helper)."""
    dist = _dijkstra_dense(origin, n_nodes, costs, out_start, out_link, head)
    pred = _predecessor_links(origin, dist, costs, in_start, in_link, tail)
    return dist, pred


@njit(cache=True, nogil=True)
def _directional_derivative(lam, current, direction, fft, capacity, alpha, beta):
    g = 0.0
    m = current.shape[0]
    for i in range(m):
        x = current[i] + lam * direction[i]
        c = fft[i] * (1.0 + alpha[i] * (x / capacity[i]) ** beta[i])
        g += direction[i] * c
    return g


@njit(cache=True, nogil=True)
def line_search_bisect(current, auxiliary, fft, capacity, alpha, beta, tol, max_halvings):
    """Step size minimizing the Beckmann objective along current -> auxiliary.

    Bisection on the directional derivative g(lam) = sum (y-f) * c(f+lam(y-f));
    g is nondecreasing because the objective is convex.
    """
    m = current.shape[0]
    direction = np.empty(m, dtype=np.float64)
    moved = False
    for i in range(m):
        direction[i] = auxiliary[i] - current[i]
        if direction[i] != 0.0:
            moved = True
    if not moved:
        return 0.0
    g0 = _directional_derivative(0.0, current, direction, fft, capacity, alpha, beta)
    if g0 >= 0.0:
        return 0.0
    g1 = _directional_derivative(1.0, current, direction, fft, capacity, alpha, beta)
    if g1 <= 0.0:
        return 1.0
    lo = 0.0
    hi = 1.0
    for _ in range(max_halvings):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        g = _directional_derivative(mid, current, direction, fft, capacity, alpha, beta)
        if g == 0.0:
            return mid
        if g > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
