"""Weighted centrality measures on the baseline digraph.

Small-network implementations (Brandes accumulation for edge betweenness,
reverse Dijkstra for closeness); weights are free-flow travel times.
"""

from __future__ import annotations

import heapq
from collections import defaultdict

from .network import Network


def _weighted_adjacency(network: Network, reverse: bool = False):
    adj: dict[int, list[tuple[int, float, int]]] = defaultdict(list)
    for link in network.links:
        if reverse:
            adj[link.head].append((link.tail, link.fft, link.id))
        else:
            adj[link.tail].append((link.head, link.fft, link.id))
    return adj


def _dijkstra_multi(adj, source, nodes):
    """Distances, path counts, and predecessor lists from one source."""
    dist = {n: float("inf") for n in nodes}
    sigma = {n: 0.0 for n in nodes}
    preds: dict[int, list[int]] = {n: [] for n in nodes}
    dist[source] = 0.0
    sigma[source] = 1.0
    settled_order = []
    seen = set()
    heap = [(0.0, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if v in seen:
            continue
        seen.add(v)
        settled_order.append(v)
        for w, weight, _ in adj.get(v, ()):
            nd = d + weight
            if nd < dist[w]:
                dist[w] = nd
                sigma[w] = sigma[v]
                preds[w] = [v]
                heapq.heappush(heap, (nd, w))
            elif nd == dist[w]:
                sigma[w] += sigma[v]
                preds[w].append(v)
    return dist, sigma, preds, settled_order


def edge_betweenness(network: Network) -> dict[int, float]:
    """Raw (non-normalized) shortest-path edge betweenness, fft-weighted.

    Each directed OD pair contributes the fraction of its shortest paths that
    traverse the link.
    """
    nodes = list(network.nodes)
    adj = _weighted_adjacency(network)
    link_of = {(l.tail, l.head): l.id for l in network.links}
    scores = {l.id: 0.0 for l in network.links}
    for source in nodes:
        dist, sigma, preds, order = _dijkstra_multi(adj, source, nodes)
        delta = {n: 0.0 for n in nodes}
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w] if sigma[w] > 0 else 0.0
            for v in preds[w]:
                contribution = sigma[v] * coeff
                scores[link_of[(v, w)]] += contribution
                delta[v] += contribution
            # endpoints excluded: delta[w] accumulates only pass-through credit
    return scores


def node_closeness(network: Network) -> dict[int, float]:
    """Incoming-distance closeness centrality, fft-weighted.

    Uses the reachable-count scaling (r-1)^2 / (sum_dist * (n-1)) so partially
    reachable nodes are not over-credited.
    """
    nodes = list(network.nodes)
    n = len(nodes)
    reverse_adj = _weighted_adjacency(network, reverse=True)
    out = {}
    for v in nodes:
        dist, _, _, order = _dijkstra_multi(reverse_adj, v, nodes)
        reachable = [u for u in order if u != v]
        total = sum(dist[u] for u in reachable)
        r = len(reachable) + 1
        if total > 0 and n > 1:
            out[v] = ((r - 1) / total) * ((r - 1) / (n - 1))
        else:
            out[v] = 0.0
    return out


def link_endpoint_closeness(network: Network) -> dict[int, float]:
    """Per-link closeness: mean of tail and head node closeness."""
    closeness = node_closeness(network)
    return {l.id: 0.5 * (closeness[l.tail] + closeness[l.head]) for l in network.links}
