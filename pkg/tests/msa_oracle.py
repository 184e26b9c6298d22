"""Independent traffic-assignment oracle: successive averages with step 1/k.

Deliberately shares no code with the package solver. Shortest paths come from
scipy's compiled dijkstra, link delays and the assignment loop are written
from scratch here, so agreement between the two solvers is meaningful
evidence of correctness.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


class MsaResult:
    def __init__(self, ttt, gap, iterations, flows):
        self.ttt = ttt
        self.gap = gap
        self.iterations = iterations
        self.flows = flows


def _delays(network_rows, flows):
    fft, cap, alpha, beta = network_rows
    return fft * (1.0 + alpha * (flows / cap) ** beta)


def msa_solve(network, demand, gap_tolerance=1e-4, max_iterations=200_000):
    """Method of Successive Averages user-equilibrium assignment."""
    links = list(network.links)
    m = len(links)
    node_ids = sorted(network.nodes)
    n = len(node_ids)
    idx = {node: i for i, node in enumerate(node_ids)}
    tails = np.array([idx[l.tail] for l in links])
    heads = np.array([idx[l.head] for l in links])
    rows = (
        np.array([l.fft for l in links]),
        np.array([l.capacity for l in links]),
        np.array([l.alpha for l in links]),
        np.array([l.beta for l in links]),
    )
    link_pos = {(int(t), int(h)): p for p, (t, h) in enumerate(zip(tails, heads))}

    od = sorted(demand.entries.items())
    origins = sorted({idx[o] for (o, _), _ in od})
    origin_row = {o: r for r, o in enumerate(origins)}
    dest_lists = {o: ([], []) for o in origins}
    for (o, d), value in od:
        dest_lists[idx[o]][0].append(idx[d])
        dest_lists[idx[o]][1].append(value)
    dest_arrays = {
        o: (np.array(ds, dtype=np.intp), np.array(vs)) for o, (ds, vs) in dest_lists.items()
    }

    def assign(costs):
        graph = csr_matrix((costs, (tails, heads)), shape=(n, n))
        dist, preds = dijkstra(graph, indices=origins, return_predecessors=True)
        aux = np.zeros(m)
        sptt = 0.0
        for o in origins:
            r = origin_row[o]
            dests, values = dest_arrays[o]
            if np.any(np.isinf(dist[r, dests])):
                bad = dests[np.isinf(dist[r, dests])][0]
                raise RuntimeError(f"disconnected OD pair {node_ids[o]}->{node_ids[bad]}")
            sptt += float(np.dot(dist[r, dests], values))
            node_load = np.zeros(n)
            node_load[dests] += values
            order = np.argsort(-dist[r])
            for j in order:
                load = node_load[j]
                if load <= 0.0 or j == o:
                    continue
                i = preds[r, j]
                aux[link_pos[(int(i), int(j))]] += load
                node_load[i] += load
        return aux, sptt

    flows, _ = assign(_delays(rows, np.zeros(m)))
    gap = np.inf
    iterations = 0
    for k in range(2, max_iterations + 2):
        costs = _delays(rows, flows)
        aux, sptt = assign(costs)
        tstt = float(np.dot(flows, costs))
        gap = (tstt - sptt) / sptt
        iterations += 1
        if gap <= gap_tolerance:
            break
        flows = flows + (aux - flows) / k

    costs = _delays(rows, flows)
    return MsaResult(
        ttt=float(np.dot(flows, costs)),
        gap=float(gap),
        iterations=iterations,
        flows=flows,
    )
