"""Centrality implementations against the networkx reference."""

import networkx as nx
import pytest

from closurelab import Link, Network
from closurelab.centrality import edge_betweenness, link_endpoint_closeness, node_closeness


def to_networkx(network):
    g = nx.DiGraph()
    g.add_nodes_from(network.nodes)
    for link in network.links:
        g.add_edge(link.tail, link.head, weight=link.fft)
    return g


def diamond_network():
    """Two equal-cost routes 1->4 plus a slow bypass; exercises tie counting."""
    links = [
        Link(id=0, tail=1, head=2, fft=1.0, capacity=10.0),
        Link(id=1, tail=1, head=3, fft=1.0, capacity=10.0),
        Link(id=2, tail=2, head=4, fft=1.0, capacity=10.0),
        Link(id=3, tail=3, head=4, fft=1.0, capacity=10.0),
        Link(id=4, tail=1, head=4, fft=5.0, capacity=10.0),
    ]
    return Network([1, 2, 3, 4], links)


class TestEdgeBetweenness:
    def test_matches_networkx_on_diamond(self):
        network = diamond_network()
        mine = edge_betweenness(network)
        theirs = nx.edge_betweenness_centrality(to_networkx(network), normalized=False, weight="weight")
        for link in network.links:
            assert mine[link.id] == pytest.approx(theirs[(link.tail, link.head)], rel=1e-12)

    def test_matches_networkx_on_sioux_falls(self, sioux_network):
        mine = edge_betweenness(sioux_network)
        theirs = nx.edge_betweenness_centrality(
            to_networkx(sioux_network), normalized=False, weight="weight"
        )
        for link in sioux_network.links:
            assert mine[link.id] == pytest.approx(theirs[(link.tail, link.head)], rel=1e-9)

    def test_tied_paths_share_credit(self):
        network = diamond_network()
        scores = edge_betweenness(network)
        # the 1->4 movement splits evenly across the two 2-hop routes
        assert scores[0] == scores[1]
        assert scores[2] == scores[3]
        assert scores[4] == 0.0


class TestCloseness:
    def test_matches_networkx_on_sioux_falls(self, sioux_network):
        mine = node_closeness(sioux_network)
        theirs = nx.closeness_centrality(to_networkx(sioux_network), distance="weight")
        for node in sioux_network.nodes:
            assert mine[node] == pytest.approx(theirs[node], rel=1e-12)

    def test_link_closeness_is_endpoint_mean(self, sioux_network):
        node_scores = node_closeness(sioux_network)
        link_scores = link_endpoint_closeness(sioux_network)
        for link in sioux_network.links:
            expected = 0.5 * (node_scores[link.tail] + node_scores[link.head])
            assert link_scores[link.id] == expected
