"""Network model, TNTP parsing, and closure application."""

import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from closurelab import (
    ClosureConfig,
    DemandMatrix,
    Link,
    LinkAdjustment,
    Network,
    apply_closures,
    connectivity_check,
    dump_tntp,
    load_tntp,
    network_fingerprint,
)
from closurelab.errors import NetworkValidationError, TntpParseError
from closurelab.network import parse_tntp_network, parse_tntp_trips

from conftest import demand_of, single_link_network


class TestTntpLoading:
    def test_sioux_falls_shape(self, sioux):
        network, demand = sioux
        assert network.n_nodes == 24
        assert network.n_links == 76
        assert len(demand) == 528
        assert demand.total == 360600.0

    def test_per_link_bpr_parameters_read(self, sioux_network):
        for link in sioux_network.links:
            assert link.alpha == 0.15
            assert link.beta == 4.0

    def test_link_ids_dense_and_in_file_order(self, sioux_network):
        assert [l.id for l in sioux_network.links] == list(range(76))
        assert sioux_network.links[0].tail == 1 and sioux_network.links[0].head == 2

    def test_empty_net_source_rejected(self):
        with pytest.raises(TntpParseError, match="no link records"):
            parse_tntp_network(io.StringIO("<NUMBER OF LINKS> 0\n<END OF METADATA>\n"))

    def test_malformed_record_reports_line_number(self):
        text = "<END OF METADATA>\n\t1\t2\t100\t1\tbogus\t;\n"
        with pytest.raises(TntpParseError, match="line 2"):
            parse_tntp_network(io.StringIO(text))

    def test_short_record_rejected(self):
        with pytest.raises(TntpParseError, match="at least 5 fields"):
            parse_tntp_network(io.StringIO("<END OF METADATA>\n\t1\t2\t100\t;\n"))

    def test_dangling_trip_node_rejected(self, tmp_path):
        net = io.StringIO("<END OF METADATA>\n\t1\t2\t100\t1\t1\t;\n\t2\t1\t100\t1\t1\t;\n")
        trips = io.StringIO("Origin 1\n99 : 5.0;\n")
        with pytest.raises(NetworkValidationError, match="99"):
            load_tntp(net, trips)

    def test_trips_before_origin_header_rejected(self):
        with pytest.raises(TntpParseError, match="Origin"):
            parse_tntp_trips(io.StringIO("2 : 5.0;\n"))

    def test_zero_and_diagonal_demands_dropped(self):
        trips = io.StringIO("Origin 1\n1 : 7.0; 2 : 0.0; 3 : 4.0;\n")
        demand = parse_tntp_trips(trips)
        assert demand.entries == {(1, 3): 4.0}

    def test_roundtrip_identity(self, sioux):
        network, demand = sioux
        net_text, trips_text = dump_tntp(network, demand)
        network2, demand2 = load_tntp(io.StringIO(net_text), io.StringIO(trips_text))
        assert network2 == network
        assert demand2 == demand
        assert network_fingerprint(network2) == network_fingerprint(network)


class TestValidation:
    def test_link_invariants(self):
        with pytest.raises(NetworkValidationError):
            Link(id=0, tail=1, head=2, fft=0.0, capacity=10.0)
        with pytest.raises(NetworkValidationError):
            Link(id=0, tail=1, head=2, fft=1.0, capacity=0.0)
        with pytest.raises(NetworkValidationError):
            Link(id=0, tail=1, head=2, fft=1.0, capacity=1.0, beta=0.5)

    def test_duplicate_node_pair_rejected(self):
        links = [
            Link(id=0, tail=1, head=2, fft=1.0, capacity=1.0),
            Link(id=1, tail=1, head=2, fft=2.0, capacity=1.0),
        ]
        with pytest.raises(NetworkValidationError, match="duplicate"):
            Network([1, 2], links)

    def test_dangling_endpoint_rejected(self):
        with pytest.raises(NetworkValidationError, match="unknown"):
            Network([1], [Link(id=0, tail=1, head=2, fft=1.0, capacity=1.0)])

    def test_non_dense_ids_rejected_at_load(self):
        with pytest.raises(NetworkValidationError, match="dense"):
            Network([1, 2], [Link(id=5, tail=1, head=2, fft=1.0, capacity=1.0)])

    def test_negative_demand_rejected(self):
        with pytest.raises(NetworkValidationError):
            DemandMatrix({(1, 2): -1.0})

    def test_self_demand_rejected(self):
        with pytest.raises(NetworkValidationError):
            DemandMatrix({(1, 1): 1.0})


class TestClosureConfig:
    def test_canonical_order_and_dedup(self):
        config = ClosureConfig.of([5, 1, 3, 1])
        assert config.closed == (1, 3, 5)
        assert len(config) == 3
        assert 3 in config and 2 not in config

    def test_hashable_and_comparable(self):
        assert ClosureConfig.of([2, 1]) == ClosureConfig.of([1, 2])
        assert hash(ClosureConfig.of([1])) == hash(ClosureConfig.of([1]))

    def test_raw_constructor_rejects_unsorted(self):
        with pytest.raises(NetworkValidationError):
            ClosureConfig((3, 1))


class TestApplyClosures:
    def test_empty_closure_is_identity(self, sioux_network):
        result = apply_closures(sioux_network, ClosureConfig.of([]))
        assert result == sioux_network

    def test_removes_requested_links(self, sioux_network):
        result = apply_closures(sioux_network, ClosureConfig.of([0, 5]))
        assert result.n_links == 74
        remaining = {l.id for l in result.links}
        assert 0 not in remaining and 5 not in remaining
        assert result.link_id_space == 76

    def test_idempotent(self, sioux_network):
        config = ClosureConfig.of([0, 5])
        once = apply_closures(sioux_network, config)
        # ids 0 and 5 no longer exist, so re-applying must use the original
        assert apply_closures(sioux_network, config) == once

    def test_original_unmodified(self, sioux_network):
        before = sioux_network.n_links
        apply_closures(sioux_network, ClosureConfig.of([3]))
        assert sioux_network.n_links == before

    def test_unknown_link_rejected(self, sioux_network):
        with pytest.raises(NetworkValidationError, match="unknown link"):
            apply_closures(sioux_network, ClosureConfig.of([76]))

    @given(st.sets(st.integers(min_value=0, max_value=75), max_size=6))
    @settings(max_examples=25, deadline=None)
    def test_composition_for_disjoint_configs(self, ids):
        network, _ = load_sioux_cached()
        ids = sorted(ids)
        half = len(ids) // 2
        c1, c2 = ClosureConfig.of(ids[:half]), ClosureConfig.of(ids[half:])
        combined = apply_closures(network, c1.union(c2))
        staged = apply_closures(apply_closures(network, c1), c2)
        assert combined == staged

    def test_partial_closure_adjusts_instead_of_removing(self, sioux_network):
        adj = {3: LinkAdjustment(capacity_factor=0.5, fft_factor=2.0)}
        result = apply_closures(sioux_network, ClosureConfig.of([3, 4]), adjustments=adj)
        assert result.n_links == 75
        kept = result.link_by_id(3)
        original = sioux_network.link_by_id(3)
        assert kept.capacity == original.capacity * 0.5
        assert kept.fft == original.fft * 2.0


_SIOUX_CACHE = []


def load_sioux_cached():
    if not _SIOUX_CACHE:
        from closurelab import bundled_sioux_falls

        _SIOUX_CACHE.append(bundled_sioux_falls())
    return _SIOUX_CACHE[0]


class TestConnectivity:
    def test_baseline_fully_connected(self, sioux):
        network, demand = sioux
        assert connectivity_check(network, demand) == []

    def test_isolated_origin_reports_all_pairs(self, sioux):
        network, demand = sioux
        out_links = [l.id for l in network.links if l.tail == 1]
        closed = apply_closures(network, ClosureConfig.of(out_links))
        missing = connectivity_check(closed, demand)
        from_origin = [(o, d) for o, d in missing if o == 1]
        expected = sorted(d for (o, d), v in demand.entries.items() if o == 1 and v > 0)
        assert sorted(d for _, d in from_origin) == expected

    def test_non_cut_closure_stays_connected(self, sioux):
        network, demand = sioux
        closed = apply_closures(network, ClosureConfig.of([0]))
        assert connectivity_check(closed, demand) == []

    def test_severed_single_link_network(self):
        network = single_link_network()
        demand = demand_of({(1, 2): 5.0})
        closed = apply_closures(network, ClosureConfig.of([0]))
        assert connectivity_check(closed, demand) == [(1, 2)]
