"""Scenario sampling, labeling, and dataset persistence."""

import io

import numpy as np
import pytest

from closurelab import ClosureConfig, SolverOptions, apply_closures
from closurelab.errors import DatasetError
from closurelab.scenarios import (
    Dataset,
    InfeasibleClosure,
    LabeledScenario,
    SamplerConfig,
    generate_dataset,
    label_scenario,
    load_dataset,
    sample_closure_config,
    save_dataset,
)

FAST = SolverOptions(gap_tolerance=1e-3, max_iterations=2000)


class TestSampler:
    def test_single_link_range(self):
        rng = np.random.default_rng(1)
        config = sample_closure_config(rng, 76, (1, 1))
        assert len(config) == 1

    def test_deterministic_given_seed(self):
        a = sample_closure_config(np.random.default_rng(42), 76, (1, 5))
        b = sample_closure_config(np.random.default_rng(42), 76, (1, 5))
        assert a == b

    def test_invalid_range_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_closure_config(rng, 76, (3, 2))
        with pytest.raises(ValueError):
            sample_closure_config(rng, 76, (1, 77))

    def test_size_frequencies_uniform(self):
        rng = np.random.default_rng(7)
        counts = {s: 0 for s in range(1, 6)}
        for _ in range(10_000):
            counts[len(sample_closure_config(rng, 76, (1, 5)))] += 1
        # binomial(10000, 1/5): sigma = sqrt(10000 * 0.2 * 0.8) = 40
        for size, count in counts.items():
            assert abs(count - 2000) <= 3 * 40, (size, count)


class TestLabeling:
    def test_empty_closure_matches_baseline(self, sioux, default_opts, sioux_baseline):
        network, demand = sioux
        scenario = label_scenario(network, demand, ClosureConfig.of([]), default_opts)
        assert isinstance(scenario, LabeledScenario)
        assert scenario.ttt == sioux_baseline.ttt
        assert scenario.gap <= default_opts.gap_tolerance

    def test_severed_origin_reported_infeasible(self, sioux):
        network, demand = sioux
        out_links = [l.id for l in network.links if l.tail == 1]
        outcome = label_scenario(network, demand, ClosureConfig.of(out_links), FAST)
        assert isinstance(outcome, InfeasibleClosure)
        assert all(o == 1 for o, _ in outcome.disconnected_pairs)

    def test_nested_closures_monotone(self, sioux):
        network, demand = sioux
        small = label_scenario(network, demand, ClosureConfig.of([11]), FAST)
        large = label_scenario(network, demand, ClosureConfig.of([11, 30]), FAST)
        assert small.ttt <= large.ttt * (1 + 2 * FAST.gap_tolerance)

    def test_solve_time_is_deterministic_effort(self, sioux, default_opts):
        network, demand = sioux
        a = label_scenario(network, demand, ClosureConfig.of([4]), default_opts)
        b = label_scenario(network, demand, ClosureConfig.of([4]), default_opts)
        assert a.solve_time == b.solve_time > 0


class TestGenerateDataset:
    def test_baseline_only(self, sioux):
        network, demand = sioux
        dataset = generate_dataset(network, demand, 1, SamplerConfig(0, 0, seed=3), FAST)
        assert len(dataset) == 1
        assert dataset.scenarios[0].config == ClosureConfig.of([])

    def test_unique_configs_and_reproducible(self, sioux):
        network, demand = sioux
        sampler = SamplerConfig(1, 3, seed=11)
        d1 = generate_dataset(network, demand, 25, sampler, FAST)
        d2 = generate_dataset(network, demand, 25, sampler, FAST)
        assert d1.scenarios == d2.scenarios
        assert len(set(d1.configs())) == 25

    def test_worker_count_invariant(self, sioux):
        network, demand = sioux
        sampler = SamplerConfig(1, 3, seed=5)
        serial = generate_dataset(network, demand, 20, sampler, FAST, workers=1)
        threaded = generate_dataset(network, demand, 20, sampler, FAST, workers=8)
        assert serial.scenarios == threaded.scenarios

    def test_all_retained_scenarios_converged(self, sioux):
        network, demand = sioux
        dataset = generate_dataset(network, demand, 10, SamplerConfig(1, 4, seed=2), FAST)
        assert all(s.gap <= FAST.gap_tolerance for s in dataset.scenarios)

    def test_exhaustion_raises(self, sioux):
        network, demand = sioux
        # only 76 singleton configs exist; asking for more must fail
        with pytest.raises(DatasetError, match="exhausted"):
            generate_dataset(network, demand, 80, SamplerConfig(1, 1, seed=1), FAST,
                             max_attempts=500)

    def test_n_zero_rejected(self, sioux):
        network, demand = sioux
        with pytest.raises(ValueError, match=">= 1"):
            generate_dataset(network, demand, 0, SamplerConfig(1, 1, seed=1), FAST)


class TestPersistence:
    def make_dataset(self, sioux):
        network, demand = sioux
        return generate_dataset(network, demand, 8, SamplerConfig(1, 3, seed=9), FAST)

    def test_roundtrip(self, sioux, tmp_path):
        dataset = self.make_dataset(sioux)
        path = tmp_path / "data.jsonl"
        save_dataset(dataset, path)
        loaded = load_dataset(path, network=sioux[0])
        assert loaded.scenarios == dataset.scenarios
        assert loaded.network_fingerprint == dataset.network_fingerprint
        assert loaded.rng_seed == dataset.rng_seed
        assert loaded.solver == dataset.solver

    def test_bytes_stable_across_saves(self, sioux):
        dataset = self.make_dataset(sioux)
        a, b = io.StringIO(), io.StringIO()
        save_dataset(dataset, a)
        save_dataset(dataset, b)
        assert a.getvalue() == b.getvalue()

    def test_fingerprint_mismatch_rejected(self, sioux, tmp_path):
        network, demand = sioux
        dataset = self.make_dataset(sioux)
        path = tmp_path / "data.jsonl"
        save_dataset(dataset, path)
        other = apply_closures(network, ClosureConfig.of([0]))
        with pytest.raises(DatasetError, match="fingerprint"):
            load_dataset(path, network=other)

    def test_malformed_line_reports_number(self, sioux, tmp_path):
        dataset = self.make_dataset(sioux)
        path = tmp_path / "data.jsonl"
        save_dataset(dataset, path)
        lines = path.read_text().splitlines()
        lines[3] = '{"closed": [1], "ttt": "broken"}'
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="line 4"):
            load_dataset(path)

    def test_empty_dataset_file_is_header_only(self, sioux, tmp_path):
        dataset = Dataset(scenarios=[], network_fingerprint="abc", rng_seed=0)
        path = tmp_path / "empty.jsonl"
        save_dataset(dataset, path)
        assert len(path.read_text().splitlines()) == 1
        loaded = load_dataset(path)
        assert loaded.scenarios == []

    def test_duplicate_configs_rejected(self):
        scenario = LabeledScenario(ClosureConfig.of([1]), ttt=10.0, gap=0.0, solve_time=0.1)
        with pytest.raises(DatasetError, match="duplicate"):
            Dataset(scenarios=[scenario, scenario], network_fingerprint="x", rng_seed=0)
