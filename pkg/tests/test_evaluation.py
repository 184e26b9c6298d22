"""Online evaluation protocol, metrics, and report rendering."""

import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from closurelab import ClosureConfig
from closurelab.errors import ModelError
from closurelab.evaluation import (
    EvalConfig,
    EvalReport,
    IterationRecord,
    compute_metrics,
    emit_report,
    format_averages_table,
    render_pinball_svg,
    run_online_eval,
    summarize,
)
from closurelab.features import BaselineStats, FeatureSpec
from closurelab.models import ModelSpec
from closurelab.scenarios import Dataset, LabeledScenario


class TestComputeMetrics:
    def test_single_underestimate(self):
        metrics = compute_metrics([100.0], [90.0], 0.05)
        assert metrics["mae"] == 10.0
        assert metrics["bias"] == -10.0
        assert metrics["mape"] == 10.0
        assert metrics["pinball"] == pytest.approx(0.5, abs=1e-12)

    def test_perfect_prediction(self):
        metrics = compute_metrics([50.0, 60.0], [50.0, 60.0], 0.05)
        assert all(v == 0.0 for v in metrics.values())

    def test_mixed_pair(self):
        metrics = compute_metrics([100.0, 100.0], [90.0, 110.0], 0.05)
        assert metrics["mae"] == 10.0
        assert metrics["bias"] == 0.0
        assert metrics["mape"] == 10.0
        assert metrics["pinball"] == pytest.approx(5.0, abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([1.0, 2.0], [1.0], 0.05)

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError, match="MAPE"):
            compute_metrics([0.0], [1.0], 0.05)


def synthetic_world(n_rows=120, seed=0, project_count=12):
    """A cheap fake: additive per-link travel-time effects, no solver."""
    rng = np.random.default_rng(seed)
    effects = rng.uniform(50.0, 400.0, size=project_count)
    baseline = 10_000.0

    def ttt_of(ids):
        return baseline + float(sum(effects[i] for i in ids)) * (1.0 + 0.02 * len(ids))

    seen = set()
    scenarios = []
    while len(scenarios) < n_rows:
        size = int(rng.integers(1, 5))
        ids = tuple(sorted(rng.choice(project_count, size=size, replace=False)))
        if ids in seen:
            continue
        seen.add(ids)
        scenarios.append(
            LabeledScenario(
                config=ClosureConfig.of(ids), ttt=ttt_of(ids), gap=1e-5, solve_time=0.01
            )
        )
    dataset = Dataset(scenarios=scenarios, network_fingerprint="synthetic", rng_seed=seed)

    space = project_count
    stats = BaselineStats(
        link_ids=tuple(range(space)),
        flow=np.linspace(100, 400, space),
        cost=np.linspace(1, 8, space),
        betweenness=np.linspace(0, 10, space),
        closeness=np.linspace(0.2, 0.9, space),
        fft=np.linspace(2, 9, space),
        capacity=np.linspace(500, 2000, space),
        baseline_ttt=baseline,
    )
    return dataset, stats


FAST_SPEC = FeatureSpec(representation="combined", include_csh=True)


def fast_models():
    return [
        "csh",
        "cash",
        "csuph",
        ModelSpec("log_ols"),
        ModelSpec("gbt", hyperparameters={"trees": 20, "depth": 3}),
    ]


class TestRunOnlineEval:
    def test_iteration_zero_csh_predicts_baseline(self, tmp_path):
        dataset, stats = synthetic_world()
        config = EvalConfig(batch_size=20, iterations=2, seed=0)
        report = run_online_eval(dataset, ["csh"], config, stats, FAST_SPEC,
                                 store_predictions=True)
        first = report.predictions[(0, "csh")]
        assert np.all(first == stats.baseline_ttt)

    def test_counts_and_shapes(self):
        dataset, stats = synthetic_world()
        config = EvalConfig(batch_size=20, iterations=3)
        report = run_online_eval(dataset, fast_models(), config, stats, FAST_SPEC)
        assert len(report.records) == 3 * len(fast_models())
        assert set(report.averages) == {"csh", "cash", "csuph", "log_ols", "gbt"}

    def test_iterations_truncated_to_data(self):
        dataset, stats = synthetic_world(n_rows=60)
        config = EvalConfig(batch_size=20, iterations=50)
        report = run_online_eval(dataset, ["csh"], config, stats, FAST_SPEC)
        assert max(r.iteration for r in report.records) == 1  # 60 rows / 20 - 1

    def test_empty_model_list_rejected(self):
        dataset, stats = synthetic_world()
        with pytest.raises(ModelError, match="empty"):
            run_online_eval(dataset, [], EvalConfig(), stats, FAST_SPEC)

    def test_unknown_heuristic_rejected(self):
        dataset, stats = synthetic_world()
        with pytest.raises(ModelError, match="unknown heuristic"):
            run_online_eval(dataset, ["nearest"], EvalConfig(), stats, FAST_SPEC)

    def test_duplicate_names_rejected(self):
        dataset, stats = synthetic_world()
        with pytest.raises(ModelError, match="duplicate"):
            run_online_eval(dataset, ["csh", "csh"], EvalConfig(), stats, FAST_SPEC)

    def test_deterministic_metrics_across_runs(self):
        dataset, stats = synthetic_world()
        config = EvalConfig(batch_size=20, iterations=3)
        a = run_online_eval(dataset, fast_models(), config, stats, FAST_SPEC)
        b = run_online_eval(dataset, fast_models(), config, stats, FAST_SPEC)
        assert a.records == b.records
        assert a.averages == b.averages

    def test_time_cap_terminates_model(self):
        dataset, stats = synthetic_world()
        config = EvalConfig(batch_size=20, iterations=4, time_cap_seconds=1e-9,
                            time_cap_window=1)
        report = run_online_eval(dataset, ["csh"], config, stats, FAST_SPEC)
        assert report.averages["csh"]["terminated_at"] == 0
        assert len([r for r in report.records if r.model == "csh"]) == 1
        assert report.records[0].terminated

    def test_generous_cap_never_terminates(self):
        dataset, stats = synthetic_world()
        config = EvalConfig(batch_size=20, iterations=3, time_cap_seconds=3600)
        report = run_online_eval(dataset, ["csh"], config, stats, FAST_SPEC)
        assert report.averages["csh"]["terminated_at"] is None

    def test_antileakage_future_rows_do_not_matter(self):
        dataset, stats = synthetic_world(n_rows=80)
        config = EvalConfig(batch_size=20, iterations=2)
        models = fast_models()
        base = run_online_eval(dataset, models, config, stats, FAST_SPEC,
                               store_predictions=True)

        # corrupt every label from iteration 2's test batch onward (rows >= 40)
        mutated = [
            s if i < 40 else LabeledScenario(s.config, s.ttt * 7.7, s.gap, s.solve_time)
            for i, s in enumerate(dataset.scenarios)
        ]
        other_dataset = Dataset(
            scenarios=mutated,
            network_fingerprint=dataset.network_fingerprint,
            rng_seed=dataset.rng_seed,
        )
        other = run_online_eval(other_dataset, models, config, stats, FAST_SPEC,
                                store_predictions=True)
        for t in (0, 1):
            for name in ("csh", "cash", "csuph", "log_ols", "gbt"):
                assert np.array_equal(base.predictions[(t, name)],
                                      other.predictions[(t, name)]), (t, name)

    def test_mutating_test_labels_leaves_predictions_unchanged(self):
        dataset, stats = synthetic_world(n_rows=60)
        config = EvalConfig(batch_size=20, iterations=2)
        base = run_online_eval(dataset, ["csh", ModelSpec("log_ols")], config, stats,
                               FAST_SPEC, store_predictions=True)
        # scale iteration-1 test labels (rows 20..39); training rows stay intact
        mutated = [
            s if not 20 <= i < 40 else LabeledScenario(s.config, s.ttt * 3.3, s.gap, s.solve_time)
            for i, s in enumerate(dataset.scenarios)
        ]
        other_dataset = Dataset(
            scenarios=mutated,
            network_fingerprint=dataset.network_fingerprint,
            rng_seed=dataset.rng_seed,
        )
        other = run_online_eval(other_dataset, ["csh", ModelSpec("log_ols")], config, stats,
                                FAST_SPEC, store_predictions=True)
        for name in ("csh", "log_ols"):
            assert np.array_equal(base.predictions[(1, name)], other.predictions[(1, name)])


class TestSummaries:
    def records_fixture(self):
        rows = []
        for t in range(4):
            rows.append(IterationRecord(t, "m", mae=10.0 + t, pinball=1.0, bias=-1.0,
                                        mape=5.0 if t < 3 else 500.0))
        return rows

    def test_averages_recomputable(self):
        records = self.records_fixture()
        averages = summarize(records)["m"]
        assert averages["mae"] == pytest.approx(np.mean([10, 11, 12, 13]), abs=1e-12)
        assert averages["iterations_completed"] == 4

    def test_outlier_filtering_drops_extreme_mape(self):
        averages = summarize(self.records_fixture())["m"]
        # median mape = 5; 500 > 50 gets dropped in the filtered variant
        assert averages["filtered_iterations"] == 3
        assert averages["mape_filtered"] == pytest.approx(5.0)
        assert averages["mape"] == pytest.approx(np.mean([5, 5, 5, 500]))


class TestReportIO:
    def make_report(self):
        dataset, stats = synthetic_world()
        config = EvalConfig(batch_size=20, iterations=3)
        return run_online_eval(dataset, ["csh", ModelSpec("log_ols")], config, stats, FAST_SPEC)

    def test_save_load_roundtrip_checks_averages(self):
        report = self.make_report()
        sink = io.StringIO()
        report.save(sink)
        sink.seek(0)
        loaded = EvalReport.load(sink)
        assert loaded.records == report.records
        assert loaded.averages == report.averages

    def test_load_rejects_tampered_averages(self):
        report = self.make_report()
        sink = io.StringIO()
        report.save(sink)
        import json

        payload = json.loads(sink.getvalue())
        payload["averages"]["csh"]["mae"] += 1.0
        with pytest.raises(ValueError, match="does not match"):
            EvalReport.load(io.StringIO(json.dumps(payload)))

    def test_emit_report_files(self, tmp_path):
        report = self.make_report()
        written = emit_report(report, tmp_path)
        names = {p.name for p in written}
        assert {"iterations.csv", "averages.csv", "pinball.svg", "timings.csv"} <= names

        lines = (tmp_path / "iterations.csv").read_text().splitlines()
        assert lines[0] == "iteration,model,mae,pinball,bias,mape,terminated"
        assert len(lines) == 1 + 2 * 3  # header + 2 models x 3 iterations

        averages = (tmp_path / "averages.csv").read_text().splitlines()
        assert len(averages) == 1 + 2 * 2  # header + 2 models x (raw, filtered)

    def test_svg_is_wellformed_xml(self, tmp_path):
        report = self.make_report()
        svg = render_pinball_svg(report)
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        polylines = [e for e in root.iter() if e.tag.endswith("polyline")]
        assert len(polylines) == 2

    def test_deterministic_files_stable_across_rerenders(self, tmp_path):
        report = self.make_report()
        emit_report(report, tmp_path / "a")
        emit_report(report, tmp_path / "b")
        for name in ("iterations.csv", "averages.csv", "pinball.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_table_rendering(self):
        report = self.make_report()
        table = format_averages_table(report)
        assert "csh" in table and "log_ols" in table
