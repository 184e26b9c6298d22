"""Online-learning benchmark: incremental batches, retraining, and metrics.

Each iteration t trains every live predictor on dataset rows [0, t*B), then
scores its conservative predictions on rows [t*B, (t+1)*B). Heuristics use a
subset index built from the same training rows. Wall-clock seconds feed the
time-cap rule only and are quarantined in a diagnostic sidecar; every other
output is a pure function of (dataset, model list, config).
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ModelError
from .features import BaselineStats, FeatureSpec, build_feature_matrix
from .heuristics import SubsetIndex, cash, csh, csuph, index_insert
from .models import ModelSpec, fit as fit_model, pinball_loss
from .scenarios import Dataset

HEURISTIC_NAMES = ("csh", "cash", "csuph")

METRIC_NAMES = ("mae", "pinball", "bias", "mape")


@dataclass(frozen=True)
class EvalConfig:
    """Online protocol parameters."""

    batch_size: int = 200
    iterations: int = 20
    tau: float = 0.05
    time_cap_seconds: float = 600.0
    time_cap_window: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1 or self.time_cap_window < 1:
            raise ValueError("batch_size, iterations, and time_cap_window must be >= 1")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.time_cap_seconds <= 0:
            raise ValueError("time_cap_seconds must be positive")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "tau": self.tau,
            "time_cap_seconds": self.time_cap_seconds,
            "time_cap_window": self.time_cap_window,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class IterationRecord:
    """Metrics for one model at one iteration; ``terminated`` marks its last."""

    iteration: int
    model: str
    mae: float
    pinball: float
    bias: float
    mape: float
    terminated: bool = False


@dataclass
class EvalReport:
    records: list[IterationRecord]
    averages: dict[str, dict]
    provenance: dict
    timings: dict[str, list[float]] = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)

    def save(self, sink) -> None:
        """Serialize the deterministic portion of the report (no wall times)."""
        payload = {
            "format": "closurelab-report",
            "version": 1,
            "provenance": self.provenance,
            "records": [
                {
                    "iteration": r.iteration,
                    "model": r.model,
                    "mae": r.mae,
                    "pinball": r.pinball,
                    "bias": r.bias,
                    "mape": r.mape,
                    "terminated": r.terminated,
                }
                for r in self.records
            ],
            "averages": self.averages,
        }
        text = json.dumps(payload, sort_keys=True, indent=1)
        if isinstance(sink, (str, Path)):
            Path(sink).write_text(text, encoding="utf-8")
        else:
            sink.write(text)

    @staticmethod
    def load(source) -> "EvalReport":
        if isinstance(source, (str, Path)):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source.read()
        payload = json.loads(text)
        if payload.get("format") != "closurelab-report":
            raise ValueError("not a saved evaluation report")
        records = [IterationRecord(**r) for r in payload["records"]]
        report = EvalReport(
            records=records, averages=payload["averages"], provenance=payload["provenance"]
        )
        recomputed = summarize(records)
        for model, stats in recomputed.items():
            stored = report.averages.get(model)
            if stored is None:
                raise ValueError(f"averages missing model {model}")
            for key, value in stats.items():
                stored_value = stored.get(key)
                if isinstance(value, float) and isinstance(stored_value, float):
                    if not np.isclose(stored_value, value, rtol=1e-9, atol=1e-12, equal_nan=True):
                        raise ValueError(
                            f"stored average {key} for {model} does not match records"
                        )
                elif stored_value != value:
                    raise ValueError(f"stored average {key} for {model} does not match records")
        return report


def compute_metrics(y, y_hat, tau: float) -> dict:
    """Mean absolute error, mean pinball, mean error, and percentage error."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1 or len(y) < 1:
        raise ValueError("y and y_hat must be equal-length vectors with at least one entry")
    if np.any(y == 0):
        raise ValueError("MAPE is undefined for zero targets")
    diff = y_hat - y
    return {
        "mae": float(np.mean(np.abs(diff))),
        "pinball": float(np.mean(pinball_loss(y, y_hat, tau))),
        "bias": float(np.mean(diff)),
        "mape": float(100.0 * np.mean(np.abs(diff) / np.abs(y))),
    }


def _model_name(entry) -> str:
    if isinstance(entry, str):
        return entry
    if isinstance(entry, ModelSpec):
        return entry.kind
    raise ModelError(f"unsupported model entry {entry!r}")


class _HeuristicRunner:
    def __init__(self, name: str, baseline_ttt: float):
        self.name = name
        self.baseline_ttt = baseline_ttt

    def fit_predict(self, train_scenarios, test_configs):
        index = SubsetIndex(self.baseline_ttt)
        for scenario in train_scenarios:
            index_insert(index, scenario)
        out = np.empty(len(test_configs))
        for i, config in enumerate(test_configs):
            if self.name == "csh":
                out[i] = csh(index, config)
            elif self.name == "cash":
                out[i] = cash(index, config)
            else:
                upper = csuph(index, config)
                # no known superset: score the largest label seen so far
                out[i] = index.max_label() if upper is None else upper
        return out


class _ModelRunner:
    def __init__(self, spec: ModelSpec, baseline_ttt: float):
        self.spec = spec
        self.baseline_ttt = baseline_ttt

    def fit_predict(self, train_matrix, train_targets, test_matrix, tau):
        if train_matrix is None or train_matrix.n_rows < 2:
            # nothing to learn from yet: fall back to the baseline estimate
            return np.full(test_matrix.n_rows, self.baseline_ttt)
        model = fit_model(self.spec, train_matrix, train_targets)
        return model.predict_conservative(test_matrix, tau)


def run_online_eval(
    dataset: Dataset,
    models: list,
    config: EvalConfig,
    stats: BaselineStats,
    feature_spec: FeatureSpec | None = None,
    store_predictions: bool = False,
) -> EvalReport:
    """Run the incremental train/test protocol and collect per-iteration metrics."""
    if not models:
        raise ModelError("empty model list")
    names = [_model_name(m) for m in models]
    if len(set(names)) != len(names):
        raise ModelError(f"duplicate model names in {names}")
    for entry in models:
        if isinstance(entry, str) and entry not in HEURISTIC_NAMES:
            raise ModelError(f"unknown heuristic {entry!r}; expected one of {HEURISTIC_NAMES}")
    if feature_spec is None:
        feature_spec = FeatureSpec(representation="combined", include_csh=True)

    batch = config.batch_size
    max_iterations = len(dataset) // batch - 1
    iterations = min(config.iterations, max_iterations)
    if iterations < 1:
        raise ValueError(
            f"dataset with {len(dataset)} rows supports no iteration at batch size {batch}"
        )

    baseline_index = SubsetIndex(stats.baseline_ttt)
    # training features for the whole stream, heuristic column strictly causal
    full_train_matrix = build_feature_matrix(
        dataset, feature_spec, stats, heuristic_index=baseline_index, grow_index=True
    )
    targets = dataset.targets()

    runners = {}
    for entry in models:
        if isinstance(entry, str):
            runners[_model_name(entry)] = _HeuristicRunner(entry, stats.baseline_ttt)
        else:
            runners[_model_name(entry)] = _ModelRunner(entry, stats.baseline_ttt)

    records: list[IterationRecord] = []
    timings: dict[str, list[float]] = {name: [] for name in names}
    predictions_store: dict = {}
    live = {name: True for name in names}
    terminated_at: dict[str, int] = {}

    for t in range(iterations):
        train_slice = slice(0, t * batch)
        test_slice = slice(t * batch, (t + 1) * batch)
        train_scenarios = dataset.scenarios[train_slice]
        test_scenarios = dataset.scenarios[test_slice]
        test_configs = [s.config for s in test_scenarios]
        y_test = targets[test_slice]

        train_matrix = _matrix_rows(full_train_matrix, train_slice) if t > 0 else None
        test_dataset = Dataset(
            scenarios=list(test_scenarios),
            network_fingerprint=dataset.network_fingerprint,
            rng_seed=dataset.rng_seed,
            solver=dataset.solver,
        )
        prediction_index = SubsetIndex(stats.baseline_ttt)
        for scenario in train_scenarios:
            index_insert(prediction_index, scenario)
        test_matrix = build_feature_matrix(
            test_dataset, feature_spec, stats,
            heuristic_index=prediction_index, grow_index=False,
        )

        for entry, name in zip(models, names):
            if not live[name]:
                continue
            start = time.perf_counter()
            if isinstance(entry, str):
                y_hat = runners[name].fit_predict(train_scenarios, test_configs)
            else:
                y_hat = runners[name].fit_predict(train_matrix, targets[train_slice],
                                                  test_matrix, config.tau)
            seconds = time.perf_counter() - start
            timings[name].append(seconds)

            metrics = compute_metrics(y_test, y_hat, config.tau)
            window = timings[name][-config.time_cap_window:]
            timed_out = statistics.median(window) > config.time_cap_seconds
            if timed_out:
                live[name] = False
                terminated_at[name] = t
            records.append(
                IterationRecord(
                    iteration=t,
                    model=name,
                    terminated=timed_out,
                    **metrics,
                )
            )
            if store_predictions:
                predictions_store[(t, name)] = y_hat

    averages = summarize(records)
    provenance = {
        "config": config.to_dict(),
        "dataset_fingerprint": dataset.network_fingerprint,
        "dataset_rows": len(dataset),
        "feature_spec": {
            "representation": feature_spec.representation,
            "selected": list(feature_spec.selected) if feature_spec.selected else None,
            "include_csh": feature_spec.include_csh,
        },
        "models": names,
        "revision": f"closurelab-{__version__}",
    }
    return EvalReport(
        records=records,
        averages=averages,
        provenance=provenance,
        timings=timings,
        predictions=predictions_store,
    )


def _matrix_rows(matrix, row_slice):
    from .features import FeatureMatrix

    return FeatureMatrix(names=matrix.names, values=matrix.values[row_slice])


def summarize(records: list[IterationRecord]) -> dict[str, dict]:
    """Per-model averages over completed iterations, raw and outlier-filtered.

    Filtering drops iterations whose MAPE exceeds 10x the model's median MAPE.
    """
    by_model: dict[str, list[IterationRecord]] = {}
    for record in records:
        by_model.setdefault(record.model, []).append(record)

    out: dict[str, dict] = {}
    for model, rows in by_model.items():
        mape_values = [r.mape for r in rows]
        median_mape = statistics.median(mape_values)
        kept = [r for r in rows if r.mape <= 10.0 * median_mape]
        terminated_at = next((r.iteration for r in rows if r.terminated), None)

        def mean_of(items, attr):
            return float(np.mean([getattr(r, attr) for r in items]))

        entry = {
            "iterations_completed": len(rows),
            "terminated_at": terminated_at,
            "filtered_iterations": len(kept),
        }
        for metric in METRIC_NAMES:
            entry[metric] = mean_of(rows, metric)
            entry[f"{metric}_filtered"] = mean_of(kept, metric)
        out[model] = entry
    return out


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def emit_report(report: EvalReport, out_dir) -> list[Path]:
    """Write per-iteration and averages CSVs, the pinball chart, and timings.

    Everything except ``timings.csv`` is byte-deterministic for a fixed
    dataset and configuration; ``timings.csv`` holds wall-clock diagnostics.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    iterations_path = out_dir / "iterations.csv"
    with open(iterations_path, "w", encoding="utf-8") as fh:
        fh.write("iteration,model,mae,pinball,bias,mape,terminated\n")
        for r in report.records:
            fh.write(
                f"{r.iteration},{r.model},{r.mae!r},{r.pinball!r},{r.bias!r},"
                f"{r.mape!r},{str(r.terminated).lower()}\n"
            )
    written.append(iterations_path)

    averages_path = out_dir / "averages.csv"
    with open(averages_path, "w", encoding="utf-8") as fh:
        fh.write(
            "model,variant,mae,pinball,bias,mape,iterations,terminated_at\n"
        )
        for model in sorted(report.averages):
            stats = report.averages[model]
            terminated = "" if stats["terminated_at"] is None else stats["terminated_at"]
            fh.write(
                f"{model},raw,{stats['mae']!r},{stats['pinball']!r},{stats['bias']!r},"
                f"{stats['mape']!r},{stats['iterations_completed']},{terminated}\n"
            )
            fh.write(
                f"{model},filtered,{stats['mae_filtered']!r},{stats['pinball_filtered']!r},"
                f"{stats['bias_filtered']!r},{stats['mape_filtered']!r},"
                f"{stats['filtered_iterations']},{terminated}\n"
            )
    written.append(averages_path)

    svg_path = out_dir / "pinball.svg"
    svg_path.write_text(render_pinball_svg(report), encoding="utf-8")
    written.append(svg_path)

    if report.timings:
        timings_path = out_dir / "timings.csv"
        with open(timings_path, "w", encoding="utf-8") as fh:
            fh.write("model,iteration,seconds\n")
            for model in sorted(report.timings):
                for i, seconds in enumerate(report.timings[model]):
                    fh.write(f"{model},{i},{seconds:.6f}\n")
            fh.write("# averages\n")
            for model in sorted(report.timings):
                values = report.timings[model]
                if values:
                    fh.write(f"{model},mean,{float(np.mean(values)):.6f}\n")
        written.append(timings_path)
    return written


def render_pinball_svg(report: EvalReport, width=900, height=500) -> str:
    """Self-contained line chart: log10 pinball loss per iteration per model."""
    margin_left, margin_right, margin_top, margin_bottom = 70, 180, 30, 50
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom

    series: dict[str, list[tuple[int, float]]] = {}
    for r in report.records:
        series.setdefault(r.model, []).append((r.iteration, r.pinball))

    all_points = [p for pts in series.values() for _, p in pts if p > 0]
    if not all_points:
        lo, hi = 0.0, 1.0
    else:
        lo = np.floor(np.log10(min(all_points)))
        hi = np.ceil(np.log10(max(all_points)))
        if hi <= lo:
            hi = lo + 1.0
    max_iter = max((r.iteration for r in report.records), default=1) or 1

    def x_of(iteration):
        return margin_left + plot_w * iteration / max_iter

    def y_of(value):
        if value <= 0:
            return margin_top + plot_h
        frac = (np.log10(value) - lo) / (hi - lo)
        return margin_top + plot_h * (1.0 - frac)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin_left}" y1="{margin_top + plot_h}" x2="{margin_left + plot_w}" '
        f'y2="{margin_top + plot_h}" stroke="black"/>',
        f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" '
        f'y2="{margin_top + plot_h}" stroke="black"/>',
        f'<text x="{margin_left + plot_w / 2:.1f}" y="{height - 10}" text-anchor="middle" '
        f'font-size="14">iteration</text>',
        f'<text x="18" y="{margin_top + plot_h / 2:.1f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {margin_top + plot_h / 2:.1f})">pinball loss (log scale)</text>',
    ]
    for power in range(int(lo), int(hi) + 1):
        y = y_of(10.0 ** power)
        parts.append(
            f'<line x1="{margin_left - 4}" y1="{y:.1f}" x2="{margin_left}" y2="{y:.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{margin_left - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">1e{power}</text>'
        )
    tick_step = max(1, max_iter // 10)
    for it in range(0, max_iter + 1, tick_step):
        x = x_of(it)
        parts.append(
            f'<line x1="{x:.1f}" y1="{margin_top + plot_h}" x2="{x:.1f}" '
            f'y2="{margin_top + plot_h + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{margin_top + plot_h + 18}" text-anchor="middle" '
            f'font-size="11">{it}</text>'
        )

    for i, model in enumerate(sorted(series)):
        color = _PALETTE[i % len(_PALETTE)]
        points = " ".join(f"{x_of(it):.2f},{y_of(p):.2f}" for it, p in sorted(series[model]))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>'
        )
        legend_y = margin_top + 16 + 18 * i
        legend_x = margin_left + plot_w + 12
        parts.append(
            f'<line x1="{legend_x}" y1="{legend_y - 4}" x2="{legend_x + 22}" '
            f'y2="{legend_y - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{legend_x + 28}" y="{legend_y}" font-size="12">{model}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def format_averages_table(report: EvalReport) -> str:
    """Human-readable averages table for terminal output."""
    header = f"{'model':<16}{'mae':>14}{'pinball':>14}{'bias':>16}{'mape':>9}{'iters':>7}  note"
    lines = [header, "-" * len(header)]
    for model in sorted(report.averages):
        stats = report.averages[model]
        note = ""
        if stats["terminated_at"] is not None:
            note = f"terminated at {stats['terminated_at']}"
        lines.append(
            f"{model:<16}{stats['mae']:>14.1f}{stats['pinball']:>14.1f}"
            f"{stats['bias']:>16.1f}{stats['mape']:>9.2f}"
            f"{stats['iterations_completed']:>7}  {note}"
        )
    return "\n".join(lines)
