"""Closure scenario sampling, equilibrium labeling, and dataset persistence.

Dataset generation is reproducible by construction: the candidate stream is
drawn from a single seeded generator, labels are pure functions of
(network, config, solver options), and scenarios are accepted in draw order.
Worker count therefore never changes the output bytes.
"""

from __future__ import annotations

import json
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, SolverError
from .network import ClosureConfig, DemandMatrix, Network, apply_closures, connectivity_check, network_fingerprint
from .tap import SolverOptions, solve_ue

# Deterministic effort proxy: solver iterations are reproducible, wall time is
# not, and dataset bytes must be. Scaled to roughly match one iteration's cost.
SECONDS_PER_ITERATION = 1.5e-4

_DATASET_FORMAT = "closurelab-dataset"
_DATASET_VERSION = 1


@dataclass(frozen=True)
class LabeledScenario:
    """A closure configuration with its equilibrium total travel time."""

    config: ClosureConfig
    ttt: float
    gap: float
    solve_time: float

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "closed": list(self.config.closed),
                "ttt": self.ttt,
                "gap": self.gap,
                "solve_time": self.solve_time,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class InfeasibleClosure:
    """Outcome for a closure that severs one or more demanded OD pairs."""

    config: ClosureConfig
    disconnected_pairs: tuple = ()


@dataclass(frozen=True)
class SamplerConfig:
    """Uniform sampler over closure subsets: size range plus seed."""

    size_min: int = 1
    size_max: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.size_min < 0 or self.size_max < self.size_min:
            raise ValueError("need 0 <= size_min <= size_max")


@dataclass
class Dataset:
    """Ordered labeled scenarios tied to one baseline network."""

    scenarios: list[LabeledScenario]
    network_fingerprint: str
    rng_seed: int
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        seen = set()
        for s in self.scenarios:
            if s.config in seen:
                raise DatasetError(f"duplicate closure config {s.config.closed}")
            seen.add(s.config)

    def __len__(self):
        return len(self.scenarios)

    def configs(self) -> list[ClosureConfig]:
        return [s.config for s in self.scenarios]

    def targets(self) -> np.ndarray:
        return np.array([s.ttt for s in self.scenarios], dtype=np.float64)


def sample_closure_config(rng: np.random.Generator, project_count: int, size_range) -> ClosureConfig:
    """Draw a closure subset: size uniform on [min, max], links uniform without replacement."""
    lo, hi = size_range
    if not (0 <= lo <= hi <= project_count):
        raise ValueError(f"invalid size range [{lo}, {hi}] for {project_count} projects")
    size = int(rng.integers(lo, hi + 1))
    ids = rng.choice(project_count, size=size, replace=False)
    return ClosureConfig.of(int(i) for i in ids)


def label_scenario(
    network: Network,
    demand: DemandMatrix,
    config: ClosureConfig,
    opts: SolverOptions | None = None,
) -> LabeledScenario | InfeasibleClosure:
    """Solve the closure scenario to equilibrium, or report it infeasible."""
    opts = opts or SolverOptions()
    closed_net = apply_closures(network, config)
    missing = connectivity_check(closed_net, demand)
    if missing:
        return InfeasibleClosure(config=config, disconnected_pairs=tuple(missing))
    eq = solve_ue(closed_net, demand, opts)
    if not eq.converged:
        raise SolverError(
            f"scenario {config.closed} did not reach gap {opts.gap_tolerance} within "
            f"{opts.max_iterations} iterations (gap {eq.relative_gap:.3e}); raise max_iterations"
        )
    return LabeledScenario(
        config=config,
        ttt=eq.ttt,
        gap=eq.relative_gap,
        solve_time=eq.iterations * SECONDS_PER_ITERATION,
    )


def generate_dataset(
    network: Network,
    demand: DemandMatrix,
    n: int,
    sampler: SamplerConfig,
    opts: SolverOptions | None = None,
    workers: int = 1,
    max_attempts: int | None = None,
    progress=None,
) -> Dataset:
    """Label ``n`` unique feasible closure scenarios.

    Infeasible and duplicate draws are resampled. Acceptance follows draw
    order regardless of worker count, so (seed, sampler, solver options)
    fully determine the result.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    opts = opts or SolverOptions()
    if max_attempts is None:
        max_attempts = 100 * n + 1000
    rng = np.random.default_rng(sampler.seed)
    project_count = network.n_links
    size_range = (sampler.size_min, sampler.size_max)

    accepted: list[LabeledScenario] = []
    seen: set[ClosureConfig] = set()
    attempts = 0

    def draw():
        nonlocal attempts
        while attempts < max_attempts:
            attempts += 1
            config = sample_closure_config(rng, project_count, size_range)
            if config in seen:
                continue
            seen.add(config)
            return config
        return None

    def consume(outcome):
        if isinstance(outcome, LabeledScenario):
            accepted.append(outcome)
            if progress is not None and len(accepted) % 100 == 0:
                progress(len(accepted), n)

    if workers <= 1:
        while len(accepted) < n:
            config = draw()
            if config is None:
                break
            consume(label_scenario(network, demand, config, opts))
    else:
        lookahead = max(4 * workers, 8)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending: deque = deque()
            while len(accepted) < n:
                while len(pending) < lookahead:
                    config = draw()
                    if config is None:
                        break
                    pending.append(pool.submit(label_scenario, network, demand, config, opts))
                if not pending:
                    break
                consume(pending.popleft().result())

    if len(accepted) < n:
        raise DatasetError(
            f"sampler exhausted after {attempts} attempts: "
            f"found {len(accepted)} of {n} unique feasible scenarios"
        )
    return Dataset(
        scenarios=accepted[:n],
        network_fingerprint=network_fingerprint(network),
        rng_seed=sampler.seed,
        solver=opts,
    )


def save_dataset(dataset: Dataset, sink) -> None:
    """Write the dataset as JSON Lines: one header record, one line per scenario."""
    header = json.dumps(
        {
            "format": _DATASET_FORMAT,
            "version": _DATASET_VERSION,
            "fingerprint": dataset.network_fingerprint,
            "seed": dataset.rng_seed,
            "solver": {
                "gap_tolerance": dataset.solver.gap_tolerance,
                "max_iterations": dataset.solver.max_iterations,
                "line_search_tolerance": dataset.solver.line_search_tolerance,
                "line_search_max_halvings": dataset.solver.line_search_max_halvings,
            },
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    lines = [header] + [s.to_json_line() for s in dataset.scenarios]
    payload = "\n".join(lines) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(payload, encoding="utf-8")
    else:
        sink.write(payload)


def load_dataset(source, network: Network | None = None) -> Dataset:
    """Read a dataset file; optionally validate its fingerprint against a network."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = text.splitlines()
    if not lines:
        raise DatasetError("empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"line 1: malformed header: {exc}") from None
    if header.get("format") != _DATASET_FORMAT:
        raise DatasetError("line 1: not a dataset file (missing format marker)")
    if header.get("version") != _DATASET_VERSION:
        raise DatasetError(f"unsupported dataset version {header.get('version')}")

    if network is not None:
        expected = network_fingerprint(network)
        if header["fingerprint"] != expected:
            raise DatasetError(
                f"fingerprint mismatch: dataset {header['fingerprint'][:12]}..., "
                f"network {expected[:12]}..."
            )

    solver_kwargs = header.get("solver", {})
    scenarios = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            scenarios.append(
                LabeledScenario(
                    config=ClosureConfig.of(record["closed"]),
                    ttt=float(record["ttt"]),
                    gap=float(record["gap"]),
                    solve_time=float(record["solve_time"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"line {line_no}: malformed scenario record: {exc}") from None
    return Dataset(
        scenarios=scenarios,
        network_fingerprint=header["fingerprint"],
        rng_seed=int(header["seed"]),
        solver=SolverOptions(**solver_kwargs),
    )
