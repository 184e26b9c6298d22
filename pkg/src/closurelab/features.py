"""Feature representations of closure configurations and feature selection.

Three representations: binary one-hot over links, pairwise co-closure
indicators, and engineered aggregates of baseline per-link quantities
(equilibrium flow and cost, centrality, free-flow time, capacity). A fourth,
"combined", concatenates one-hot, a selected engineered subset, and the
costliest-subset heuristic output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .centrality import edge_betweenness, link_endpoint_closeness
from .heuristics import SubsetIndex, csh
from .network import ClosureConfig, DemandMatrix, Network
from .scenarios import Dataset
from .tap import SolverOptions, link_costs, solve_ue

REPRESENTATIONS = ("one_hot", "pairwise", "engineered", "combined")

# per-link quantities aggregated over the closed set, in registry order
_QUANTITIES = (
    "disrupted_flow",   # baseline equilibrium flow
    "baseline_cost",    # baseline equilibrium travel time
    "naive_impact",     # flow * cost: contribution to baseline total travel time
    "betweenness",      # fft-weighted edge betweenness
    "closeness",        # mean endpoint closeness
    "fft",
    "capacity",
)
_STATS = ("sum", "max", "mean")


def engineered_feature_names() -> list[str]:
    names = [f"{q}_{s}" for q in _QUANTITIES for s in _STATS]
    names.append("set_size")
    return names


@dataclass(frozen=True)
class FeatureSpec:
    """Which representation to build, and with which engineered subset."""

    representation: str = "combined"
    selected: tuple[str, ...] | None = None
    include_csh: bool = False

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(
                f"unknown representation {self.representation!r}; expected one of {REPRESENTATIONS}"
            )
        if self.selected is not None:
            object.__setattr__(self, "selected", tuple(self.selected))
            known = set(engineered_feature_names())
            unknown = [n for n in self.selected if n not in known]
            if unknown:
                raise ValueError(f"unknown engineered feature names: {unknown}")


@dataclass(frozen=True)
class BaselineStats:
    """Per-link baseline quantities, computed once from the baseline equilibrium."""

    link_ids: tuple[int, ...]
    flow: np.ndarray
    cost: np.ndarray
    betweenness: np.ndarray
    closeness: np.ndarray
    fft: np.ndarray
    capacity: np.ndarray
    baseline_ttt: float

    @staticmethod
    def compute(network: Network, demand: DemandMatrix, opts: SolverOptions | None = None) -> "BaselineStats":
        opts = opts or SolverOptions()
        eq = solve_ue(network, demand, opts)
        costs = link_costs(network, eq.flows)
        bc = edge_betweenness(network)
        cl = link_endpoint_closeness(network)
        space = network.link_id_space
        bc_arr = np.zeros(space)
        cl_arr = np.zeros(space)
        fft_arr = np.zeros(space)
        cap_arr = np.zeros(space)
        for link in network.links:
            bc_arr[link.id] = bc[link.id]
            cl_arr[link.id] = cl[link.id]
            fft_arr[link.id] = link.fft
            cap_arr[link.id] = link.capacity
        return BaselineStats(
            link_ids=tuple(l.id for l in network.links),
            flow=eq.flows,
            cost=costs,
            betweenness=bc_arr,
            closeness=cl_arr,
            fft=fft_arr,
            capacity=cap_arr,
            baseline_ttt=eq.ttt,
        )

    def quantity(self, name: str) -> np.ndarray:
        if name == "disrupted_flow":
            return self.flow
        if name == "baseline_cost":
            return self.cost
        if name == "naive_impact":
            return self.flow * self.cost
        if name == "betweenness":
            return self.betweenness
        if name == "closeness":
            return self.closeness
        if name == "fft":
            return self.fft
        if name == "capacity":
            return self.capacity
        raise KeyError(name)


@dataclass
class FeatureMatrix:
    """Scenario rows by named feature columns."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        self.names = tuple(self.names)
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError(
                f"matrix shape {self.values.shape} does not match {len(self.names)} names"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select(self, names) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(names=tuple(names), values=self.values[:, idx])

    def to_csv(self, sink) -> None:
        import csv
        from pathlib import Path

        def write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.names)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])

        if isinstance(sink, (str, Path)):
            with open(sink, "w", newline="", encoding="utf-8") as fh:
                write(fh)
        else:
            write(sink)


def one_hot(config: ClosureConfig, project_count: int) -> np.ndarray:
    """Binary indicator per project: 1 where the road is closed."""
    vec = np.zeros(project_count, dtype=np.float64)
    for link_id in config.closed:
        if link_id >= project_count:
            raise ValueError(f"link id {link_id} out of range for {project_count} projects")
        vec[link_id] = 1.0
    return vec


def pairwise_encode(config: ClosureConfig, project_count: int) -> np.ndarray:
    """Indicator per unordered project pair (i<j): 1 when both roads are closed."""
    for link_id in config.closed:
        if link_id >= project_count:
            raise ValueError(f"link id {link_id} out of range for {project_count} projects")
    vec = np.zeros(project_count * (project_count - 1) // 2, dtype=np.float64)
    closed = config.closed
    for a in range(len(closed)):
        i = closed[a]
        base = i * (2 * project_count - i - 1) // 2 - i - 1
        for b in range(a + 1, len(closed)):
            vec[base + closed[b]] = 1.0
    return vec


def pair_names(project_count: int) -> list[str]:
    return [f"pair_{i}_{j}" for i in range(project_count) for j in range(i + 1, project_count)]


def engineered_features(config: ClosureConfig, stats: BaselineStats) -> dict[str, float]:
    """Aggregate baseline quantities over the closed set.

    Empty configurations yield zeros (the mean and max of an empty set are
    defined as 0 here).
    """
    ids = list(config.closed)
    out: dict[str, float] = {}
    for q in _QUANTITIES:
        values = stats.quantity(q)[ids] if ids else np.zeros(0)
        if len(values):
            out[f"{q}_sum"] = float(np.sum(values))
            out[f"{q}_max"] = float(np.max(values))
            out[f"{q}_mean"] = float(np.mean(values))
        else:
            out[f"{q}_sum"] = 0.0
            out[f"{q}_max"] = 0.0
            out[f"{q}_mean"] = 0.0
    out["set_size"] = float(len(ids))
    return out


def build_feature_matrix(
    dataset: Dataset,
    spec: FeatureSpec,
    stats: BaselineStats,
    heuristic_index: SubsetIndex | None = None,
    grow_index: bool = False,
) -> FeatureMatrix:
    """Feature rows for every scenario in dataset order.

    With ``grow_index=True`` the heuristic column for row i is computed
    against the supplied index plus rows 0..i-1 only (the supplied index is
    not mutated), so no row ever sees its own or a later label. With
    ``grow_index=False`` every row is scored against the index as given,
    which is what prediction on unlabeled scenarios requires.
    """
    if spec.include_csh and heuristic_index is None:
        raise ValueError("include_csh requires a heuristic index primed with the baseline")

    project_count = len(stats.fft)
    configs = dataset.configs()
    blocks: list[np.ndarray] = []
    names: list[str] = []

    if spec.representation in ("one_hot", "pairwise", "combined"):
        names.extend(f"closed_{i}" for i in range(project_count))
        blocks.append(np.stack([one_hot(c, project_count) for c in configs])
                      if configs else np.zeros((0, project_count)))
    if spec.representation == "pairwise":
        names.extend(pair_names(project_count))
        width = project_count * (project_count - 1) // 2
        blocks.append(np.stack([pairwise_encode(c, project_count) for c in configs])
                      if configs else np.zeros((0, width)))
    if spec.representation in ("engineered", "combined"):
        selected = list(spec.selected) if spec.selected is not None else engineered_feature_names()
        names.extend(selected)
        rows = []
        for config in configs:
            feats = engineered_features(config, stats)
            rows.append([feats[n] for n in selected])
        blocks.append(np.asarray(rows, dtype=np.float64).reshape(len(configs), len(selected)))
    if spec.include_csh:
        names.append("csh")
        index = heuristic_index.copy() if grow_index else heuristic_index
        column = np.empty((len(configs), 1))
        for i, scenario in enumerate(dataset.scenarios):
            column[i, 0] = csh(index, scenario.config)
            if grow_index:
                index.insert(scenario.config, scenario.ttt)
        blocks.append(column)

    values = np.hstack(blocks) if blocks else np.zeros((len(configs), 0))
    return FeatureMatrix(names=tuple(names), values=values)


def pearson_screen(matrix: FeatureMatrix, targets, transform: str = "identity"):
    """Pearson correlation of each feature against the (optionally log) target.

    Returns one record per column: (name, r, degenerate). Constant features
    are flagged degenerate and reported as r = 0.
    """
    y = np.asarray(targets, dtype=np.float64)
    if matrix.n_rows < 3:
        raise ValueError("need at least 3 rows for a correlation screen")
    if y.shape != (matrix.n_rows,):
        raise ValueError("targets must match the matrix rows")
    if transform == "log":
        if np.any(y <= 0):
            raise ValueError("log transform requires positive targets")
        y = np.log(y)
    elif transform != "identity":
        raise ValueError(f"unknown transform {transform!r}")
    if np.std(y) == 0:
        raise ValueError("target variance is zero")

    yc = y - y.mean()
    y_norm = math.sqrt(float(np.dot(yc, yc)))
    records = []
    for j, name in enumerate(matrix.names):
        x = matrix.values[:, j]
        xc = x - x.mean()
        x_norm = math.sqrt(float(np.dot(xc, xc)))
        if x_norm == 0.0:
            records.append((name, 0.0, True))
        else:
            records.append((name, float(np.dot(xc, yc) / (x_norm * y_norm)), False))
    return records


def _ols_r2(x_train, y_train, x_val, y_val) -> float:
    design = np.hstack([np.ones((len(x_train), 1)), x_train])
    coef, *_ = np.linalg.lstsq(design, y_train, rcond=None)
    pred = np.hstack([np.ones((len(x_val), 1)), x_val]) @ coef
    ss_res = float(np.sum((y_val - pred) ** 2))
    ss_tot = float(np.sum((y_val - y_val.mean()) ** 2))
    if ss_tot == 0.0:
        return math.nan
    return 1.0 - ss_res / ss_tot


def _cv_score(values, y, folds, seed) -> float:
    n = len(y)
    order = np.random.default_rng(seed).permutation(n)
    scores = []
    bounds = np.linspace(0, n, folds + 1).astype(int)
    for f in range(folds):
        val_idx = order[bounds[f]:bounds[f + 1]]
        train_idx = np.concatenate([order[:bounds[f]], order[bounds[f + 1]:]])
        if len(val_idx) == 0 or len(train_idx) < 2:
            continue
        scores.append(_ols_r2(values[train_idx], y[train_idx], values[val_idx], y[val_idx]))
    scores = [s for s in scores if not math.isnan(s)]
    if not scores:
        return math.nan
    return float(np.mean(scores))


def sequential_select(
    matrix: FeatureMatrix,
    targets,
    direction: str,
    k: int,
    folds: int = 5,
    seed: int = 0,
) -> list[str]:
    """Greedy forward/backward feature selection by cross-validated OLS R^2.

    The wrapper regresses log targets on the candidate subset; ties between
    candidates break toward the earlier feature name.
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if k > len(matrix.names):
        raise ValueError(f"k={k} exceeds {len(matrix.names)} available features")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    y = np.asarray(targets, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("selection wrapper uses log targets; targets must be positive")
    y = np.log(y)

    def score(names) -> float:
        cols = [matrix.names.index(n) for n in names]
        return _cv_score(matrix.values[:, cols], y, folds, seed)

    if direction == "forward":
        chosen: list[str] = []
        pool = sorted(matrix.names)
        while len(chosen) < k:
            best_name, best_score = None, -math.inf
            for name in pool:
                s = score(chosen + [name])
                if not math.isnan(s) and s > best_score:
                    best_name, best_score = name, s
            if best_name is None:
                raise ValueError("degenerate design: no candidate produced a valid fit")
            chosen.append(best_name)
            pool.remove(best_name)
        return chosen

    surviving = list(matrix.names)
    while len(surviving) > k:
        best_drop, best_score = None, -math.inf
        for name in sorted(surviving):
            remaining = [n for n in surviving if n != name]
            s = score(remaining)
            if not math.isnan(s) and s > best_score:
                best_drop, best_score = name, s
        if best_drop is None:
            raise ValueError("degenerate design: no candidate produced a valid fit")
        surviving.remove(best_drop)
    return surviving


def selected_union(matrix: FeatureMatrix, targets, k: int = 9, folds: int = 5, seed: int = 0) -> list[str]:
    """Union of forward and backward selections, in registry column order."""
    forward = sequential_select(matrix, targets, "forward", k, folds, seed)
    backward = sequential_select(matrix, targets, "backward", k, folds, seed)
    union = set(forward) | set(backward)
    return [n for n in matrix.names if n in union]
