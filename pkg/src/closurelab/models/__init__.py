"""Travel-time regressors with conservative (low-quantile) prediction.

Seven model kinds. The "log" family trains on ln(TTT) and exponentiates at
prediction time; random_forest and gbt train on raw TTT. Conservative
prediction at quantile tau comes from one of three mechanisms: a natively
pinball-trained model (log_quantile, gbt), the posterior predictive quantile
(log_bayes_ridge), or the empirical member quantile (log_bagging, log_knn,
random_forest). Plain least squares has no conservative mechanism and falls
back to its point prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ModelError
from ..features import FeatureMatrix
from .linear import (
    Standardizer,
    bayes_predictive,
    fit_bagging_members,
    fit_bayes_ridge,
    fit_quantile_weights,
    pinball_vector,
    solve_least_squares,
    standard_normal_quantile,
)
from .trees import (
    RegressionTree,
    fit_gradient_boosted,
    fit_random_forest,
    forest_member_predictions,
    gradient_boosted_predict,
)

MODEL_KINDS = (
    "log_ols",
    "log_quantile",
    "log_bayes_ridge",
    "log_bagging",
    "log_knn",
    "random_forest",
    "gbt",
)

_FORMAT_VERSION = 1

_DEFAULTS = {
    "log_ols": {"ridge_jitter": 1e-8},
    "log_quantile": {
        "learning_rate": 0.1,
        "max_epochs": 5000,
        "plateau_epochs": 50,
        "plateau_tol": 1e-9,
    },
    "log_bayes_ridge": {"max_iter": 300, "tol": 1e-6, "alpha_fixed": None, "beta_fixed": None},
    "log_bagging": {"members": 50, "sample_fraction": 1.0, "seed": 0},
    "log_knn": {"k": 10},
    "random_forest": {"trees": 100, "depth": 12, "min_leaf": 5, "seed": 0},
    "gbt": {"trees": 300, "depth": 4, "learning_rate": 0.1, "min_leaf": 5},
}


def default_hyperparameters(kind: str) -> dict:
    """Documented defaults per model kind; every value can be overridden."""
    if kind not in _DEFAULTS:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return dict(_DEFAULTS[kind])


def pinball_loss(y, y_hat, tau: float):
    """Quantile loss: tau*(y-yhat) when underestimating, (1-tau)*(yhat-y) otherwise."""
    if not 0 < tau < 1:
        raise ModelError(f"tau must be in (0, 1), got {tau}")
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    out = pinball_vector(y, y_hat, tau)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ModelSpec:
    """A model kind with its quantile level and hyperparameter overrides."""

    kind: str
    tau: float = 0.05
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if not 0 < self.tau < 1:
            raise ModelError(f"tau must be in (0, 1), got {self.tau}")
        defaults = _DEFAULTS[self.kind]
        unknown = sorted(set(self.hyperparameters) - set(defaults))
        if unknown:
            raise ModelError(f"unknown hyperparameters for {self.kind}: {unknown}")

    def resolved(self) -> dict:
        merged = default_hyperparameters(self.kind)
        merged.update(self.hyperparameters)
        return merged


class TrainedModel:
    """Base fitted predictor: schema-checked point and conservative outputs."""

    kind: str = ""
    log_target = False
    conservative_mechanism = "none"

    def __init__(self, tau: float, schema: tuple, n_rows: int):
        self.tau = tau
        self.schema = tuple(schema)
        self.n_rows = n_rows

    def _validate(self, X: FeatureMatrix) -> np.ndarray:
        if not isinstance(X, FeatureMatrix):
            raise ModelError("predict expects a FeatureMatrix")
        if X.names != self.schema:
            raise ModelError(
                f"feature schema mismatch: model expects {len(self.schema)} columns "
                f"starting {self.schema[:3]}..., got {len(X.names)} starting {X.names[:3]}..."
            )
        return X.values

    def predict(self, X: FeatureMatrix) -> np.ndarray:
        values = self._point(self._validate(X))
        if not np.all(np.isfinite(values)):
            raise ModelError("non-finite prediction")
        return values

    def predict_conservative(self, X: FeatureMatrix, tau: float | None = None) -> np.ndarray:
        tau = self.tau if tau is None else tau
        if not 0 < tau < 1:
            raise ModelError(f"tau must be in (0, 1), got {tau}")
        if self.conservative_mechanism == "quantile_model" and tau != self.tau:
            raise ModelError(
                f"{self.kind} is trained for tau={self.tau}; cannot predict tau={tau}"
            )
        values = self._conservative(self._validate(X), tau)
        if not np.all(np.isfinite(values)):
            raise ModelError("non-finite prediction")
        return values

    def _point(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _conservative(self, values: np.ndarray, tau: float) -> np.ndarray:
        return self._point(values)

    def _payload(self) -> dict:
        raise NotImplementedError


class LogOlsModel(TrainedModel):
    kind = "log_ols"
    log_target = True
    conservative_mechanism = "none"

    def __init__(self, tau, schema, n_rows, standardizer, weights, intercept):
        super().__init__(tau, schema, n_rows)
        self.standardizer = standardizer
        self.weights = weights
        self.intercept = intercept

    def _point(self, values):
        return np.exp(self.standardizer.transform(values) @ self.weights + self.intercept)

    def _payload(self):
        return {
            "mean": self.standardizer.mean.tolist(),
            "scale": self.standardizer.scale.tolist(),
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
        }


class LogQuantileModel(TrainedModel):
    kind = "log_quantile"
    log_target = True
    conservative_mechanism = "quantile_model"

    def __init__(self, tau, schema, n_rows, standardizer, weights, intercept):
        super().__init__(tau, schema, n_rows)
        self.standardizer = standardizer
        self.weights = weights
        self.intercept = intercept

    def _point(self, values):
        return np.exp(self.standardizer.transform(values) @ self.weights + self.intercept)

    def _payload(self):
        return {
            "mean": self.standardizer.mean.tolist(),
            "scale": self.standardizer.scale.tolist(),
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
        }


class LogBayesRidgeModel(TrainedModel):
    kind = "log_bayes_ridge"
    log_target = True
    conservative_mechanism = "posterior"

    def __init__(self, tau, schema, n_rows, standardizer, weights, intercept, sigma, beta):
        super().__init__(tau, schema, n_rows)
        self.standardizer = standardizer
        self.weights = weights
        self.intercept = intercept
        self.sigma = sigma
        self.beta = beta

    def _point(self, values):
        mean, _ = bayes_predictive(
            self.standardizer.transform(values), self.weights, self.intercept, self.sigma, self.beta
        )
        return np.exp(mean)

    def _conservative(self, values, tau):
        mean, std = bayes_predictive(
            self.standardizer.transform(values), self.weights, self.intercept, self.sigma, self.beta
        )
        return np.exp(mean + standard_normal_quantile(tau) * std)

    def _payload(self):
        return {
            "mean": self.standardizer.mean.tolist(),
            "scale": self.standardizer.scale.tolist(),
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "sigma": self.sigma.tolist(),
            "beta": self.beta,
        }


class LogBaggingModel(TrainedModel):
    kind = "log_bagging"
    log_target = True
    conservative_mechanism = "ensemble"

    def __init__(self, tau, schema, n_rows, standardizer, member_weights, member_intercepts):
        super().__init__(tau, schema, n_rows)
        self.standardizer = standardizer
        self.member_weights = member_weights
        self.member_intercepts = member_intercepts

    def _member_log_predictions(self, values):
        transformed = self.standardizer.transform(values)
        return transformed @ self.member_weights.T + self.member_intercepts

    def _point(self, values):
        return np.exp(self._member_log_predictions(values).mean(axis=1))

    def _conservative(self, values, tau):
        members = np.exp(self._member_log_predictions(values))
        return np.quantile(members, tau, axis=1)

    def _payload(self):
        return {
            "mean": self.standardizer.mean.tolist(),
            "scale": self.standardizer.scale.tolist(),
            "member_weights": self.member_weights.tolist(),
            "member_intercepts": self.member_intercepts.tolist(),
        }


class LogKnnModel(TrainedModel):
    kind = "log_knn"
    log_target = True
    conservative_mechanism = "ensemble"

    def __init__(self, tau, schema, n_rows, standardizer, train_values, train_targets, k):
        super().__init__(tau, schema, n_rows)
        self.standardizer = standardizer
        self.train_values = train_values
        self.train_targets = train_targets
        self.k = k

    def _neighbor_targets(self, values):
        transformed = self.standardizer.transform(values)
        k = min(self.k, len(self.train_targets))
        out = np.empty((len(transformed), k))
        for i, row in enumerate(transformed):
            dists = np.sqrt(((self.train_values - row) ** 2).sum(axis=1))
            order = np.lexsort((np.arange(len(dists)), dists))
            out[i] = self.train_targets[order[:k]]
        return out

    def _point(self, values):
        neighbors = self._neighbor_targets(values)
        return np.exp(np.log(neighbors).mean(axis=1))

    def _conservative(self, values, tau):
        return np.quantile(self._neighbor_targets(values), tau, axis=1)

    def _payload(self):
        return {
            "mean": self.standardizer.mean.tolist(),
            "scale": self.standardizer.scale.tolist(),
            "train_values": self.train_values.tolist(),
            "train_targets": self.train_targets.tolist(),
            "k": self.k,
        }


class RandomForestModel(TrainedModel):
    kind = "random_forest"
    log_target = False
    conservative_mechanism = "ensemble"

    def __init__(self, tau, schema, n_rows, members):
        super().__init__(tau, schema, n_rows)
        self.members = members

    def _point(self, values):
        return forest_member_predictions(self.members, values).mean(axis=0)

    def _conservative(self, values, tau):
        return np.quantile(forest_member_predictions(self.members, values), tau, axis=0)

    def _payload(self):
        return {"members": [m.to_payload() for m in self.members]}


class GradientBoostedModel(TrainedModel):
    kind = "gbt"
    log_target = False
    conservative_mechanism = "quantile_model"

    def __init__(self, tau, schema, n_rows, base, members, learning_rate, training_loss):
        super().__init__(tau, schema, n_rows)
        self.base = base
        self.members = members
        self.learning_rate = learning_rate
        self.training_loss = training_loss

    def _point(self, values):
        return gradient_boosted_predict(self.base, self.members, self.learning_rate, values)

    def _payload(self):
        return {
            "base": self.base,
            "learning_rate": self.learning_rate,
            "members": [m.to_payload() for m in self.members],
            "training_loss": self.training_loss.tolist(),
        }


def fit(spec: ModelSpec, X: FeatureMatrix, y) -> TrainedModel:
    """Train one model on raw travel times (log transforms happen internally)."""
    if not isinstance(X, FeatureMatrix):
        raise ModelError("fit expects a FeatureMatrix")
    y = np.asarray(y, dtype=np.float64)
    if X.n_rows < 2:
        raise ModelError(f"need at least 2 training rows, got {X.n_rows}")
    if len(X.names) == 0:
        raise ModelError("empty feature matrix")
    if y.shape != (X.n_rows,):
        raise ModelError(f"targets shape {y.shape} does not match {X.n_rows} rows")
    if not np.all(np.isfinite(y)):
        raise ModelError("targets must be finite")

    hp = spec.resolved()
    values = X.values
    schema = X.names
    is_log = spec.kind.startswith("log_")
    if is_log:
        if np.any(y <= 0):
            raise ModelError(f"{spec.kind} requires positive targets for the log transform")
        z = np.log(y)

    if spec.kind == "log_ols":
        standardizer = Standardizer.fit(values)
        weights, intercept = solve_least_squares(
            standardizer.transform(values), z, ridge_jitter=hp["ridge_jitter"]
        )
        return LogOlsModel(spec.tau, schema, X.n_rows, standardizer, weights, intercept)

    if spec.kind == "log_quantile":
        standardizer = Standardizer.fit(values)
        weights, intercept, _ = fit_quantile_weights(
            standardizer.transform(values),
            z,
            spec.tau,
            learning_rate=hp["learning_rate"],
            max_epochs=hp["max_epochs"],
            plateau_epochs=hp["plateau_epochs"],
            plateau_tol=hp["plateau_tol"],
        )
        return LogQuantileModel(spec.tau, schema, X.n_rows, standardizer, weights, intercept)

    if spec.kind == "log_bayes_ridge":
        standardizer = Standardizer.fit(values)
        weights, intercept, sigma, beta = fit_bayes_ridge(
            standardizer.transform(values),
            z,
            max_iter=hp["max_iter"],
            tol=hp["tol"],
            alpha_fixed=hp["alpha_fixed"],
            beta_fixed=hp["beta_fixed"],
        )
        return LogBayesRidgeModel(
            spec.tau, schema, X.n_rows, standardizer, weights, intercept, sigma, beta
        )

    if spec.kind == "log_bagging":
        standardizer = Standardizer.fit(values)
        member_weights, member_intercepts = fit_bagging_members(
            standardizer.transform(values),
            z,
            members=hp["members"],
            sample_fraction=hp["sample_fraction"],
            seed=hp["seed"],
        )
        return LogBaggingModel(
            spec.tau, schema, X.n_rows, standardizer, member_weights, member_intercepts
        )

    if spec.kind == "log_knn":
        standardizer = Standardizer.fit(values)
        return LogKnnModel(
            spec.tau, schema, X.n_rows, standardizer,
            standardizer.transform(values), y.copy(), int(hp["k"]),
        )

    if spec.kind == "random_forest":
        members = fit_random_forest(
            values, y, trees=int(hp["trees"]), depth=int(hp["depth"]),
            min_leaf=int(hp["min_leaf"]), seed=int(hp["seed"]),
        )
        return RandomForestModel(spec.tau, schema, X.n_rows, members)

    if spec.kind == "gbt":
        base, members, losses = fit_gradient_boosted(
            values, y, spec.tau, trees=int(hp["trees"]), depth=int(hp["depth"]),
            learning_rate=hp["learning_rate"], min_leaf=int(hp["min_leaf"]),
        )
        return GradientBoostedModel(
            spec.tau, schema, X.n_rows, base, members, hp["learning_rate"], losses
        )

    raise ModelError(f"unknown model kind {spec.kind!r}")


def predict(model: TrainedModel, X: FeatureMatrix) -> np.ndarray:
    return model.predict(X)


def predict_conservative(model: TrainedModel, X: FeatureMatrix, tau: float | None = None) -> np.ndarray:
    return model.predict_conservative(X, tau)


def save_model(model: TrainedModel, sink) -> None:
    """Serialize a fitted model (schema included) to a JSON blob."""
    record = {
        "format_version": _FORMAT_VERSION,
        "kind": model.kind,
        "tau": model.tau,
        "schema": list(model.schema),
        "n_rows": model.n_rows,
        "payload": model._payload(),
    }
    text = json.dumps(record, sort_keys=True)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)


def _standardizer_from(payload) -> Standardizer:
    return Standardizer(
        mean=np.asarray(payload["mean"], dtype=np.float64),
        scale=np.asarray(payload["scale"], dtype=np.float64),
    )


def load_model(source) -> TrainedModel:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    record = json.loads(text)
    if record.get("format_version") != _FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {record.get('format_version')}")
    kind = record["kind"]
    tau = record["tau"]
    schema = tuple(record["schema"])
    n_rows = record["n_rows"]
    payload = record["payload"]

    if kind == "log_ols":
        return LogOlsModel(
            tau, schema, n_rows, _standardizer_from(payload),
            np.asarray(payload["weights"]), payload["intercept"],
        )
    if kind == "log_quantile":
        return LogQuantileModel(
            tau, schema, n_rows, _standardizer_from(payload),
            np.asarray(payload["weights"]), payload["intercept"],
        )
    if kind == "log_bayes_ridge":
        return LogBayesRidgeModel(
            tau, schema, n_rows, _standardizer_from(payload),
            np.asarray(payload["weights"]), payload["intercept"],
            np.asarray(payload["sigma"]), payload["beta"],
        )
    if kind == "log_bagging":
        return LogBaggingModel(
            tau, schema, n_rows, _standardizer_from(payload),
            np.asarray(payload["member_weights"]), np.asarray(payload["member_intercepts"]),
        )
    if kind == "log_knn":
        return LogKnnModel(
            tau, schema, n_rows, _standardizer_from(payload),
            np.asarray(payload["train_values"]), np.asarray(payload["train_targets"]),
            int(payload["k"]),
        )
    if kind == "random_forest":
        members = [RegressionTree.from_payload(p) for p in payload["members"]]
        return RandomForestModel(tau, schema, n_rows, members)
    if kind == "gbt":
        members = [RegressionTree.from_payload(p) for p in payload["members"]]
        return GradientBoostedModel(
            tau, schema, n_rows, payload["base"], members,
            payload["learning_rate"], np.asarray(payload["training_loss"]),
        )
    raise ModelError(f"unknown model kind {kind!r}")
