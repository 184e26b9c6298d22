"""Linear regressors on log targets: least squares, quantile, Bayesian ridge."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError


@dataclass(frozen=True)
class Standardizer:
    """Column-wise zero-mean unit-variance scaling fit on training rows only."""

    mean: np.ndarray
    scale: np.ndarray

    @staticmethod
    def fit(X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return Standardizer(mean=mean, scale=scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def solve_least_squares(Xs: np.ndarray, z: np.ndarray, ridge_jitter: float = 1e-8):
    """Normal-equation OLS on a standardized design, centered target.

    Falls back to a ridge-jittered system when the Gram matrix is singular or
    numerically degenerate. Returns (weights, intercept).
    """
    intercept = float(z.mean())
    t = z - intercept
    gram = Xs.T @ Xs
    rhs = Xs.T @ t
    weights = None
    try:
        candidate = np.linalg.solve(gram, rhs)
        if np.all(np.isfinite(candidate)):
            # reject garbage from near-singular systems
            eigvals = np.linalg.eigvalsh(gram)
            if eigvals[0] > 1e-10 * max(eigvals[-1], 1.0):
                weights = candidate
    except np.linalg.LinAlgError:
        weights = None
    if weights is None:
        scale = float(np.trace(gram)) / max(gram.shape[0], 1) or 1.0
        jittered = gram + ridge_jitter * scale * np.eye(gram.shape[0])
        weights = np.linalg.solve(jittered, rhs)
    return weights, intercept


def pinball_vector(y: np.ndarray, y_hat: np.ndarray, tau: float) -> np.ndarray:
    diff = y - y_hat
    return np.where(diff >= 0, tau * diff, (tau - 1.0) * diff)


def fit_quantile_weights(
    Xs: np.ndarray,
    z: np.ndarray,
    tau: float,
    learning_rate: float = 0.1,
    max_epochs: int = 5000,
    plateau_epochs: int = 50,
    plateau_tol: float = 1e-9,
):
    """Linear quantile regression by full-batch subgradient descent.

    Warm-starts at the least-squares solution; the step decays as
    lr / sqrt(1 + epoch); the best iterate by training loss is kept.
    Convergence is declared when the best loss stops improving by more than
    ``plateau_tol`` for ``plateau_epochs`` epochs.
    """
    n, p = Xs.shape
    design = np.hstack([np.ones((n, 1)), Xs])
    w0, b0 = solve_least_squares(Xs, z)
    params = np.concatenate([[b0], w0])

    def loss_of(theta):
        return float(np.mean(pinball_vector(z, design @ theta, tau)))

    best = params.copy()
    best_loss = loss_of(params)
    stale = 0
    for epoch in range(max_epochs):
        pred = design @ params
        residual = z - pred
        # valid subgradient selection: 0 at exact ties keeps optima fixed
        slope = np.where(residual > 0, -tau, np.where(residual < 0, 1.0 - tau, 0.0))
        grad = design.T @ slope / n
        if np.all(grad == 0.0):
            break
        step = learning_rate / np.sqrt(1.0 + epoch)
        params = params - step * grad
        current = loss_of(params)
        if current < best_loss - plateau_tol:
            best_loss = current
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= plateau_epochs:
                break
    return best[1:], float(best[0]), best_loss


def fit_bayes_ridge(
    Xs: np.ndarray,
    z: np.ndarray,
    max_iter: int = 300,
    tol: float = 1e-6,
    alpha_fixed: float | None = None,
    beta_fixed: float | None = None,
):
    """Gaussian linear model with evidence-maximized precisions.

    alpha is the prior precision on weights, beta the noise precision; either
    can be pinned via ``*_fixed``. Returns (weights, intercept, posterior
    covariance, beta).
    """
    n, p = Xs.shape
    intercept = float(z.mean())
    t = z - intercept
    gram = Xs.T @ Xs
    rhs = Xs.T @ t
    eigvals = np.linalg.eigvalsh(gram) if p else np.zeros(0)

    target_var = float(np.var(t))
    alpha = alpha_fixed if alpha_fixed is not None else 1.0
    beta = beta_fixed if beta_fixed is not None else (1.0 / target_var if target_var > 0 else 1e12)

    mu = np.zeros(p)
    sigma = np.eye(p)
    for _ in range(max_iter):
        a_matrix = alpha * np.eye(p) + beta * gram
        sigma = np.linalg.inv(a_matrix)
        mu = beta * sigma @ rhs
        if alpha_fixed is not None and beta_fixed is not None:
            break
        gamma = float(np.sum(beta * eigvals / (alpha + beta * eigvals)))
        mu_sq = float(mu @ mu)
        alpha_new = alpha if alpha_fixed is not None else min(
            gamma / mu_sq if mu_sq > 0 else 1e12, 1e12
        )
        residual = t - Xs @ mu
        rss = float(residual @ residual)
        beta_new = beta if beta_fixed is not None else min(
            max(n - gamma, 1e-12) / rss if rss > 0 else 1e12, 1e12
        )
        if (
            abs(alpha_new - alpha) <= tol * max(abs(alpha), 1.0)
            and abs(beta_new - beta) <= tol * max(abs(beta), 1.0)
        ):
            alpha, beta = alpha_new, beta_new
            a_matrix = alpha * np.eye(p) + beta * gram
            sigma = np.linalg.inv(a_matrix)
            mu = beta * sigma @ rhs
            break
        alpha, beta = alpha_new, beta_new

    return mu, intercept, sigma, float(beta)


def bayes_predictive(Xs: np.ndarray, mu: np.ndarray, intercept: float, sigma: np.ndarray, beta: float):
    """Predictive mean and standard deviation per row, in target (log) space."""
    mean = intercept + Xs @ mu
    var = 1.0 / beta + np.einsum("ij,jk,ik->i", Xs, sigma, Xs)
    return mean, np.sqrt(np.maximum(var, 0.0))


def standard_normal_quantile(tau: float) -> float:
    from scipy.stats import norm

    if not 0 < tau < 1:
        raise ModelError(f"tau must be in (0, 1), got {tau}")
    return float(norm.ppf(tau))


def fit_bagging_members(
    Xs: np.ndarray,
    z: np.ndarray,
    members: int = 50,
    sample_fraction: float = 1.0,
    seed: int = 0,
):
    """Bootstrap ensemble of least-squares fits; returns (weights, intercepts)."""
    n = len(z)
    size = max(2, int(round(sample_fraction * n)))
    rng = np.random.default_rng(seed)
    weight_rows = []
    intercepts = []
    for _ in range(members):
        rows = rng.integers(0, n, size=size)
        w, b = solve_least_squares(Xs[rows], z[rows])
        weight_rows.append(w)
        intercepts.append(b)
    return np.stack(weight_rows), np.asarray(intercepts)
