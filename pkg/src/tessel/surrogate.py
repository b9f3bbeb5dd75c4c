"""Ordinary kriging (constant unknown mean) with an anisotropic Matern-5/2
kernel, maximum-likelihood lengthscales and leave-one-out predictivity."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .errors import (
    ConditioningError,
    DegenerateDenominatorError,
    DegenerateDesignError,
    DimensionMismatchError,
    ValidationError,
)
from .kernels import KernelSpec, gram, has_duplicate_rows, jittered_cholesky
from .measures import PointSet, as_points
from .rng import n_threads

BOUNDS = (0.05, 5.0)  # lengthscale bounds, as multiples of the per-dimension range


@dataclass(frozen=True)
class FitConfig:
    optimize: bool = True
    theta_init: tuple | None = None
    n_starts: int = 3
    max_evals: int = 200

    def to_dict(self):
        return {
            "optimize": self.optimize,
            "theta_init": None if self.theta_init is None else list(self.theta_init),
            "n_starts": self.n_starts,
            "max_evals": self.max_evals,
        }


@dataclass
class KrigingModel:
    X_m: PointSet
    y_m: np.ndarray
    kernel: KernelSpec
    beta: float
    dual: np.ndarray
    L: np.ndarray
    jitter: float
    loglik: float
    sigma2: float
    loglik_init: float | None = None

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def __call__(self, X) -> np.ndarray:
        return predict(self, X)

    def summary(self):
        return {
            "theta": list(self.kernel.lengthscales),
            "beta": self.beta,
            "sigma2": self.sigma2,
            "log_likelihood": self.loglik,
            "log_likelihood_init": self.loglik_init,
            "jitter": self.jitter,
            "m": self.X_m.size,
        }


def _factor(X, y, theta):
    """Concentrated-likelihood pieces for lengthscales ``theta``."""
    kern = KernelSpec("Matern52", tuple(theta), "anisotropic_distance")
    L, jitter = jittered_cholesky(gram(kern, X))
    m = y.size
    ones = np.ones(m)
    Ri1 = linalg.cho_solve((L, True), ones, check_finite=False)
    Riy = linalg.cho_solve((L, True), y, check_finite=False)
    beta = float(Riy.sum() / Ri1.sum())
    dual = Riy - beta * Ri1
    resid = y - beta
    sigma2 = float(resid @ dual) / m
    logdet = 2.0 * np.log(np.diag(L)).sum()
    ll = -0.5 * (m * math.log(max(sigma2, np.finfo(float).tiny)) + logdet + m * (1.0 + math.log(2 * math.pi)))
    return kern, L, jitter, beta, dual, sigma2, float(ll)


def _loglik(log_theta, X, y):
    try:
        return _factor(X, y, np.exp(log_theta))[-1]
    except ConditioningError:
        return -np.inf


def _ranges(X):
    r = np.ptp(X, axis=0)
    return np.where(r > 0, r, 1.0)


def fit(X_m, y_m, theta_init=None, optimize_theta: bool = True, *, config: FitConfig | None = None) -> KrigingModel:
    """Fit ordinary kriging; with ``optimize_theta`` the lengthscales maximize
    the concentrated log-likelihood (bounded Nelder-Mead in log space from
    ``n_starts`` deterministic starts, ``max_evals`` evaluations each; bounds
    ``[0.05, 5] * range`` per dimension)."""
    if config is None:
        config = FitConfig(optimize=optimize_theta,
                           theta_init=None if theta_init is None else tuple(np.atleast_1d(theta_init)))
    X = as_points(X_m).points
    y = np.asarray(y_m, dtype=np.float64).reshape(-1)
    m, d = X.shape
    if y.size != m:
        raise DimensionMismatchError(f"{m} training points but {y.size} responses")
    if m < 2:
        raise ValidationError("kriging needs m >= 2")
    if not np.all(np.isfinite(y)):
        raise ValidationError("responses must be finite")
    if has_duplicate_rows(X):
        raise DegenerateDesignError("training design has duplicate rows")
    rng_ = _ranges(X)
    lo, hi = np.log(BOUNDS[0] * rng_), np.log(BOUNDS[1] * rng_)
    if config.theta_init is None:
        t0 = 0.5 * rng_
    else:
        t0 = np.broadcast_to(np.asarray(config.theta_init, dtype=np.float64), (d,)).copy()
    if np.any(t0 <= 0):
        raise ValidationError("theta_init must be positive")
    x0 = np.log(t0)
    ll0 = _loglik(x0, X, y)
    best_x, best_ll = x0, ll0
    if config.optimize and np.ptp(y) > 0:
        starts = [np.clip(x0, lo, hi)]
        for frac in np.linspace(0.25, 0.75, max(0, config.n_starts - 1)):
            starts.append(lo + frac * (hi - lo))
        for s in starts[: config.n_starts]:
            res = optimize.minimize(
                lambda v: -_loglik(v, X, y), s, method="Nelder-Mead",
                bounds=list(zip(lo, hi)),
                options={"maxfev": config.max_evals, "xatol": 1e-4, "fatol": 1e-9},
            )
            ll = -float(res.fun)
            if ll > best_ll:
                best_x, best_ll = np.asarray(res.x), ll
    if not np.isfinite(best_ll):
        raise ConditioningError("no lengthscale gave a usable correlation matrix")
    kern, L, jitter, beta, dual, sigma2, ll = _factor(X, y, np.exp(best_x))
    return KrigingModel(as_points(X), y.copy(), kern, beta, dual, L, jitter, ll, sigma2, loglik_init=ll0)


def predict(model: KrigingModel, X) -> np.ndarray:
    """``eta(x) = beta + k_m(x)^T K_m^{-1} (y - beta 1)``."""
    X = as_points(X).points
    if X.shape[1] != model.X_m.dim:
        raise DimensionMismatchError(f"model has dimension {model.X_m.dim}, points {X.shape[1]}")
    return model.beta + model.kernel.cross(X, model.X_m.points) @ model.dual


def fit_with(config: FitConfig, X, y) -> KrigingModel:
    return fit(X, y, config=config)


def loo_q2(X_m, y_m, fit_config: FitConfig | None = None) -> float:
    """Leave-one-out predictivity with a full refit (lengthscales included)
    on each ``m - 1`` subset."""
    config = fit_config or FitConfig()
    X = as_points(X_m).points
    y = np.asarray(y_m, dtype=np.float64).reshape(-1)
    m = X.shape[0]
    if m < 3:
        raise ValidationError("LOO needs m >= 3")
    if y.size != m:
        raise DimensionMismatchError(f"{m} training points but {y.size} responses")
    denom = float(((y - y.mean()) ** 2).sum())
    if not denom > 0:
        raise DegenerateDenominatorError("training responses are constant")

    def fold(i):
        keep = np.arange(m) != i
        model = fit_with(config, X[keep], y[keep])
        return float(predict(model, X[i:i + 1])[0])

    workers = min(n_threads(), m)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            preds = np.array(list(ex.map(fold, range(m))))
    else:
        preds = np.array([fold(i) for i in range(m)])
    return 1.0 - float(((y - preds) ** 2).sum()) / denom
