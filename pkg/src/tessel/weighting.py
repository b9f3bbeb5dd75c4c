"""GP-error-model weighting of test residuals and the predictivity estimators.

The prediction error ``y - eta_m`` is modelled as a GP with mean ``delta_hat``
(the kriging interpolator of the training residuals, zero for interpolating
models) and covariance ``sigma^2 K_{|m}``. The weights minimize the squared
MMD, for the fourth-moment kernel ``Kbar``, between the weighted test
measure and the target measure; this is the expected squared error of the
weighted ISE estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .discrepancy import Potential, mmd_squared
from .errors import (
    ConditioningError,
    DegenerateDenominatorError,
    DegenerateDesignError,
    DimensionMismatchError,
    OverlapError,
    ValidationError,
)
from .kernels import ConditionedKernel, jittered_cholesky, kbar, kbar_prime, has_duplicate_rows
from .measures import PointSet, as_points

OVERLAP_TOL = 1e-12
INTERPOLATION_RTOL = 1e-9
RESIDUAL_RTOL = 1e-8


class ErrorInterpolant:
    """``delta_hat(x) = k_m(x)^T K_m^{-1} (y_m - eta_m)``; vectorized over rows."""

    def __init__(self, ck: ConditionedKernel, coef):
        self.ck = ck
        self.coef = coef

    @property
    def is_zero(self) -> bool:
        return self.coef is None

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.coef is None:
            return np.zeros(X.shape[0])
        return self.ck.base.cross(X, self.ck.X_m.points) @ self.coef


def error_interpolant(ck: ConditionedKernel, y_m, eta_m_at_train,
                      rtol: float = INTERPOLATION_RTOL) -> ErrorInterpolant:
    """Kriging interpolator of the training residuals.

    When ``max |y_m - eta_m| <= rtol * range(y_m)`` the model is treated as an
    interpolator and the result is identically zero.
    """
    y = np.asarray(y_m, dtype=np.float64).reshape(-1)
    eta = np.asarray(eta_m_at_train, dtype=np.float64).reshape(-1)
    if y.shape != eta.shape or y.size != ck.m:
        raise DimensionMismatchError(
            f"need {ck.m} training responses and predictions, got {y.size} and {eta.size}"
        )
    r = y - eta
    if ck.m == 0 or np.max(np.abs(r)) <= rtol * (np.ptp(y) if y.size else 0.0):
        return ErrorInterpolant(ck, None)
    return ErrorInterpolant(ck, ck.solve(r))


@dataclass(frozen=True)
class WeightedTestSet:
    X_n: PointSet
    weights: np.ndarray
    scheme: str = "uniform"
    residual: float = 0.0
    jitter: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "X_n", as_points(self.X_n))
        if w.size != self.X_n.size:
            raise DimensionMismatchError("one weight per test point required")
        if self.scheme not in ("uniform", "optimal", "optimal_prime"):
            raise ValidationError(f"unknown weighting scheme {self.scheme!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, X_n):
        X_n = as_points(X_n)
        return cls(X_n, np.full(X_n.size, 1.0 / X_n.size), "uniform")

    @property
    def n(self):
        return self.X_n.size

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "weights": [float(v) for v in self.weights],
            "weight_sum": float(self.weights.sum()),
            "solver_residual": self.residual,
            "jitter": self.jitter,
        }


def check_disjoint(X_m, X_n, tol=OVERLAP_TOL):
    """Raise :class:`OverlapError` if a test point matches a training point
    to within ``tol`` in every coordinate."""
    A = np.asarray(X_m.points if isinstance(X_m, PointSet) else X_m, dtype=np.float64)
    B = np.asarray(X_n.points if isinstance(X_n, PointSet) else X_n, dtype=np.float64)
    if A.size == 0 or B.size == 0:
        return
    for i in range(B.shape[0]):
        hit = np.all(np.abs(A - B[i]) <= tol, axis=1)
        if hit.any():
            raise OverlapError(
                f"test point {i} coincides with training point {int(np.flatnonzero(hit)[0])}"
            )


def _solve(Kb, p):
    L, jitter = jittered_cholesky(Kb)
    w = linalg.cho_solve((L, True), p, check_finite=False)
    res = np.max(np.abs(Kb @ w - p)) if p.size else 0.0
    # a few refinement sweeps recover the unjittered solution when jitter was needed
    for _ in range(3 if jitter > 0 else 0):
        r = p - Kb @ w
        w_new = w + linalg.cho_solve((L, True), r, check_finite=False)
        res_new = np.max(np.abs(Kb @ w_new - p))
        if not res_new < res:
            break
        w, res = w_new, res_new
    return w, float(res), jitter


def _weights_for(kern, ck, X_n, mu_sample, scheme):
    X_n = as_points(X_n, ck.dim)
    mu_sample = as_points(mu_sample, ck.dim)
    if X_n.size == 0:
        raise ValidationError("empty test set")
    if mu_sample.size == 0:
        raise ValidationError("mu_sample must be nonempty")
    check_disjoint(ck.X_m, X_n)
    if has_duplicate_rows(X_n.points):
        raise DegenerateDesignError("test set has duplicate rows")
    Kb = kern.cross(X_n.points)
    p = Potential.empirical(kern, mu_sample)(X_n.points)
    w, res, jitter = _solve(Kb, p)
    scale = np.max(np.abs(p))
    if not np.all(np.isfinite(w)):
        raise ConditioningError("optimal weights are not finite")
    return WeightedTestSet(X_n, w, scheme, residual=res / scale if scale > 0 else res, jitter=jitter)


def optimal_weights(ck: ConditionedKernel, X_n, mu_sample, delta_hat=None) -> WeightedTestSet:
    """``w* = Kbar(X_n)^{-1} p``, with ``p_i`` the average of ``Kbar(x_i, s)``
    over ``mu_sample``. Weights are unconstrained. The stored ``residual`` is
    ``max|Kbar w - p| / max|p|``."""
    if delta_hat is not None and getattr(delta_hat, "is_zero", False):
        delta_hat = None
    return _weights_for(kbar(ck, delta_hat), ck, X_n, mu_sample, "optimal")


def optimal_prime_weights(ck: ConditionedKernel, X_n, mu_sample, predictor, y_bar_m) -> WeightedTestSet:
    """Weights for the ``ybar_m``-centred denominator, built on ``Kbar'``."""
    return _weights_for(kbar_prime(ck, predictor, y_bar_m), ck, X_n, mu_sample, "optimal_prime")


def optimal_weights_prefixes(ck, X_n, mu_sample, sizes, delta_hat=None):
    """Optimal weights for every prefix ``X_n[:k]``, ``k in sizes``.

    ``Kbar`` and ``p`` are assembled once on the full set; each prefix solves
    its leading block.
    """
    X_n = as_points(X_n, ck.dim)
    mu_sample = as_points(mu_sample, ck.dim)
    check_disjoint(ck.X_m, X_n)
    if delta_hat is not None and getattr(delta_hat, "is_zero", False):
        delta_hat = None
    kern = kbar(ck, delta_hat)
    Kb = kern.cross(X_n.points)
    p = Potential.empirical(kern, mu_sample)(X_n.points)
    out = {}
    for k in sizes:
        w, res, jitter = _solve(Kb[:k, :k], p[:k])
        scale = np.max(np.abs(p[:k]))
        out[k] = WeightedTestSet(X_n.take(range(k)), w, "optimal",
                                 residual=res / scale if scale > 0 else res, jitter=jitter)
    return out


def delta_bar_sq(ck: ConditionedKernel, wts: WeightedTestSet, mu_sample, delta_hat=None,
                 sigma2: float = 1.0) -> float:
    """``sigma^2 * d^2_{Kbar}(zeta, mu_sample)``: predicted mean-squared error of
    the weighted ISE estimate against the ISE under ``mu_sample``.

    Exact for ``sigma^2 = 1``; otherwise ``sigma^2`` is applied as a plain factor.
    """
    if delta_hat is not None and getattr(delta_hat, "is_zero", False):
        delta_hat = None
    check_disjoint(ck.X_m, wts.X_n)
    pot = Potential.empirical(kbar(ck, delta_hat), as_points(mu_sample, ck.dim))
    return float(sigma2) * mmd_squared(wts, pot)


@dataclass
class PredictivityReport:
    q2_hat: float
    q2_star: float
    ise_uniform: float
    ise_weighted: float
    denom_uniform: float
    weights: WeightedTestSet
    q2_prime: float | None = None
    q2_prime_star: float | None = None
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "q2_hat": self.q2_hat,
            "q2_star": self.q2_star,
            "q2_prime": self.q2_prime,
            "q2_prime_star": self.q2_prime_star,
            "ise_uniform": self.ise_uniform,
            "ise_weighted": self.ise_weighted,
            "denom_uniform": self.denom_uniform,
            "weights": self.weights.to_dict(),
            "diagnostics": self.diagnostics,
            "provenance": self.provenance,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def q2_report(y_n, eta_n, wts: WeightedTestSet, y_m=None,
              prime_weights: WeightedTestSet | None = None) -> PredictivityReport:
    """Uniform and weighted predictivity coefficients.

    ``q2_star`` divides the weighted residual sum by the uniform mean squared
    deviation of ``y_n``. With ``y_m``, ``q2_prime`` centres the denominator
    on the training mean instead; ``q2_prime_star`` additionally weights that
    denominator with ``prime_weights`` (numerator kept uniform).
    """
    y = np.asarray(y_n, dtype=np.float64).reshape(-1)
    eta = np.asarray(eta_n, dtype=np.float64).reshape(-1)
    if y.shape != eta.shape or y.size != wts.n:
        raise DimensionMismatchError(
            f"lengths differ: y_n={y.size}, eta_n={eta.size}, weights={wts.n}"
        )
    if y.size < 2:
        raise ValidationError("need at least two test points")
    r2 = (y - eta) ** 2
    dev2 = (y - y.mean()) ** 2
    denom = float(dev2.mean())
    if not denom > 0:
        raise DegenerateDenominatorError("test responses are constant")
    ise_u = float(r2.mean())
    ise_w = ise_u if wts.scheme == "uniform" else float(wts.weights @ r2)
    rep = PredictivityReport(
        q2_hat=1.0 - ise_u / denom,
        q2_star=1.0 - ise_w / denom,
        ise_uniform=ise_u,
        ise_weighted=ise_w,
        denom_uniform=denom,
        weights=wts,
        diagnostics={
            "jitter": wts.jitter,
            "solver_residual": wts.residual,
            "weight_sum": float(wts.weights.sum()),
        },
    )
    if y_m is not None:
        y_bar_m = float(np.mean(np.asarray(y_m, dtype=np.float64)))
        dev2_m = (y - y_bar_m) ** 2
        if not dev2_m.sum() > 0:
            raise DegenerateDenominatorError("test responses all equal the training mean")
        rep.q2_prime = 1.0 - r2.sum() / dev2_m.sum()
        if prime_weights is not None:
            if prime_weights.n != y.size:
                raise DimensionMismatchError("prime weights do not match the test set")
            d_w = float(prime_weights.weights @ dev2_m)
            rep.q2_prime_star = 1.0 - ise_u / d_w if d_w != 0 else None
            rep.diagnostics["prime_weight_sum"] = float(prime_weights.weights.sum())
            rep.diagnostics["prime_solver_residual"] = prime_weights.residual
    elif prime_weights is not None:
        raise ValidationError("prime weights need the training responses y_m")
    return rep
