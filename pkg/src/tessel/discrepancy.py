"""Potentials (kernel embeddings of measures) and squared MMD.

For tensor-product Matern-5/2 kernels and uniform(0,1) / standard-normal
marginals the potential is known in closed form and factorizes over
coordinates. Otherwise it is the empirical average of the kernel over a
quadrature sample.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .errors import DomainError, UnsupportedMeasureError, ValidationError
from .kernels import KernelSpec, _as_matrix
from .measures import (
    Empirical,
    Normal,
    PointSet,
    ProductMarginals,
    Uniform,
    UnitCubeUniform,
    as_points,
)

_SQRT5 = math.sqrt(5.0)
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# cap on the number of kernel entries held in memory at once
_CHUNK_ENTRIES = 1 << 22


def potential_uniform_matern52(x, theta):
    """Potential of the uniform measure on [0,1] for the 1-d Matern-5/2 kernel."""
    x = np.asarray(x, dtype=np.float64)
    theta = float(theta)
    if not theta > 0:
        raise ValidationError("theta must be positive")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("uniform potential is defined on [0, 1]")

    def S(z):
        return np.exp(-_SQRT5 * z / theta) * (
            5.0 * _SQRT5 * z * z + 25.0 * theta * z + 8.0 * _SQRT5 * theta * theta
        )

    return 16.0 * theta / (3.0 * _SQRT5) - (S(x) + S(1.0 - x)) / (15.0 * theta)


def _T(x, theta):
    a = _SQRT5 / theta
    t2 = theta * theta
    poly = 5.0 / t2 * x * x + (3.0 - 10.0 / t2) * a * x + 5.0 / t2 * (5.0 / t2 - 2.0) + 3.0
    z = (a - x) / _SQRT2
    # erfc(z) * exp(a^2/2 - a x) == erfcx(z) * exp(-x^2/2) exactly; the erfcx
    # form cannot overflow for z >= 0, the plain form cannot for z < 0
    with np.errstate(over="ignore", invalid="ignore"):
        tail = np.where(
            z >= 0.0,
            special.erfcx(np.maximum(z, 0.0)) * np.exp(-0.5 * x * x),
            special.erfc(z) * np.exp(np.minimum(0.5 * a * a - a * x, 0.0)),
        )
    gauss = a * (3.0 - 5.0 / t2) * np.exp(-0.5 * x * x) / (3.0 * _SQRT2PI)
    return poly / 6.0 * tail + gauss


def potential_normal_matern52(x, theta):
    """Potential of N(0,1) for the 1-d Matern-5/2 kernel."""
    x = np.asarray(x, dtype=np.float64)
    theta = float(theta)
    if not theta > 0:
        raise ValidationError("theta must be positive")
    return _T(x, theta) + _T(-x, theta)


def _is_std_uniform(m):
    return isinstance(m, Uniform) and m.a == 0.0 and m.b == 1.0


def _is_std_normal(m):
    return isinstance(m, Normal) and m.mu == 0.0 and m.sigma == 1.0


def _analytic_marginals(kernel, measure):
    if not (isinstance(kernel, KernelSpec) and kernel.family == "Matern52"
            and kernel.form == "tensor_product"):
        raise UnsupportedMeasureError(
            "analytic potentials need a tensor-product Matern52 kernel"
        )
    if isinstance(measure, Empirical):
        raise UnsupportedMeasureError("empirical measures use the empirical mode")
    if measure.dim != kernel.dim:
        raise ValidationError("kernel and measure dimensions differ")
    margs = measure.marginals
    if not all(_is_std_uniform(m) or _is_std_normal(m) for m in margs):
        raise UnsupportedMeasureError(
            "analytic potentials exist for uniform(0,1) and normal(0,1) marginals only"
        )
    return margs


def _marginal_energy(uniform: bool, theta: float) -> float:
    if uniform:
        f = lambda x: float(potential_uniform_matern52(x, theta))  # noqa: E731
        return integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    g = lambda x: float(potential_normal_matern52(x, theta)) * math.exp(-0.5 * x * x) / _SQRT2PI  # noqa: E731
    return 2.0 * integrate.quad(g, 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def _row_blocks(n_rows, n_cols):
    step = max(1, _CHUNK_ENTRIES // max(1, n_cols))
    for s in range(0, n_rows, step):
        yield slice(s, min(n_rows, s + step))


class Potential:
    """``P_{K,mu}(x) = integral of K(x, .) d mu``.

    Build with :meth:`analytic` or :meth:`empirical`. ``kernel`` is a
    :class:`KernelSpec` or any kernel object exposing ``cross``/``diag``.
    """

    def __init__(self, kernel, measure, mode, atoms=None, weights=None):
        self.kernel = kernel
        self.measure = measure
        self.mode = mode
        self.atoms = atoms
        self.weights = weights
        self._energy = None
        if mode == "analytic":
            self._margs = _analytic_marginals(kernel, measure)
        elif mode != "empirical":
            raise ValidationError(f"unknown potential mode {mode!r}")

    @classmethod
    def analytic(cls, kernel: KernelSpec, measure) -> "Potential":
        if isinstance(measure, UnitCubeUniform):
            measure = ProductMarginals(measure.marginals)
        return cls(kernel, measure, "analytic")

    @classmethod
    def empirical(cls, kernel, atoms, weights=None) -> "Potential":
        atoms = as_points(atoms, kernel.dim)
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float64)
        return cls(kernel, Empirical(atoms, weights), "empirical", atoms, weights)

    @property
    def dim(self):
        return self.kernel.dim

    def __call__(self, X) -> np.ndarray:
        X = _as_matrix(X, self.dim)
        if self.mode == "analytic":
            out = np.ones(X.shape[0])
            for i, (m, th) in enumerate(zip(self._margs, self.kernel.lengthscales)):
                if _is_std_uniform(m):
                    out *= potential_uniform_matern52(X[:, i], th)
                else:
                    out *= potential_normal_matern52(X[:, i], th)
            return self.kernel.scale * out
        S = self.atoms.points
        out = np.empty(X.shape[0])
        for sl in _row_blocks(X.shape[0], S.shape[0]):
            K = self.kernel.cross(X[sl], S)
            out[sl] = K.mean(axis=1) if self.weights is None else K @ self.weights
        return out

    def energy(self) -> float:
        """``E_K(mu)``, the double integral of ``K`` against ``mu``; cached.

        Exact double sum for empirical measures. Analytic ones factorize into
        one-dimensional integrals of the marginal potentials, done by adaptive
        quadrature.
        """
        if self._energy is None:
            if self.mode == "empirical":
                self._energy = _quadratic_form(self.kernel, self.atoms.points, self.weights)
            else:
                e = self.kernel.scale
                for m, th in zip(self._margs, self.kernel.lengthscales):
                    e *= _marginal_energy(_is_std_uniform(m), float(th))
                self._energy = e
        return self._energy


def potential(p: Potential, x) -> np.ndarray | float:
    """Evaluate ``p`` at one point (returns a float) or at rows of a matrix."""
    arr = np.asarray(x.points if isinstance(x, PointSet) else x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.size != p.dim:
            raise ValidationError(f"point has dimension {arr.size}, potential {p.dim}")
        return float(p(arr[None])[0])
    return p(arr)


def _quadratic_form(kernel, X, w=None):
    """``w^T K(X, X) w`` (uniform ``w = 1/n`` when omitted), blockwise."""
    n = X.shape[0]
    w = np.full(n, 1.0 / n) if w is None else np.asarray(w, dtype=np.float64)
    total = 0.0
    for sl in _row_blocks(n, n):
        total += w[sl] @ (kernel.cross(X[sl], X) @ w)
    return float(total)


def _unpack_measure(xi, dim):
    if hasattr(xi, "X_n") and hasattr(xi, "weights"):
        return as_points(xi.X_n, dim).points, np.asarray(xi.weights, dtype=np.float64)
    if isinstance(xi, tuple) and len(xi) == 2:
        pts, w = xi
        return as_points(pts, dim).points, np.asarray(w, dtype=np.float64)
    X = as_points(xi, dim).points
    return X, np.full(X.shape[0], 1.0 / X.shape[0])


def mmd_squared(xi, p: Potential, energy_constant_mode: str = "absolute") -> float:
    """Squared MMD between a weighted point measure ``xi`` and ``p``'s measure.

    ``xi`` is a PointSet (uniform weights), a ``(points, weights)`` pair, or a
    weighted test set. ``energy_constant_mode='relative'`` drops the constant
    ``E_K(mu)``, which does not affect any argmin.

    For the energy-distance kernel the value is the energy distance
    ``2/n sum E|x_i - Z| - 1/n^2 sum |x_i - x_j| - E|Z - Z'|``, i.e. twice the
    quadratic form built from ``K_E``.
    """
    if energy_constant_mode not in ("absolute", "relative"):
        raise ValidationError("energy_constant_mode must be 'absolute' or 'relative'")
    X, w = _unpack_measure(xi, p.dim)
    val = w @ (p.kernel.cross(X, X) @ w) - 2.0 * (w @ p(X))
    if energy_constant_mode == "absolute":
        val += p.energy()
    if isinstance(p.kernel, KernelSpec) and p.kernel.family == "EnergyDistance":
        val *= 2.0
    return float(val)
