"""Matern and energy-distance kernels, and kernels conditioned on a design.

A kernel object exposes ``cross(A, B)`` (the matrix of evaluations over the
cross product), ``diag(A)`` and ``__call__(x, y)`` for single points. The
conditioned kernel ``K_{|m}`` is the posterior covariance of a GP with prior
covariance ``K`` after observing a training design ``X_m``; ``kbar`` and
``kbar_prime`` build the fourth-moment kernels that drive the residual
weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _backend
from .errors import (
    ConditioningError,
    DegenerateDesignError,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    ValidationError,
)
from .measures import PointSet, as_points

MATERN = {"Matern12": 1, "Matern32": 3, "Matern52": 5}
FAMILIES = (*MATERN, "EnergyDistance")
FORMS = ("tensor_product", "anisotropic_distance")

# jitter multipliers of trace/n tried in order
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def _as_matrix(x, dim):
    arr = np.asarray(x.points if isinstance(x, PointSet) else x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, dim) if arr.size != dim else arr.reshape(1, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, form, per-dimension lengthscales and scale ``sigma^2``."""

    family: str
    lengthscales: tuple
    form: str = "tensor_product"
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(t) for t in self.lengthscales))
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}")
        if self.form not in FORMS:
            raise ValidationError(f"unknown kernel form {self.form!r}")
        if not self.lengthscales:
            raise ValidationError("need one lengthscale per dimension")
        if any(not (t > 0 and np.isfinite(t)) for t in self.lengthscales):
            raise ValidationError("lengthscales must be positive")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValidationError("scale must be positive")
        if self.family == "EnergyDistance" and (
            self.form != "anisotropic_distance" or any(t != 1.0 for t in self.lengthscales)
        ):
            raise ValidationError("EnergyDistance takes the anisotropic_distance form with unit lengthscales")

    @classmethod
    def matern52(cls, theta, dim=None, form="tensor_product", scale=1.0):
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if dim is not None and theta.size == 1:
            theta = np.full(dim, theta[0])
        return cls("Matern52", tuple(theta), form, scale)

    @classmethod
    def energy(cls, dim, scale=1.0):
        return cls("EnergyDistance", (1.0,) * dim, "anisotropic_distance", scale)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    @property
    def positive_definite(self) -> bool:
        return self.family != "EnergyDistance"

    def cross(self, A, B) -> np.ndarray:
        A = _as_matrix(A, self.dim)
        B = _as_matrix(B, self.dim)
        if self.family == "EnergyDistance":
            na = np.sqrt((A * A).sum(1))
            nb = np.sqrt((B * B).sum(1))
            K = 0.5 * (na[:, None] + nb[None, :] - _backend.distances(A, B))
        elif self.form == "tensor_product":
            K = _backend.matern_tensor(A, B, self.lengthscales, MATERN[self.family])
        else:
            K = _backend.matern_aniso(A, B, self.lengthscales, MATERN[self.family])
        if self.scale != 1.0:
            K *= self.scale
        return K

    def diag(self, A) -> np.ndarray:
        A = _as_matrix(A, self.dim)
        if self.family == "EnergyDistance":
            return self.scale * np.sqrt((A * A).sum(1))
        return np.full(A.shape[0], self.scale)

    def __call__(self, x, y) -> float:
        return float(eval_kernel(self, x, y))

    def to_dict(self):
        return {
            "family": self.family,
            "form": self.form,
            "lengthscales": list(self.lengthscales),
            "scale": self.scale,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj):
        unknown = set(obj) - {"family", "form", "lengthscales", "scale"}
        if unknown:
            raise ValidationError(f"unknown kernel keys: {sorted(unknown)}")
        try:
            return cls(
                family=obj["family"],
                lengthscales=tuple(obj["lengthscales"]),
                form=obj.get("form", "tensor_product"),
                scale=float(obj.get("scale", 1.0)),
            )
        except KeyError as exc:
            raise ValidationError(f"kernel spec missing {exc}") from None

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != spec.dim or y.size != spec.dim:
        raise DimensionMismatchError(
            f"kernel has dimension {spec.dim}, points have {x.size} and {y.size}"
        )
    return float(spec.cross(x[None], y[None])[0, 0])


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix over ``A x B``; exactly symmetric when ``B`` is omitted or is ``A``."""
    same = B is None or B is A
    A = _as_matrix(A, spec.dim)
    if same:
        G = spec.cross(A, A)
        iu = np.triu_indices(G.shape[0], 1)
        G[(iu[1], iu[0])] = G[iu]
        return G
    return spec.cross(A, _as_matrix(B, spec.dim))


def jittered_cholesky(K):
    """Lower Cholesky factor of ``K + jitter*I`` with the smallest jitter on the
    ladder ``0, 1e-12 t, 1e-11 t, ..., 1e-6 t`` (``t = trace/n``) that works."""
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    t = np.trace(K) / n
    if not np.isfinite(t) or t <= 0:
        raise ConditioningError("matrix has a nonpositive or non-finite trace")
    for mult in JITTER_LADDER:
        jitter = mult * t
        try:
            L = linalg.cholesky(K + jitter * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, float(jitter)
    raise ConditioningError(
        f"factorization failed with jitter up to {JITTER_LADDER[-1]:g} * trace/n"
    )


def has_duplicate_rows(X, tol=0.0) -> bool:
    X = np.asarray(X)
    if X.shape[0] < 2:
        return False
    if tol == 0.0:
        return np.unique(X, axis=0).shape[0] < X.shape[0]
    D = _backend.distances(X, X)
    np.fill_diagonal(D, np.inf)
    return bool(D.min() <= tol)


class ConditionedKernel:
    """``K_{|m}(x, y) = K(x, y) - k_m(x)^T K_m^{-1} k_m(y)``."""

    def __init__(self, base: KernelSpec, X_m: PointSet, L: np.ndarray, jitter: float):
        self.base = base
        self.X_m = X_m
        self.L = L
        self.jitter = jitter

    @property
    def dim(self):
        return self.base.dim

    @property
    def m(self):
        return self.X_m.size

    def _whiten(self, A):
        """``L^{-1} k_m(A)^T``, shape ``(m, nA)``."""
        Km = self.base.cross(self.X_m.points, A)
        return linalg.solve_triangular(self.L, Km, lower=True, check_finite=False)

    def solve(self, rhs):
        """``(K_m + jitter I)^{-1} rhs``."""
        return linalg.cho_solve((self.L, True), rhs, check_finite=False)

    def cross(self, A, B=None) -> np.ndarray:
        same = B is None or B is A
        A = _as_matrix(A, self.dim)
        if same:
            K = gram(self.base, A)
            if self.m:
                VA = self._whiten(A)
                C = VA.T @ VA
                C = 0.5 * (C + C.T)
                K -= C
            return K
        B = _as_matrix(B, self.dim)
        K = self.base.cross(A, B)
        if self.m:
            K -= self._whiten(A).T @ self._whiten(B)
        return K

    def diag(self, A) -> np.ndarray:
        A = _as_matrix(A, self.dim)
        d = self.base.diag(A)
        if self.m:
            VA = self._whiten(A)
            d = d - np.einsum("ij,ij->j", VA, VA)
        return d

    def __call__(self, x, y) -> float:
        return float(self.cross(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


def condition(spec: KernelSpec, X_m=None) -> ConditionedKernel:
    if not spec.positive_definite:
        raise NotPositiveDefiniteError(
            "the energy-distance kernel is only conditionally positive definite"
        )
    X_m = PointSet.empty(spec.dim) if X_m is None else as_points(X_m, spec.dim)
    if has_duplicate_rows(X_m.points):
        raise DegenerateDesignError("training design has duplicate rows")
    L, jitter = jittered_cholesky(gram(spec, X_m.points))
    return ConditionedKernel(spec, X_m, L, jitter)


def _values(fn, A):
    if fn is None:
        return None
    v = np.asarray(fn(A), dtype=np.float64).reshape(-1)
    if v.shape[0] != A.shape[0]:
        raise DimensionMismatchError("function returned the wrong number of values")
    return v


class KbarKernel:
    """Fourth-moment kernel ``E{d(x)^2 d(y)^2}`` of a Gaussian error process
    ``d ~ GP(mean, K_{|m})``.

    With zero mean this is ``2 K_{|m}(x,y)^2 + K_{|m}(x,x) K_{|m}(y,y)``; with a
    mean function ``a``,
    ``2 [K_{|m}(x,y) + 2 a(x) a(y)] K_{|m}(x,y) + [a(x)^2 + K_{|m}(x,x)][a(y)^2 + K_{|m}(y,y)]``.
    """

    def __init__(self, ck: ConditionedKernel, delta_hat=None):
        self.ck = ck
        self.delta_hat = delta_hat

    @property
    def dim(self):
        return self.ck.dim

    def _parts(self, A, B, same):
        C = self.ck.cross(A, None if same else B)
        s = self.ck.diag(A)
        t = s if same else self.ck.diag(B)
        a = _values(self.delta_hat, A)
        b = a if same else _values(self.delta_hat, B)
        return C, s, t, a, b

    def cross(self, A, B=None) -> np.ndarray:
        same = B is None or B is A
        A = _as_matrix(A, self.dim)
        B = A if same else _as_matrix(B, self.dim)
        C, s, t, a, b = self._parts(A, B, same)
        if a is None:
            return 2.0 * C * C + np.outer(s, t)
        ab = np.outer(a, b)
        return 2.0 * (C + 2.0 * ab) * C + np.outer(a * a + s, b * b + t)

    def diag(self, A) -> np.ndarray:
        A = _as_matrix(A, self.dim)
        s = self.ck.diag(A)
        a = _values(self.delta_hat, A)
        if a is None:
            return 3.0 * s * s
        return 2.0 * (s + 2.0 * a * a) * s + (a * a + s) ** 2

    def __call__(self, x, y) -> float:
        return float(self.cross(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


class KbarPrimeKernel:
    """Fourth-moment kernel for the denominator ``y - ybar_m``: ``Kbar`` (zero
    error mean) plus the terms in ``e = eta_m - ybar_m``."""

    def __init__(self, ck: ConditionedKernel, predictor, y_bar_m: float):
        self.ck = ck
        self.predictor = predictor
        self.y_bar_m = float(y_bar_m)

    @property
    def dim(self):
        return self.ck.dim

    def _centered(self, A):
        return _values(self.predictor, A) - self.y_bar_m

    def cross(self, A, B=None) -> np.ndarray:
        same = B is None or B is A
        A = _as_matrix(A, self.dim)
        B = A if same else _as_matrix(B, self.dim)
        C = self.ck.cross(A, None if same else B)
        s = self.ck.diag(A)
        t = s if same else self.ck.diag(B)
        e = self._centered(A)
        f = e if same else self._centered(B)
        e2, f2 = e * e, f * f
        return (
            2.0 * C * C + np.outer(s, t)
            + np.outer(e2, f2)
            + np.outer(e2, t) + np.outer(s, f2)
            + 4.0 * np.outer(e, f) * C
        )

    def diag(self, A) -> np.ndarray:
        A = _as_matrix(A, self.dim)
        s = self.ck.diag(A)
        e2 = self._centered(A) ** 2
        return 3.0 * s * s + e2 * e2 + 2.0 * e2 * s + 4.0 * e2 * s

    def __call__(self, x, y) -> float:
        return float(self.cross(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


def kbar(ck: ConditionedKernel, delta_hat=None) -> KbarKernel:
    """``delta_hat`` is a vectorized callable ``(n, d) -> (n,)``, or ``None`` for zero."""
    return KbarKernel(ck, delta_hat)


def kbar_prime(ck: ConditionedKernel, predictor, y_bar_m: float) -> KbarPrimeKernel:
    return KbarPrimeKernel(ck, predictor, y_bar_m)
