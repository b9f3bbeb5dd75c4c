"""Incremental test-set construction on a finite candidate set.

Three greedy rules, each resumable from an existing design ``fixed`` (the
training points, treated as already selected but never returned):

* FSSF-fr: maximize ``min(distance to the design, c * dist(x, R(x)))`` where
  ``R(x)`` is the reflection of ``x`` through its nearest face of the unit
  cube and ``c = sqrt(2) * d`` by default.
* greedy support points: minimize
  ``mean_k |x - t_k| - 1/(i+1) * sum_j |x - x_j|`` (energy distance).
* kernel herding: minimize ``P_{K,xi_i}(x) - P_{K,mu}(x)``.

Each rule keeps per-candidate running statistics so a step costs one kernel
(or distance) row. Ties are broken towards the smallest candidate index;
scores within ``1e-12 * max(1, |best|)`` of the best count as ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .discrepancy import Potential
from .errors import (
    DomainError,
    NotPositiveDefiniteError,
    SizeError,
    UnsupportedMeasureError,
    ValidationError,
)
from .kernels import KernelSpec
from .measures import (
    Empirical,
    PointSet,
    as_points,
    iso_transform,
    sobol_sequence,
)
from .rng import FIRST_POINT, make_rng

METHODS = ("fssf", "support_points", "herding")
_ALIASES = {
    "fssf": "fssf", "fssf_fr": "fssf", "fssf-fr": "fssf",
    "support_points": "support_points", "support-points": "support_points", "sp": "support_points",
    "herding": "herding", "kernel_herding": "herding", "kernel-herding": "herding", "kh": "herding",
}

TIE_RTOL = 1e-12
# below this many candidates, support points keeps the full distance matrix
SP_DENSE_LIMIT = 4096
FIXED_MATCH_TOL = 1e-12


def canonical_method(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ValidationError(f"unknown selection method {name!r}") from None


def pick(scores, maximize=False) -> int:
    """Index of the best finite score; near-ties go to the smallest index."""
    s = -scores if maximize else scores
    best = np.min(s)
    if not np.isfinite(best):
        raise SizeError("no unselected candidate left")
    return int(np.flatnonzero(s <= best + TIE_RTOL * max(1.0, abs(best)))[0])


def reflection_distance(X):
    """``dist(x, R(x)) = 2 * min_j min(x_j, 1 - x_j)`` for points in the unit cube."""
    X = np.asarray(X, dtype=np.float64)
    return 2.0 * np.minimum(X, 1.0 - X).min(axis=1)


@dataclass
class SelectionState:
    """Single-owner mutable state of one incremental selection."""

    method: str
    candidates: PointSet
    fixed: PointSet
    selected: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    seed: int = 0
    boundary_factor: float | None = None
    include_fixed: bool = True
    target: PointSet | None = None
    scratch: dict = field(default_factory=dict)

    def __post_init__(self):
        self.method = canonical_method(self.method)
        self.candidates = as_points(self.candidates)
        d = self.candidates.dim
        self.fixed = PointSet.empty(d) if self.fixed is None else as_points(self.fixed, d)
        if self.target is not None:
            self.target = as_points(self.target, d)
        if self.boundary_factor is None:
            self.boundary_factor = math.sqrt(2.0) * d
        X = self.candidates.points
        avail = np.ones(X.shape[0], dtype=bool)
        if self.fixed.size:
            # candidates that coincide with a design point can never be returned
            D = _backend.distances(X, self.fixed.points)
            avail &= D.min(axis=1) > FIXED_MATCH_TOL
        avail[list(self.selected)] = False
        self.scratch["available"] = avail

    @property
    def dim(self):
        return self.candidates.dim

    @property
    def available(self) -> np.ndarray:
        return self.scratch["available"]

    @property
    def n_design(self) -> int:
        """``i``: number of points the current measure is built on."""
        nf = self.fixed.size if (self.include_fixed or self.method == "fssf") else 0
        return nf + len(self.selected)

    def design_points(self) -> np.ndarray:
        sel = self.candidates.points[self.selected]
        if self.include_fixed or self.method == "fssf":
            return np.vstack([self.fixed.points, sel])
        return sel

    def selected_points(self) -> PointSet:
        return self.candidates.take(self.selected)

    def _commit(self, idx, score):
        self.selected.append(idx)
        self.scores.append(float(score))
        self.available[idx] = False


# ---------------------------------------------------------------- FSSF-fr

def _fssf_init(state):
    X = state.candidates.points
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise DomainError("FSSF-fr candidates must lie in [0,1]^d; iso-transform afterwards")
    sc = state.scratch
    sc["refl"] = state.boundary_factor * reflection_distance(X)
    design = state.design_points()
    if design.shape[0]:
        sc["mind"] = _backend.distances(X, design).min(axis=1)
    else:
        sc["mind"] = np.full(X.shape[0], np.inf)
    sc["ready"] = "fssf"


def fssf_fr_scores(state) -> np.ndarray:
    sc = state.scratch
    s = np.minimum(sc["mind"], sc["refl"])
    return np.where(state.available, s, -np.inf)


def fssf_fr_next(state: SelectionState):
    if state.scratch.get("ready") != "fssf":
        _fssf_init(state)
    sc = state.scratch
    if not state.available.any():
        raise SizeError("no unselected candidate left")
    if state.n_design == 0:
        rng = make_rng(state.seed, FIRST_POINT)
        choices = np.flatnonzero(state.available)
        idx = int(choices[rng.integers(choices.size)])
        score = float(sc["refl"][idx])
    else:
        scores = fssf_fr_scores(state)
        idx = pick(scores, maximize=True)
        score = scores[idx]
    X = state.candidates.points
    sc["mind"] = np.minimum(sc["mind"], _backend.distances(X, X[idx:idx + 1])[:, 0])
    state._commit(idx, score)
    return idx, state


# ---------------------------------------------------------------- support points

def _mean_distances(X, T):
    out = np.empty(X.shape[0])
    step = max(1, (1 << 22) // max(1, T.shape[0]))
    for s in range(0, X.shape[0], step):
        out[s:s + step] = _backend.distances(X[s:s + step], T).mean(axis=1)
    return out


def _sp_init(state):
    X = state.candidates.points
    sc = state.scratch
    T = X if state.target is None else state.target.points
    if state.target is None and X.shape[0] <= SP_DENSE_LIMIT:
        D = _backend.distances(X, X)
        sc["dense"] = D
        sc["mean_target"] = D.mean(axis=1)
    else:
        sc["dense"] = None
        sc["mean_target"] = _mean_distances(X, T)
    design = state.design_points()
    if design.shape[0]:
        sc["sum_design"] = _backend.distances(X, design).sum(axis=1)
    else:
        sc["sum_design"] = np.zeros(X.shape[0])
    sc["ready"] = "support_points"


def support_points_scores(state) -> np.ndarray:
    sc = state.scratch
    i = state.n_design
    s = sc["mean_target"] - sc["sum_design"] / (i + 1)
    return np.where(state.available, s, np.inf)


def support_points_next(state: SelectionState):
    if state.scratch.get("ready") != "support_points":
        _sp_init(state)
    sc = state.scratch
    scores = support_points_scores(state)
    idx = pick(scores)
    X = state.candidates.points
    row = sc["dense"][idx] if sc["dense"] is not None else _backend.distances(X, X[idx:idx + 1])[:, 0]
    sc["sum_design"] = sc["sum_design"] + row
    state._commit(idx, scores[idx])
    return idx, state


# ---------------------------------------------------------------- kernel herding

def _herding_init(state, pot):
    if not isinstance(pot, Potential):
        raise ValidationError("herding needs a Potential")
    if isinstance(pot.kernel, KernelSpec) and not pot.kernel.positive_definite:
        raise NotPositiveDefiniteError(
            "kernel herding needs a positive-definite kernel; use support points for the energy distance"
        )
    if pot.dim != state.dim:
        raise ValidationError("potential and candidates have different dimensions")
    X = state.candidates.points
    sc = state.scratch
    sc["target"] = pot(X)
    design = state.design_points()
    if design.shape[0]:
        sc["sum_design"] = pot.kernel.cross(X, design).sum(axis=1)
    else:
        sc["sum_design"] = np.zeros(X.shape[0])
    sc["ready"] = "herding"
    sc["potential"] = pot


def herding_scores(state) -> np.ndarray:
    sc = state.scratch
    i = state.n_design
    cur = sc["sum_design"] / i if i else 0.0
    s = cur - sc["target"]
    return np.where(state.available, s, np.inf)


def herding_next(state: SelectionState, potential: Potential):
    sc = state.scratch
    if sc.get("ready") != "herding" or sc.get("potential") is not potential:
        _herding_init(state, potential)
    scores = herding_scores(state)
    idx = pick(scores)
    X = state.candidates.points
    sc["sum_design"] = sc["sum_design"] + potential.kernel.cross(X, X[idx:idx + 1])[:, 0]
    state._commit(idx, scores[idx])
    return idx, state


# ---------------------------------------------------------------- drivers

def default_lengthscale(n_target, dim):
    """``n^{-1/d}``, the usual herding lengthscale on the unit cube."""
    return float(max(1, int(n_target))) ** (-1.0 / dim)


def herding_potential(measure, kernel, candidates, n_quad=2**13):
    """Target potential for herding: analytic when available, else empirical."""
    if measure is None:
        return Potential.empirical(kernel, candidates)
    if isinstance(measure, Empirical):
        return Potential.empirical(kernel, measure.atoms, measure.weights)
    try:
        return Potential.analytic(kernel, measure)
    except UnsupportedMeasureError:
        u = sobol_sequence(measure.dim, n_quad, skip=1)
        return Potential.empirical(kernel, iso_transform(u, measure))


def step(state: SelectionState, potential: Potential | None = None):
    if state.method == "fssf":
        return fssf_fr_next(state)
    if state.method == "support_points":
        return support_points_next(state)
    if potential is None:
        raise ValidationError("herding needs a potential")
    return herding_next(state, potential)


def select_indices(method, n, S, fixed=None, mu=None, kernel=None, seed=0, *,
                   boundary_factor=None, include_fixed=True, target=None):
    """Run ``n`` greedy steps; returns ``(indices, scores, state)``."""
    method = canonical_method(method)
    S = as_points(S)
    state = SelectionState(
        method, S, fixed, seed=seed, boundary_factor=boundary_factor,
        include_fixed=include_fixed, target=target,
    )
    n = int(n)
    if n < 0:
        raise ValidationError("n must be nonnegative")
    if n > int(state.available.sum()):
        raise SizeError(f"n={n} exceeds the {int(state.available.sum())} available candidates")
    pot = None
    if method == "herding" and n:
        if kernel is None:
            kernel = KernelSpec.matern52(default_lengthscale(n, S.dim), S.dim)
        pot = herding_potential(mu, kernel, S)
    for _ in range(n):
        step(state, pot)
    return list(state.selected), list(state.scores), state


def select_n(method, n, S, fixed=None, mu=None, kernel=None, seed=0, **opts) -> PointSet:
    """Ordered ``n``-point test set chosen from ``S`` by ``method``."""
    idx, _, state = select_indices(method, n, S, fixed, mu, kernel, seed, **opts)
    return state.candidates.take(idx)
