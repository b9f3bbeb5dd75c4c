"""Analytical test functions and the two experiment protocols.

``run_completion_study`` completes a maximin-LHS training design with nested test
sets from each selection method and tracks the uniform and weighted Q2
estimates against a Monte Carlo reference and LOO. ``run_split_study``
partitions a fixed dataset at a grid of test ratios and compares the
MMD-based splits with random cross-validation.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import DegenerateDenominatorError, ValidationError
from .kernels import KernelSpec, condition
from .measures import (
    LogNormal,
    Normal,
    PointSet,
    ProductMarginals,
    UnitCubeUniform,
    as_points,
    candidate_set,
    iso_transform,
    maximin_lhs,
)
from .rng import DATASET, MC_SAMPLE, RCV, make_rng, n_threads
from .selection import canonical_method, default_lengthscale, select_indices
from .surrogate import FitConfig, fit, loo_q2, predict
from .weighting import (
    error_interpolant,
    optimal_weights,
    optimal_weights_prefixes,
    q2_report,
)

log = logging.getLogger(__name__)

GSOBOL_A = np.arange(1, 9, dtype=np.float64) ** 2


def _rows(x, d):
    X = np.asarray(x.points if isinstance(x, PointSet) else x, dtype=np.float64)
    single = X.ndim == 1
    X = X.reshape(-1, d)
    return X, single


def f1(x):
    """Test-case 1 on [0,1]^2: ``h(2 x1 - 1, 2 x2 - 1)``."""
    X, single = _rows(x, 2)
    u1, u2 = 2.0 * X[:, 0] - 1.0, 2.0 * X[:, 1] - 1.0
    h = (
        np.exp(u1) / 5.0 - u2 / 5.0 + u2**6 / 3.0 + 4.0 * u2**4 - 4.0 * u2**2
        + 7.0 * u1**2 / 10.0 + u1**4 + 3.0 / (4.0 * u1**2 + 4.0 * u2**2 + 1.0)
    )
    return float(h[0]) if single else h


def f2(x):
    """Test-case 2, defined on all of R^2."""
    X, single = _rows(x, 2)
    a = 5.0 + 1.5 * X[:, 0]
    b = 5.0 + 1.5 * X[:, 1]
    v = np.cos(a) + np.sin(a) + a * b / 100.0
    return float(v[0]) if single else v


def gsobol(x, a=GSOBOL_A):
    """``prod_i (|4 x_i - 2| + a_i) / (1 + a_i)`` on [0,1]^8, ``a_i = i^2``."""
    a = np.asarray(a, dtype=np.float64)
    X, single = _rows(x, a.size)
    v = np.prod((np.abs(4.0 * X - 2.0) + a) / (1.0 + a), axis=1)
    return float(v[0]) if single else v


@dataclass(frozen=True)
class TestCase:
    id: str
    dim: int
    measure: object
    m_grid: tuple
    n_range: tuple
    herding_theta: float
    func: object
    n_candidates: int = 2**12
    vertices: bool = True

    __test__ = False  # not a pytest class

    def to_dict(self):
        return {
            "id": self.id,
            "dim": self.dim,
            "measure": self.measure.spec(),
            "m_grid": list(self.m_grid),
            "n_range": [self.n_range[0], self.n_range[-1]],
            "herding_theta": self.herding_theta,
            "n_candidates": self.n_candidates,
            "vertices": self.vertices,
        }


N_RANGE = tuple(range(4, 51))

CASES = {
    "f1": TestCase("F1", 2, UnitCubeUniform(2), (5, 15, 30), N_RANGE, 0.2, f1),
    "f2": TestCase("F2", 2, ProductMarginals((Normal(), Normal())), (8, 15, 30), N_RANGE, 0.2, f2,
                   vertices=False),
    "gsobol": TestCase("GSOBOL", 8, UnitCubeUniform(8), (15, 30, 100), N_RANGE, 0.7, gsobol),
}


def get_case(name: str) -> TestCase:
    try:
        return CASES[name.lower()]
    except KeyError:
        raise ValidationError(f"unknown test case {name!r}; choose from {sorted(CASES)}") from None


def q2_mc(f, model, measure, M: int = 100_000, seed: int = 0) -> float:
    """``1 - sum (f - eta)^2 / sum (f - mean f)^2`` over an ``M``-point sample of ``measure``."""
    M = int(M)
    if M < 1000:
        raise ValidationError("q2_mc needs M >= 1000")
    X = measure.sample(M, make_rng(seed, MC_SAMPLE))
    y = f(X)
    eta = model(X)
    denom = float(((y - y.mean()) ** 2).sum())
    if not denom > 0:
        raise DegenerateDenominatorError("f is constant on the sample")
    return 1.0 - float(((y - eta) ** 2).sum()) / denom


@dataclass
class BenchResult:
    """Long-format results: one row per (method, m, n, metric)."""

    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)

    def add(self, method, m, n, metric, value, seed):
        self.rows.append((method, int(m), int(n), metric, float(value), int(seed)))

    def value(self, method, m, n, metric):
        for r in self.rows:
            if r[0] == method and r[1] == m and r[2] == n and r[3] == metric:
                return r[4]
        raise KeyError((method, m, n, metric))

    def series(self, method, m, metric):
        pts = sorted((r[2], r[4]) for r in self.rows if r[0] == method and r[1] == m and r[3] == metric)
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "m", "n", "metric", "value", "seed"])
        for method, m, n, metric, value, seed in self.rows:
            w.writerow([method, m, n, metric, repr(value), seed])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def summary(self, include_runtimes=False):
        out = {"version": __version__, "config": self.config, "n_rows": len(self.rows)}
        metrics = {}
        for method, m, n, metric, value, _ in self.rows:
            metrics.setdefault(f"{method}/m={m}/{metric}", []).append((n, value))
        out["final"] = {k: sorted(v)[-1][1] for k, v in metrics.items()}
        if include_runtimes:
            out["runtimes"] = self.runtimes
        return out

    def to_json(self, path=None, include_runtimes=False) -> str:
        text = json.dumps(self.summary(include_runtimes), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _case_candidates(case: TestCase, n_candidates=None):
    N = case.n_candidates if n_candidates is None else int(n_candidates)
    S_u = candidate_set(case.dim, 0, include_vertices=case.vertices, size=N)
    if isinstance(case.measure, UnitCubeUniform):
        return S_u, S_u
    return S_u, iso_transform(S_u, case.measure)


def run_completion_study(case: TestCase, methods=("fssf", "support_points", "herding"), seed: int = 0, *,
                 m_values=None, n_max=None, mc_size: int = 100_000, loo: bool = True,
                 n_candidates=None, fit_config: FitConfig | None = None) -> BenchResult:
    """Design-completion protocol on one test case.

    For each training size: maximin LHS (mapped to the case measure), kriging
    fit, Q2_MC and (optionally) Q2_LOO; then for each method a nested test set
    of up to ``n_max`` points and, for every ``n`` in the case range, the
    uniform and weighted Q2 estimates. The weighting kernel is the herding
    kernel (tensor Matern-5/2 with the case lengthscale) and the quadrature
    sample is the candidate set.
    """
    methods = [canonical_method(m) for m in methods]
    m_values = tuple(case.m_grid if m_values is None else m_values)
    n_grid = [n for n in case.n_range if n_max is None or n <= n_max]
    if not n_grid:
        raise ValidationError("empty n grid")
    n_top = max(n_grid)
    fit_config = fit_config or FitConfig()
    res = BenchResult(config={
        "protocol": "completion", "case": case.to_dict(), "methods": methods, "seed": seed,
        "m_values": list(m_values), "n_grid": [n_grid[0], n_top], "mc_size": mc_size,
        "loo": loo, "n_candidates": case.n_candidates if n_candidates is None else n_candidates,
        "fit": fit_config.to_dict(),
    })
    S_u, S = _case_candidates(case, n_candidates)
    kern = KernelSpec.matern52(case.herding_theta, case.dim)
    for m in m_values:
        t0 = time.perf_counter()
        X_u = maximin_lhs(case.dim, m, seed)
        X = X_u if isinstance(case.measure, UnitCubeUniform) else iso_transform(X_u, case.measure)
        y = case.func(X.points)
        model = fit(X, y, config=fit_config)
        res.add("baseline", m, 0, "q2_mc", q2_mc(case.func, model, case.measure, mc_size, seed), seed)
        if loo:
            res.add("baseline", m, 0, "q2_loo", loo_q2(X, y, fit_config), seed)
        ck = condition(kern, X)
        dhat = error_interpolant(ck, y, predict(model, X))
        res.runtimes[f"fit/m={m}"] = time.perf_counter() - t0
        for method in methods:
            t0 = time.perf_counter()
            if method == "fssf":
                idx, _, _ = select_indices(method, n_top, S_u, X_u, seed=seed)
            else:
                idx, _, _ = select_indices(method, n_top, S, X, case.measure, kern, seed=seed)
            X_n = S.take(idx)
            y_n = case.func(X_n.points)
            eta_n = predict(model, X_n)
            wsets = optimal_weights_prefixes(ck, X_n, S, n_grid, dhat)
            for n in n_grid:
                rep = q2_report(y_n[:n], eta_n[:n], wsets[n])
                res.add(method, m, n, "q2_hat", rep.q2_hat, seed)
                res.add(method, m, n, "q2_star", rep.q2_star, seed)
            res.runtimes[f"{method}/m={m}"] = time.perf_counter() - t0
    return res


run_section4 = run_completion_study


# ---------------------------------------------------------------- split study

SPLIT_RATIOS = tuple(round(0.1 + 0.05 * k, 2) for k in range(17))
QUANTILES = (5, 25, 50, 75, 95)


def synthetic_split_dataset(N: int = 300, seed: int = 0):
    """Stand-in dataset: 8 inputs with alternating normal / lognormal
    marginals, response gsobol of the inputs' probability-integral transform."""
    margs = tuple(Normal(0.0, 1.0) if i % 2 == 0 else LogNormal(0.0, 0.5) for i in range(8))
    rng = make_rng(seed, DATASET)
    U = rng.random((int(N), 8))
    U = np.where(U == 0.0, np.nextafter(0.0, 1.0), U)
    X = iso_transform(U, ProductMarginals(margs))
    return X, gsobol(U)


def _normalize(X):
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (X - lo) / span


def _q2_hat(y, eta):
    denom = float(((y - y.mean()) ** 2).sum())
    if not denom > 0:
        return float("nan")
    return 1.0 - float(((y - eta) ** 2).sum()) / denom


def run_split_study(X, y, ratios=SPLIT_RATIOS, R: int = 200, seed: int = 0, *,
                    methods=("herding", "support_points"), fit_config: FitConfig | None = None,
                    theta=None, loo: bool = True, n_quad: int = 4096) -> BenchResult:
    """Split-ratio study on a dataset ``(X, y)``.

    Selection and weighting run on min-max normalized inputs with a tensor
    Matern-5/2 kernel of lengthscale ``n^{-1/d}`` (or ``theta``) and target
    the empirical measure of the whole dataset. Responses are never used for
    splitting. Unless ``fit_config`` is given, lengthscales of the kriging
    surrogate are estimated once on the full dataset and frozen for every
    split, random or designed.

    The quadrature sample for the optimal weights resamples each normalized
    column independently (``n_quad`` rows). Using the dataset atoms instead
    would make the weights collapse to ``1/N`` each, since the conditioned
    kernel vanishes on the training atoms.
    """
    X = as_points(X).points
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    N, d = X.shape
    if N < 20:
        raise ValidationError("split study needs N >= 20")
    if y.size != N:
        raise ValidationError("one response per input row required")
    methods = [canonical_method(m) for m in methods]
    if "fssf" in methods:
        raise ValidationError("FSSF needs a known input distribution; not used for dataset splits")
    t0 = time.perf_counter()
    if fit_config is None:
        full = fit(X, y)
        fit_config = FitConfig(optimize=False, theta_init=tuple(full.kernel.lengthscales))
    res = BenchResult(config={
        "protocol": "split", "N": N, "d": d, "ratios": list(ratios), "R": R, "seed": seed,
        "methods": methods, "fit": fit_config.to_dict(),
        "theta": theta, "n_quad": int(n_quad),
    })
    res.runtimes["fit_full"] = time.perf_counter() - t0
    Z = _normalize(X)
    qrng = make_rng(seed, MC_SAMPLE)
    mu_sample = np.column_stack([Z[qrng.integers(0, N, int(n_quad)), j] for j in range(d)])
    if loo:
        res.add("baseline", N, 0, "q2_loo", loo_q2(X, y, fit_config), seed)
    for k, r in enumerate(ratios):
        n = int(round(r * N))
        m = N - n
        if m < 3 or n < 2:
            log.warning("ratio %.2f gives m=%d, n=%d; skipped", r, m, n)
            continue
        t0 = time.perf_counter()
        th = default_lengthscale(n, d) if theta is None else float(theta)
        kern = KernelSpec.matern52(th, d)
        for method in methods:
            # mu=None: herding targets the empirical measure of the candidates
            idx, _, _ = select_indices(method, n, Z, None, None, kern, seed=seed)
            test = np.zeros(N, dtype=bool)
            test[idx] = True
            model = fit(X[~test], y[~test], config=fit_config)
            eta_n = predict(model, X[test])
            y_n = y[test]
            res.add(method, m, n, "q2_hat", _q2_hat(y_n, eta_n), seed)
            ck = condition(kern, Z[~test])
            dhat = error_interpolant(ck, y[~test], predict(model, X[~test]))
            w = optimal_weights(ck, Z[test], mu_sample, dhat)
            if np.ptp(y_n) > 0:
                rep = q2_report(y_n, eta_n, w)
                res.add(method, m, n, "q2_star", rep.q2_star, seed)
            res.add(method, m, n, "weight_sum", float(w.weights.sum()), seed)
        qs = _rcv(X, y, n, R, seed, k, fit_config)
        vals = np.percentile(qs, QUANTILES)
        for q, v in zip(QUANTILES, vals):
            res.add("rcv", m, n, f"q{q:02d}", v, seed)
        res.add("rcv", m, n, "tail_gap", vals[2] - vals[0], seed)
        res.runtimes[f"ratio={r}"] = time.perf_counter() - t0
    return res


def _rcv(X, y, n, R, seed, ratio_index, fit_config):
    N = X.shape[0]

    def one(rep):
        rng = make_rng(seed, RCV, ratio_index, rep)
        perm = rng.permutation(N)
        test = np.zeros(N, dtype=bool)
        test[perm[:n]] = True
        model = fit(X[~test], y[~test], config=fit_config)
        return _q2_hat(y[test], predict(model, X[test]))

    workers = min(n_threads(), R)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, range(R)))
    else:
        out = [one(i) for i in range(R)]
    out = np.array(out)
    return out[np.isfinite(out)]
