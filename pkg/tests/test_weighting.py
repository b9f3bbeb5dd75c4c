import numpy as np
import pytest

import oracles
from tessel.discrepancy import Potential
from tessel.errors import (
    DegenerateDenominatorError,
    DegenerateDesignError,
    DimensionMismatchError,
    OverlapError,
)
from tessel.kernels import KernelSpec, condition, kbar
from tessel.measures import UnitCubeUniform, candidate_set, maximin_lhs
from tessel.selection import select_n
from tessel.weighting import (
    WeightedTestSet,
    delta_bar_sq,
    error_interpolant,
    optimal_prime_weights,
    optimal_weights,
    optimal_weights_prefixes,
    q2_report,
)


def test_interpolating_predictor_gives_zero_interpolant(rng):
    ck = condition(KernelSpec.matern52([0.3, 0.3]), rng.random((8, 2)))
    y = rng.normal(size=8)
    dh = error_interpolant(ck, y, y.copy())
    assert dh.is_zero
    assert np.all(np.abs(dh(rng.random((50, 2)))) <= 1e-10)


def test_single_point_interpolant(rng):
    K = KernelSpec.matern52(0.4, 1, scale=1.3)
    x1 = np.array([[0.3]])
    ck = condition(K, x1)
    c = 0.7
    dh = error_interpolant(ck, [c + 1.0], [1.0])
    X = rng.random((6, 1))
    np.testing.assert_allclose(dh(X), c * K.cross(X, x1)[:, 0] / K(x1[0], x1[0]), rtol=1e-12)


def test_interpolant_reproduces_training_residuals(rng):
    ck = condition(KernelSpec.matern52([0.3, 0.5]), rng.random((10, 2)))
    y, eta = rng.normal(size=10), rng.normal(size=10)
    dh = error_interpolant(ck, y, eta)
    np.testing.assert_allclose(dh(ck.X_m.points), y - eta, atol=1e-9)


def test_single_test_point_weight(rng):
    K = KernelSpec.matern52([0.3, 0.3])
    ck = condition(K, rng.random((5, 2)))
    x = rng.random((1, 2))
    mu = rng.random((300, 2))
    w = optimal_weights(ck, x, mu).weights[0]
    Kb = kbar(ck)
    P = Potential.empirical(Kb, mu)(x)[0]
    assert w == pytest.approx(P / Kb(x[0], x[0]), rel=1e-12)


def test_residual_on_uniform_setting():
    X_m = maximin_lhs(2, 10, 1)
    S = candidate_set(2, 20, include_vertices=True, size=2**12)
    K = KernelSpec.matern52([0.2, 0.2])
    X_n = select_n("herding", 20, S, X_m, UnitCubeUniform(2), K)
    wts = optimal_weights(condition(K, X_m), X_n, S)
    assert wts.residual <= 1e-8
    assert wts.n == 20


def test_weights_match_dense_oracle(rng):
    K = KernelSpec.matern52([0.35, 0.5])
    X_m, X_n, mu = rng.random((7, 2)), rng.random((9, 2)), rng.random((250, 2))
    ck = condition(K, X_m)
    dh = error_interpolant(ck, rng.normal(size=7), rng.normal(size=7))
    w_ref, _, _ = oracles.dense_kbar_weights(K, X_m, X_n, mu, dh)
    np.testing.assert_allclose(optimal_weights(ck, X_n, mu, dh).weights, w_ref, rtol=1e-7, atol=1e-10)
    w_ref0, _, _ = oracles.dense_kbar_weights(K, X_m, X_n, mu)
    np.testing.assert_allclose(optimal_weights(ck, X_n, mu).weights, w_ref0, rtol=1e-7, atol=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_optimal_beats_uniform(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    K = KernelSpec.matern52(rng.uniform(0.2, 0.8, d))
    ck = condition(K, rng.random((int(rng.integers(2, 12)), d)))
    X_n = rng.random((int(rng.integers(2, 15)), d))
    mu = rng.random((400, d))
    dh = error_interpolant(ck, rng.normal(size=ck.m), rng.normal(size=ck.m)) if seed % 2 else None
    opt = delta_bar_sq(ck, optimal_weights(ck, X_n, mu, dh), mu, dh)
    uni = delta_bar_sq(ck, WeightedTestSet.uniform(X_n), mu, dh)
    assert opt <= uni + 1e-10


@pytest.mark.parametrize("seed", range(50))
def test_kbar_positive_definite_when_disjoint(seed):
    rng = np.random.default_rng(1000 + seed)
    d = int(rng.integers(1, 4))
    K = KernelSpec.matern52(rng.uniform(0.2, 1.0, d))
    ck = condition(K, rng.random((int(rng.integers(1, 10)), d)))
    X_n = rng.random((int(rng.integers(2, 12)), d))
    dh = error_interpolant(ck, rng.normal(size=ck.m), rng.normal(size=ck.m))
    for kern in (kbar(ck), kbar(ck, dh)):
        G = kern.cross(X_n)
        np.linalg.cholesky(G)  # raises if not positive definite
        assert np.linalg.eigvalsh(G).min() > 0


def test_prefix_solver_equals_separate_solves(rng):
    K = KernelSpec.matern52([0.3, 0.3])
    ck = condition(K, rng.random((6, 2)))
    X_n, mu = rng.random((15, 2)), rng.random((200, 2))
    pre = optimal_weights_prefixes(ck, X_n, mu, [3, 8, 15])
    for k, w in pre.items():
        np.testing.assert_allclose(w.weights, optimal_weights(ck, X_n[:k], mu).weights, rtol=1e-12)


def test_overlap_and_duplicates_rejected(rng):
    X_m = rng.random((5, 2))
    ck = condition(KernelSpec.matern52([0.3, 0.3]), X_m)
    with pytest.raises(OverlapError):
        optimal_weights(ck, np.vstack([X_m[2], [0.5, 0.5]]), rng.random((20, 2)))
    with pytest.raises(DegenerateDesignError):
        optimal_weights(ck, np.array([[0.9, 0.9], [0.9, 0.9]]), rng.random((20, 2)))


# ---------------------------------------------------------------- delta_bar_sq

def test_delta_bar_sq_zero_when_zeta_is_mu(rng):
    ck = condition(KernelSpec.matern52([0.3, 0.3]), rng.random((4, 2)))
    mu = rng.random((30, 2))
    assert abs(delta_bar_sq(ck, WeightedTestSet.uniform(mu), mu)) <= 1e-10


def test_delta_bar_sq_sigma2_scaling(rng):
    ck = condition(KernelSpec.matern52([0.3, 0.3]), rng.random((4, 2)))
    X_n, mu = rng.random((6, 2)), rng.random((50, 2))
    w = WeightedTestSet.uniform(X_n)
    assert delta_bar_sq(ck, w, mu, sigma2=2.0) == 2.0 * delta_bar_sq(ck, w, mu)


def gp_simulation(ck, wts, mu, delta_hat, draws, seed):
    """Monte Carlo estimate of E[(ISE_zeta - ISE_mu)^2] and its standard error,
    with the error process drawn jointly at the test and quadrature points."""
    rng = np.random.default_rng(seed)
    Z = np.vstack([wts.X_n.points, mu])
    C = ck.cross(Z)
    vals, vecs = np.linalg.eigh(C)
    root = vecs * np.sqrt(np.clip(vals, 0, None))
    mean = np.zeros(len(Z)) if delta_hat is None else delta_hat(Z)
    n = wts.n
    out = np.empty(draws)
    for s in range(0, draws, 10_000):
        k = min(10_000, draws - s)
        D = mean + rng.standard_normal((k, len(Z))) @ root.T
        out[s:s + k] = (D[:, :n] ** 2) @ wts.weights - (D[:, n:] ** 2).mean(axis=1)
    sq = out**2
    return sq.mean(), sq.std() / np.sqrt(draws)


@pytest.mark.parametrize("interpolating", [True, False])
def test_delta_bar_sq_gp_simulation(interpolating):
    K = KernelSpec.matern52(0.3, 1)
    X_m = np.array([[0.15], [0.5], [0.85]])
    ck = condition(K, X_m)
    X_n = np.array([[0.05], [0.32], [0.66], [0.97]])
    mu = (np.arange(200) + 0.5)[:, None] / 200
    dh = None
    if not interpolating:
        dh = error_interpolant(ck, np.array([0.4, -0.2, 0.3]), np.zeros(3))
    wts = optimal_weights(ck, X_n, mu, dh)
    pred = delta_bar_sq(ck, wts, mu, dh)
    est, se = gp_simulation(ck, wts, mu, dh, 100_000, 11)
    assert abs(est - pred) <= 3 * se


# ---------------------------------------------------------------- report

def test_report_perfect_and_mean_predictors(rng):
    y = rng.normal(size=12)
    w = WeightedTestSet(rng.random((12, 2)), rng.random(12), "optimal")
    rep = q2_report(y, y, w)
    assert rep.q2_hat == 1.0 and rep.q2_star == 1.0
    rep = q2_report(y, np.full(12, y.mean()), w)
    assert rep.q2_hat == pytest.approx(0.0, abs=1e-15)


def test_report_uniform_is_exact_and_reconstructible(rng):
    X = rng.random((10, 2))
    y, eta = rng.normal(size=10), rng.normal(size=10)
    rep = q2_report(y, eta, WeightedTestSet.uniform(X))
    assert rep.q2_star == rep.q2_hat
    assert abs(rep.q2_hat - (1 - rep.ise_uniform / rep.denom_uniform)) <= 1e-12


def test_report_errors(rng):
    X = rng.random((4, 2))
    with pytest.raises(DegenerateDenominatorError):
        q2_report(np.ones(4), np.zeros(4), WeightedTestSet.uniform(X))
    with pytest.raises(DimensionMismatchError):
        q2_report(np.ones(3), np.zeros(3), WeightedTestSet.uniform(X))


def test_prime_quantities(rng):
    K = KernelSpec.matern52([0.3, 0.3])
    X_m, X_n, mu = rng.random((8, 2)), rng.random((10, 2)), rng.random((300, 2))
    ck = condition(K, X_m)
    f = lambda X: np.sin(3 * X[:, 0]) + X[:, 1]  # noqa: E731
    eta = lambda X: f(X) + 0.05 * np.cos(7 * X[:, 1])  # noqa: E731
    y_m = f(X_m)
    pw = optimal_prime_weights(ck, X_n, mu, eta, y_m.mean())
    assert pw.scheme == "optimal_prime" and pw.residual <= 1e-8
    rep = q2_report(f(X_n), eta(X_n), optimal_weights(ck, X_n, mu), y_m=y_m, prime_weights=pw)
    dev = (f(X_n) - y_m.mean()) ** 2
    r2 = (f(X_n) - eta(X_n)) ** 2
    assert rep.q2_prime == pytest.approx(1 - r2.sum() / dev.sum(), rel=1e-14)
    assert rep.q2_prime_star == pytest.approx(1 - r2.mean() / (pw.weights @ dev), rel=1e-12)
