import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from tessel.discrepancy import (
    Potential,
    mmd_squared,
    potential,
    potential_normal_matern52,
    potential_uniform_matern52,
)
from tessel.errors import DomainError, UnsupportedMeasureError
from tessel.kernels import KernelSpec
from tessel.measures import (
    Empirical,
    Normal,
    ProductMarginals,
    Uniform,
    UnitCubeUniform,
    sobol_sequence,
)


def m52(r, theta):
    z = math.sqrt(5) * abs(r) / theta
    return (1 + z + z * z / 3) * math.exp(-z)


@functools.lru_cache(maxsize=None)
def _leggauss(nodes):
    return np.polynomial.legendre.leggauss(nodes)


def gauss_legendre_uniform(x, theta, nodes=4096):
    t, w = _leggauss(nodes)
    t = 0.5 * (t + 1)
    z = np.sqrt(5) * np.abs(x - t) / theta
    return float(0.5 * (w * (1 + z + z * z / 3) * np.exp(-z)).sum())


def quad_uniform(x, theta):
    # split at the kink t = x
    f = lambda t: m52(x - t, theta)  # noqa: E731
    return sum(integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13)[0] for a, b in ((0, x), (x, 1)))


def quad_normal(x, theta):
    phi = lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    f = lambda t: m52(x - t, theta) * phi(t)  # noqa: E731
    lo, hi = min(x, -10.0), max(x, 10.0)
    return sum(integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
               for a, b in ((lo, x), (x, hi)))


@pytest.mark.parametrize("x", [0.5, 0.0])
def test_uniform_potential_vs_gauss_legendre(x):
    # the kink at t = x costs Gauss-Legendre some accuracy; adaptive quad checks the tight bound
    assert potential_uniform_matern52(x, 0.2) == pytest.approx(gauss_legendre_uniform(x, 0.2), abs=1e-8)
    assert potential_uniform_matern52(x, 0.2) == pytest.approx(quad_uniform(x, 0.2), abs=1e-12)


@pytest.mark.parametrize("x", [0.0, 3.0])
def test_normal_potential_vs_quadrature(x):
    assert potential_normal_matern52(x, 0.7) == pytest.approx(quad_normal(x, 0.7), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0, 1), theta=st.floats(0.01, 5))
def test_uniform_potential_symmetry(x, theta):
    a = potential_uniform_matern52(x, theta)
    b = potential_uniform_matern52(1 - x, theta)
    assert a == pytest.approx(b, abs=1e-13)
    assert 0 < a <= 1


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-40, 40), theta=st.floats(0.01, 10))
def test_normal_potential_symmetry_and_range(x, theta):
    a = potential_normal_matern52(x, theta)
    assert a == pytest.approx(potential_normal_matern52(-x, theta), abs=1e-14)
    assert 0 <= a <= 1 and math.isfinite(a)


def test_uniform_potential_domain():
    with pytest.raises(DomainError):
        potential_uniform_matern52(1.5, 0.2)


def test_analytic_product_rule(rng):
    K = KernelSpec.matern52([0.2, 0.5])
    P = Potential.analytic(K, UnitCubeUniform(2))
    X = rng.random((10, 2))
    ref = [potential_uniform_matern52(a, 0.2) * potential_uniform_matern52(b, 0.5) for a, b in X]
    np.testing.assert_allclose(P(X), ref, rtol=1e-14)
    Pn = Potential.analytic(K, ProductMarginals((Normal(), Normal())))
    Y = rng.normal(size=(5, 2))
    ref = [potential_normal_matern52(a, 0.2) * potential_normal_matern52(b, 0.5) for a, b in Y]
    np.testing.assert_allclose(Pn(Y), ref, rtol=1e-14)


def test_analytic_mode_restrictions():
    with pytest.raises(UnsupportedMeasureError):
        Potential.analytic(KernelSpec.matern52(0.2, 1), ProductMarginals((Uniform(0, 2),)))
    with pytest.raises(UnsupportedMeasureError):
        Potential.analytic(KernelSpec.matern52(0.2, 2, form="anisotropic_distance"), UnitCubeUniform(2))
    with pytest.raises(UnsupportedMeasureError):
        Potential.analytic(KernelSpec.matern52(0.2, 1), Empirical([[0.1]]))


def test_single_atom_empirical(rng):
    K = KernelSpec.matern52([0.3, 0.3])
    c = rng.random(2)
    P = Potential.empirical(K, [c])
    x = rng.random(2)
    assert potential(P, x) == pytest.approx(K(x, c), rel=1e-15)


def test_analytic_vs_qmc_empirical(rng):
    K = KernelSpec.matern52([0.2, 0.2])
    Pa = Potential.analytic(K, UnitCubeUniform(2))
    Pe = Potential.empirical(K, sobol_sequence(2, 2**14, skip=1))
    X = rng.random((20, 2))
    assert np.max(np.abs(Pa(X) - Pe(X))) <= 1e-3


def test_analytic_energy_constant():
    # E_K(mu) for the uniform tensor kernel is the square of the 1-d integral
    theta = 0.3
    one_d = integrate.quad(lambda x: potential_uniform_matern52(x, theta), 0, 1, epsabs=1e-13)[0]
    P = Potential.analytic(KernelSpec.matern52([theta, theta]), UnitCubeUniform(2))
    assert P.energy() == pytest.approx(one_d**2, abs=1e-6)


# ---------------------------------------------------------------- MMD

def test_mmd_self_is_zero(rng):
    K = KernelSpec.matern52([0.3, 0.4])
    X = rng.random((30, 2))
    assert abs(mmd_squared(X, Potential.empirical(K, X))) <= 1e-10
    w = rng.dirichlet(np.ones(30))
    assert abs(mmd_squared((X, w), Potential.empirical(K, X, w))) <= 1e-10


def test_mmd_two_atoms(rng):
    K = KernelSpec.matern52(0.5, 1)
    r = 0.37
    assert mmd_squared([[0.0]], Potential.empirical(K, [[r]])) == pytest.approx(2 * (1 - m52(r, 0.5)), rel=1e-13)


def energy_distance_double_loop(X, w, Y, v):
    """2 sum w_i v_j |x_i - y_j| - sum w_i w_j |x_i - x_j| - sum v_i v_j |y_i - y_j|."""
    cross = own = tgt = 0.0
    for i in range(len(X)):
        for j in range(len(Y)):
            cross += w[i] * v[j] * math.dist(X[i], Y[j])
        for j in range(len(X)):
            own += w[i] * w[j] * math.dist(X[i], X[j])
    for i in range(len(Y)):
        for j in range(len(Y)):
            tgt += v[i] * v[j] * math.dist(Y[i], Y[j])
    return 2 * cross - own - tgt


def test_energy_mmd_at_median(rng):
    S = rng.random((100, 2))
    med = np.median(S, axis=0)
    P = Potential.empirical(KernelSpec.energy(2), S)
    ref = energy_distance_double_loop([med], [1.0], S, np.full(100, 0.01))
    assert mmd_squared([med], P) == pytest.approx(ref, abs=1e-12)


def test_relative_mode_drops_constant(rng):
    K = KernelSpec.matern52([0.3, 0.4])
    S = rng.random((40, 2))
    P = Potential.empirical(K, S)
    X = rng.random((5, 2))
    diff = mmd_squared(X, P) - mmd_squared(X, P, "relative")
    assert diff == pytest.approx(P.energy(), rel=1e-12)
