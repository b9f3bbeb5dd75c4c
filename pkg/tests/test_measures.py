import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm, qmc

from tessel.errors import (
    CSVParseError,
    DomainError,
    SizeError,
    UnsupportedDimensionError,
    UnsupportedMeasureError,
    ValidationError,
)
from tessel.measures import (
    Empirical,
    LogNormal,
    Normal,
    PointSet,
    ProductMarginals,
    Uniform,
    UnitCubeUniform,
    candidate_set,
    format_csv,
    is_lhs,
    iso_transform,
    maximin_lhs,
    min_pairwise_distance,
    parse_measure,
    read_csv,
    sobol_sequence,
)


# ---------------------------------------------------------------- PointSet

def test_pointset_rejects_nonfinite():
    with pytest.raises(ValidationError):
        PointSet([[0.0, np.nan]])


def test_pointset_is_read_only():
    P = PointSet([[0.1, 0.2]])
    with pytest.raises(ValueError):
        P.points[0, 0] = 1.0


def test_empirical_weights_must_sum_to_one():
    with pytest.raises(ValidationError):
        Empirical([[0.0], [1.0]], [0.5, 0.6])
    Empirical([[0.0], [1.0]], [0.25, 0.75])


@pytest.mark.parametrize("args", [(0.0, -1.0), (0.0, 0.0)])
def test_marginal_scale_must_be_positive(args):
    with pytest.raises(ValidationError):
        Normal(*args)
    with pytest.raises(ValidationError):
        LogNormal(*args)


def test_uniform_bounds_ordered():
    with pytest.raises(ValidationError):
        Uniform(1.0, 0.0)


# ---------------------------------------------------------------- Sobol

def test_sobol_first_point_is_origin():
    assert sobol_sequence(1, 1).points.tolist() == [[0.0]]


def test_sobol_first_coordinate_radical_inverse():
    # base-2 radical inverse of 0..3, enumerated by hand
    assert set(sobol_sequence(2, 4).points[:, 0]) == {0.0, 0.5, 0.25, 0.75}


@pytest.mark.parametrize("d", [1, 2, 5, 17, 100])
@pytest.mark.parametrize("skip", [0, 1, 37])
def test_sobol_matches_scipy(d, skip):
    ref = qmc.Sobol(d, scramble=False, bits=32)
    if skip:
        ref.fast_forward(skip)
    np.testing.assert_array_equal(sobol_sequence(d, 256, skip=skip).points, ref.random(256))


def test_sobol_range_and_dimension_limit():
    P = sobol_sequence(7, 1000).points
    assert P.min() >= 0.0 and P.max() < 1.0
    with pytest.raises(UnsupportedDimensionError):
        sobol_sequence(101, 4)


# ---------------------------------------------------------------- candidates

def test_candidate_set_sizes():
    assert candidate_set(2, 50, include_vertices=True).size == 2104
    assert candidate_set(3, 10, include_vertices=False).size == 3020


def test_candidate_set_1d_vertices():
    P = candidate_set(1, 0, include_vertices=True).points[:, 0]
    assert 0.0 in P and 1.0 in P
    assert np.unique(P).size == P.size


def test_candidate_set_vertex_limit():
    with pytest.raises(SizeError):
        candidate_set(21, 1, include_vertices=True)


# ---------------------------------------------------------------- transform

def test_iso_transform_uniform_identity():
    U = sobol_sequence(3, 64)
    np.testing.assert_array_equal(iso_transform(U, UnitCubeUniform(3)).points, U.points)


def test_iso_transform_normal_values():
    mu = ProductMarginals((Normal(),))
    assert iso_transform([[0.5]], mu).points[0, 0] == 0.0
    # independent bisection on the normal CDF
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if 0.5 * math.erfc(-mid / math.sqrt(2)) < 0.975 else (lo, mid)
    x = iso_transform([[0.975]], mu).points[0, 0]
    assert abs(x - 1.959964) <= 1e-5
    assert abs(x - lo) <= 1e-12


def test_iso_transform_lognormal_and_affine_uniform():
    mu = ProductMarginals((LogNormal(0.3, 0.5), Uniform(-1.0, 3.0)))
    x = iso_transform([[0.2, 0.25]], mu).points[0]
    assert x[0] == pytest.approx(math.exp(0.3 + 0.5 * norm.ppf(0.2)), rel=1e-14)
    assert x[1] == pytest.approx(0.0, abs=1e-15)


def test_iso_transform_domain():
    mu = ProductMarginals((Normal(),))
    with pytest.raises(DomainError):
        iso_transform([[1.0]], mu)
    with pytest.raises(DomainError):
        iso_transform([[0.0]], mu)
    with pytest.raises(UnsupportedMeasureError):
        iso_transform([[0.5]], Empirical([[0.0]]))


# ---------------------------------------------------------------- LHS

@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 5), m=st.integers(2, 24), seed=st.integers(0, 2**32))
def test_maximin_lhs_is_lhs(d, m, seed):
    P = maximin_lhs(d, m, seed)
    assert P.size == m and P.dim == d
    assert is_lhs(P, m)


def test_maximin_lhs_improves_on_initial_design():
    from tessel.measures import random_lhs
    from tessel.rng import LHS, make_rng

    for seed in range(5):
        # the optimizer starts from this design (same stream)
        init = random_lhs(3, 12, make_rng(seed, LHS, 3, 12))
        assert min_pairwise_distance(maximin_lhs(3, 12, seed)) >= min_pairwise_distance(init)


def test_maximin_lhs_reproducible():
    a = maximin_lhs(2, 10, 7).to_csv()
    b = maximin_lhs(2, 10, 7).to_csv()
    assert a == b
    assert a != maximin_lhs(2, 10, 8).to_csv()


# ---------------------------------------------------------------- CSV

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=20))
def test_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "p.csv"
    path.write_text(format_csv(rows, ["a", "b", "c"]))
    header, vals = read_csv(path)
    assert header == ["a", "b", "c"]
    np.testing.assert_array_equal(vals, np.array(rows))


def test_csv_accepts_scientific_notation(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("x,y\n1e-3,2.5E+2\n")
    assert read_csv(p)[1].tolist() == [[1e-3, 250.0]]


@pytest.mark.parametrize(
    "text,line",
    [("x,y\n1,2\n3\n", 3), ("x,y\n1,2\n3,abc\n", 3), ("1,2\n", 1), ("x,y\n1,nan\n", 2)],
)
def test_csv_errors_carry_line_numbers(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(CSVParseError) as exc:
        read_csv(p)
    assert exc.value.line == line
    assert f":{line}:" in str(exc.value)


# ---------------------------------------------------------------- parsing

def test_parse_measure():
    assert isinstance(parse_measure("uniform:d=3"), UnitCubeUniform)
    mu = parse_measure("product:normal(0,1);lognormal(0,0.5);uniform(-1,1)")
    assert mu.dim == 3
    assert isinstance(mu.marginals[1], LogNormal)
    for bad in ("gamma:d=2", "uniform:k=2", "product:normal(0)", "product:beta(1,1)"):
        with pytest.raises(ValidationError):
            parse_measure(bad)
