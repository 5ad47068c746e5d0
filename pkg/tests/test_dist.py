import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcflowgen.dist import (
    DensityGrid,
    DistributionError,
    StepDistribution,
    compare,
    convolve,
    empirical_cdf,
    format_distribution_csv,
    ks_distance,
    parse_distribution_csv,
    sample,
    topsoe,
    topsoe_distance,
)

THREE_STEP = StepDistribution.from_pmf([10.0, 200.0, 5000.0], [0.2, 0.5, 0.3])


def brute_convolve(a, b):
    out = np.zeros(a.size + b.size - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


# -- construction and evaluation ----------------------------------------------


def test_invariants_rejected():
    with pytest.raises(DistributionError):
        StepDistribution([1.0, 1.0], [0.5, 1.0])
    with pytest.raises(DistributionError):
        StepDistribution([1.0, 2.0], [0.5, 0.9])
    with pytest.raises(DistributionError):
        StepDistribution([-1.0, 2.0], [0.5, 1.0])
    with pytest.raises(DistributionError):
        StepDistribution([1.0, 2.0, 3.0], [0.6, 0.5, 1.0])


def test_degenerate_sample_always_value():
    d = StepDistribution.from_points([(42, 0.0), (42, 1.0)])
    rng = np.random.default_rng(0)
    assert np.all(sample(d, rng, 1000) == 42)


def test_uniform_quantile_midpoint():
    d = StepDistribution.from_points([(0, 0.0), (100, 1.0)])
    assert d.quantile(0.5) == pytest.approx(50.0)
    assert d.cdf(25.0) == pytest.approx(0.25)


def test_sampling_matches_three_step_source():
    rng = np.random.default_rng(1)
    emp = empirical_cdf(sample(THREE_STEP, rng, 10**6))
    assert ks_distance(emp, THREE_STEP) < 0.01


def test_sampling_contracts_with_n():
    src = StepDistribution.from_points([(0, 0.0), (10, 0.3), (1000, 1.0)])
    ks_small = ks_distance(empirical_cdf(src.sample(np.random.default_rng(2), 10**3)), src)
    ks_large = ks_distance(empirical_cdf(src.sample(np.random.default_rng(2), 10**6)), src)
    assert ks_large < ks_small


def test_empirical_cdf_examples():
    d = empirical_cdf([5])
    assert d.points == [(5.0, 1.0)]
    d = empirical_cdf([1, 1, 3])
    assert d.values.tolist() == [1.0, 3.0]
    assert d.cum_probs.tolist() == pytest.approx([2 / 3, 1.0])
    with pytest.raises(DistributionError):
        empirical_cdf([])


def test_empirical_rank_property():
    x = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
    d = empirical_cdf(x)
    for v in x:
        assert d.cdf(v) == pytest.approx(np.sum(x <= v) / x.size)


def test_mean_of_linear_and_step():
    assert StepDistribution.from_points([(0, 0.0), (10, 1.0)]).mean() == pytest.approx(5.0)
    assert THREE_STEP.mean() == pytest.approx(0.2 * 10 + 0.5 * 200 + 0.3 * 5000)


def test_step_and_linear_interpolation_differ():
    lin = StepDistribution.from_points([(0, 0.0), (10, 1.0)])
    step = lin.with_interpolation("step")
    assert lin.cdf(5.0) == pytest.approx(0.5)
    assert step.cdf(5.0) == 0.0


# -- convolution -----------------------------------------------------------------


def test_convolve_point_masses():
    a = DensityGrid(0.0, 1.0, [0, 0, 1.0])
    b = DensityGrid(0.0, 1.0, [0, 0, 0, 1.0])
    c = convolve(a, b)
    assert np.argmax(c.masses) == 5 and c.masses.sum() == pytest.approx(1.0)


def test_convolve_uniform_pair():
    u = DensityGrid(0.0, 1.0, [0.5, 0.5])
    assert convolve(u, u).masses.tolist() == pytest.approx([0.25, 0.5, 0.25])


def test_convolve_matches_direct_double_loop():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.random(16), rng.random(16)
        a, b = a / a.sum(), b / b.sum()
        c = convolve(DensityGrid(0.0, 2.0, a), DensityGrid(0.0, 2.0, b))
        np.testing.assert_allclose(c.masses, brute_convolve(a, b), atol=1e-9)


def test_convolve_large_grid_fft_path():
    rng = np.random.default_rng(4)
    a, b = rng.random(512), rng.random(512)
    a, b = a / a.sum(), b / b.sum()
    c = convolve(DensityGrid(0.0, 1.0, a), DensityGrid(0.0, 1.0, b))
    np.testing.assert_allclose(c.masses, np.convolve(a, b), atol=1e-12)
    assert c.masses.sum() == pytest.approx(1.0, abs=1e-6)


def test_convolve_rejects_mismatched_bins():
    with pytest.raises(DistributionError):
        convolve(DensityGrid(0.0, 1.0, [1.0]), DensityGrid(0.0, 2.0, [1.0]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12),
       st.lists(st.floats(0, 1), min_size=1, max_size=12),
       st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_convolve_commutative_associative(a, b, c):
    ga, gb, gc = (DensityGrid(0.0, 1.0, x) for x in (a, b, c))
    np.testing.assert_allclose(convolve(ga, gb).masses, convolve(gb, ga).masses, atol=1e-9)
    left = convolve(convolve(ga, gb), gc).masses
    right = convolve(ga, convolve(gb, gc)).masses
    np.testing.assert_allclose(left, right, atol=1e-9)


def test_grid_round_trip_keeps_mean():
    d = StepDistribution.from_points([(100, 0.0), (300, 0.5), (1000, 1.0)])
    g = DensityGrid.from_distribution(d, 1.0, 1200)
    assert g.masses.sum() == pytest.approx(1.0)
    assert g.mean() == pytest.approx(d.mean(), rel=1e-3)
    assert ks_distance(g.to_distribution(), d) < 2e-3


# -- Topsøe ------------------------------------------------------------------------


def test_topsoe_identity_zero():
    m = np.arange(9.0).reshape(3, 3)
    assert topsoe_distance(m, m) == 0.0


def test_topsoe_swapped_identity():
    # hand evaluation: four terms of 0.5 ln 2
    assert topsoe_distance(np.eye(2), 1 - np.eye(2)) == pytest.approx(4 * 0.5 * math.log(2))


def test_topsoe_two_pairs_one_empty():
    # 0.5 ln(2/3) + ln(4/3) + 0.5 ln 2, evaluated by hand
    expect = 0.5 * math.log(2 / 3) + math.log(4 / 3) + 0.5 * math.log(2)
    assert topsoe([1, 1], [2, 0]) == pytest.approx(expect)
    assert expect == pytest.approx(0.431523, abs=1e-6)


def test_topsoe_rejects_zero_matrix():
    with pytest.raises(DistributionError):
        topsoe_distance(np.zeros((2, 2)), np.eye(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_topsoe_symmetric_nonnegative(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((5, 5)) * (rng.random((5, 5)) < 0.6)
    b = rng.random((5, 5)) * (rng.random((5, 5)) < 0.6)
    a[0, 0] += 0.1
    b[1, 1] += 0.1
    d = topsoe_distance(a, b)
    assert d >= 0
    assert d == pytest.approx(topsoe_distance(b, a), abs=1e-12)
    assert topsoe_distance(a, 3 * a) == pytest.approx(0.0, abs=1e-12)


# -- compare / KS ------------------------------------------------------------------


def test_compare_identical():
    r = compare(THREE_STEP, THREE_STEP)
    assert r.ks_sup_distance == 0.0
    assert all(a == b for a, b in r.qq_points)
    assert r.topsoe == pytest.approx(0.0, abs=1e-12)


def test_compare_separated_point_masses():
    r = compare(StepDistribution.point_mass(1.0), StepDistribution.point_mass(2.0))
    assert r.ks_sup_distance == 1.0


def test_compare_lists_sorted():
    a = StepDistribution.from_points([(0, 0.0), (10, 1.0)])
    r = compare(a, THREE_STEP, n_points=50)
    assert [p[0] for p in r.qq_points] == sorted(p[0] for p in r.qq_points)
    assert [p[0] for p in r.pp_points] == sorted(p[0] for p in r.pp_points)
    assert 0.0 <= r.ks_sup_distance <= 1.0


def test_two_empirical_samples_close():
    rng = np.random.default_rng(5)
    src = StepDistribution.from_points([(1, 0.0), (100, 0.4), (1e5, 1.0)])
    a = empirical_cdf(src.sample(rng, 10**5))
    b = empirical_cdf(src.sample(rng, 10**5))
    assert ks_distance(a, b) < 0.02


def test_ks_restricted_ignores_low_values():
    a = StepDistribution.from_pmf([1.0, 100.0, 200.0], [0.5, 0.25, 0.25])
    b = StepDistribution.from_pmf([2.0, 100.0, 200.0], [0.8, 0.1, 0.1])
    assert ks_distance(a, b) == pytest.approx(0.5)
    assert ks_distance(a, b, above=50.0) == pytest.approx(0.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=2, max_size=40), st.integers(0, 1000))
def test_inverse_transform_sampling_property(values, seed):
    src = empirical_cdf(values)
    emp = empirical_cdf(src.sample(np.random.default_rng(seed), 10**5))
    assert ks_distance(emp, src) < 0.02


# -- CSV ---------------------------------------------------------------------------


def test_csv_round_trip():
    d = StepDistribution.from_points([(0.5, 0.1), (2.0, 0.7), (3.25, 1.0)], "seconds")
    e = parse_distribution_csv(format_distribution_csv(d, "two\nlines"))
    assert e.support_kind == "seconds" and e.interpolation == d.interpolation
    np.testing.assert_array_equal(e.values, d.values)
    np.testing.assert_array_equal(e.cum_probs, d.cum_probs)


def test_csv_reports_line_numbers():
    with pytest.raises(DistributionError, match=":3:"):
        parse_distribution_csv("value,cum_prob\n1,0.5\nx,1\n")
    with pytest.raises(DistributionError, match="no data"):
        parse_distribution_csv("# only a comment\n")
