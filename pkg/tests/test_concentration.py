import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from prepex.concentration import (ThresholdParams, as_preference, calibration_T,
                                  calibration_h, calibration_h_inverse, calibration_h_tilde,
                                  coverage_check_thm6, pairwise_radius,
                                  tail_bound_check_thm5, thm5_bounds, threshold_beta)
from prepex.divergence import gaussian
from prepex.errors import InputError
from prepex.geometry import orthant
from prepex.oracle import Instance

mpmath.mp.dps = 40


# independent high-precision re-implementation of the calibration chain
def mp_h_inv(y):
    y = mpmath.mpf(y)
    if y == 1:
        return mpmath.mpf(1)
    return mpmath.findroot(lambda u: u - mpmath.log(u) - y, (mpmath.mpf(1) + 1e-30, 10 * y + 10),
                           solver="anderson")


def mp_h_tilde(z, x):
    z, x = mpmath.mpf(z), mpmath.mpf(x)
    if x >= mp_h_inv(1 / mpmath.log(z)):
        u = mp_h_inv(x)
        return mpmath.e ** (1 / u) * u
    return z * (x - mpmath.log(mpmath.log(z)))


def mp_T(x):
    return 2 * mp_h_tilde(mpmath.mpf(3) / 2,
                          (mp_h_inv(1 + mpmath.mpf(x)) + mpmath.log(2 * mpmath.zeta(2))) / 2)


def mp_beta(counts, delta):
    K = len(counts)
    s = sum(3 * mpmath.log(1 + mpmath.log(n)) for n in counts)
    return s + K * mp_T(mpmath.log(1 / mpmath.mpf(delta)) / K)


THRESHOLD_K2_D01_N10 = 26.250905288994606   # frozen; equals the mpmath value below


def test_h_examples():
    assert calibration_h(1) == 1
    assert calibration_h_inverse(1) == 1
    assert calibration_h_inverse(2) == pytest.approx(3.14619322062058, abs=1e-11)
    assert calibration_h_inverse(2) == pytest.approx(float(mp_h_inv(2)), abs=1e-12)
    with pytest.raises(InputError):
        calibration_h(0.5)
    with pytest.raises(InputError):
        calibration_h_inverse(0.99)
    with pytest.raises(InputError):
        calibration_h_tilde(3.0, 1.0)
    with pytest.raises(InputError):
        calibration_h_tilde(1.5, -1.0)


@given(st.floats(1.0, 1e6))
def test_h_inverse_round_trip(y):
    u = calibration_h_inverse(y)
    assert u >= 1
    assert calibration_h(u) == pytest.approx(y, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("x", [0.0, 0.5, 1.2, 3.0, 10.0, 40.0])
def test_h_tilde_both_branches_against_mpmath(x):
    assert calibration_h_tilde(1.5, x) == pytest.approx(float(mp_h_tilde(1.5, x)), rel=1e-11)


def test_T_against_mpmath():
    for x in (0.1, 0.77, 2.3, 10.0, 50.0):
        assert calibration_T(x) == pytest.approx(float(mp_T(x)), rel=1e-11)


def test_threshold_dual_implementation():
    params = ThresholdParams(0.1, 2)
    v = threshold_beta([10, 10], params)
    assert v == pytest.approx(float(mp_beta([10, 10], 0.1)), abs=1e-9)
    assert v == pytest.approx(THRESHOLD_K2_D01_N10, abs=1e-9)


def test_threshold_with_single_pulls():
    params = ThresholdParams(0.05, 3)
    assert threshold_beta([1, 1, 1], params) == pytest.approx(3 * calibration_T(math.log(20) / 3))


def test_threshold_rejections():
    with pytest.raises(InputError):
        threshold_beta([0, 3], ThresholdParams(0.1, 2))
    with pytest.raises(InputError):
        ThresholdParams(1.0, 2)
    with pytest.raises(InputError):
        ThresholdParams(0.1, 2, zeta2=1.6)
    assert ThresholdParams(0.1, 2).zeta2 == pytest.approx(math.pi ** 2 / 6, abs=1e-12)


@given(st.lists(st.integers(1, 10 ** 6), min_size=3, max_size=3), st.integers(0, 2),
       st.floats(1e-8, 0.5))
def test_threshold_monotone(counts, k, delta):
    p = ThresholdParams(delta, 3)
    base = threshold_beta(counts, p)
    more = list(counts)
    more[k] += 1
    assert threshold_beta(more, p) > base
    assert threshold_beta(counts, ThresholdParams(delta / 2, 3)) > base


@pytest.mark.parametrize("x", np.linspace(0.1, 50, 25))
def test_T_inflates(x):
    assert calibration_T(x) >= x


def test_pairwise_radius_examples():
    z = np.array([0.6, 0.8])
    r1 = pairwise_radius(10 ** 4, 10 ** 4, z, 0.1, 3).value ** 2
    r2 = pairwise_radius(2 * 10 ** 4, 2 * 10 ** 4, z, 0.1, 3).value ** 2
    assert r2 / r1 < 0.6
    a = pairwise_radius(50, 80, z, 0.1, 3)
    b = pairwise_radius(50, 80, 2 * z, 0.1, 3)
    assert b.value == pytest.approx(2 * a.value, rel=1e-14)
    assert a.z_norm_1 == pytest.approx(1.4) and a.counts == (50, 80)
    # K=2, delta=1: the log term starts at 0
    edge = pairwise_radius(5, 7, z, 1.0, 2)
    expected = 4 * 1.4 ** 2 * (math.log(4 + math.log(5)) + math.log(4 + math.log(7))) * (1 / 5 + 1 / 7)
    assert edge.value == pytest.approx(math.sqrt(expected), rel=1e-14)
    assert pairwise_radius(10 ** 8, 10 ** 8, z, 0.1, 3).value < 2e-3
    with pytest.raises(InputError):
        pairwise_radius(0, 3, z, 0.1, 3)


@given(st.integers(1, 10 ** 6), st.integers(1, 16))
def test_pairwise_radius_nonincreasing_in_counts(ni, ratio):
    # the log(4 + log N) factor outgrows 1/N only for very unbalanced counts
    z = [0.6, 0.8]
    nj = ni * ratio
    r = pairwise_radius(ni, nj, z, 0.05, 4).value
    assert pairwise_radius(ni + 1, nj, z, 0.05, 4).value <= r
    assert pairwise_radius(ni, nj + 1, z, 0.05, 4).value <= r


def test_pairwise_radius_unbalanced_counts_not_monotone():
    z = [0.6, 0.8]
    assert pairwise_radius(1, 57, z, 0.05, 4).value > pairwise_radius(1, 56, z, 0.05, 4).value


TWO_ARM = Instance(np.array([[1.0, 0.5], [0.3, 0.8]]), gaussian([1.0, 1.0]))
Z = np.array([1.0, 1.0]) / math.sqrt(2)


def test_thm5_bounds_vacuous_at_small_rho():
    stmt, proof = thm5_bounds(3.0, 100, 2)
    assert stmt == pytest.approx(math.exp(-3) * (14 / 2) ** 2 * math.e ** 3)
    assert min(stmt, proof) >= 1
    rows = tail_bound_check_thm5(TWO_ARM, Z, [3.0], 100, 2000, seed=1)
    assert rows[0]["verdict"] == "vacuous"


def test_thm5_large_rho_passes():
    rows = tail_bound_check_thm5(TWO_ARM, Z, [60.0], 100, 2000, seed=2)
    assert rows[0]["empirical"] == 0 and rows[0]["bound"] > 0 and rows[0]["verdict"] == "pass"


def test_thm5_statistic_distribution():
    """With uniform sampling the statistic is a sum of K halved chi-square(1) draws."""
    rows = tail_bound_check_thm5(TWO_ARM, Z, [1.0, 3.0], 100, 50000, seed=3)
    for r in rows:
        assert r["empirical"] == pytest.approx(math.exp(-r["rho"]), abs=4e-3)
        assert r["ci_low"] <= r["empirical"] <= r["ci_high"]


def test_thm5_workers_do_not_change_result():
    a = tail_bound_check_thm5(TWO_ARM, Z, [2.0], 50, 30000, seed=5, jobs=1, chunk=10000)
    b = tail_bound_check_thm5(TWO_ARM, Z, [2.0], 50, 30000, seed=5, jobs=2, chunk=10000)
    assert a == b


def test_thm5_rejects_non_gaussian():
    from prepex.divergence import RewardFamily
    inst = Instance(np.array([[0.5, 0.2]]), RewardFamily("bernoulli"))
    with pytest.raises(InputError):
        tail_bound_check_thm5(inst, [1.0], [5.0], 10, 10)


THREE_ARM = Instance(np.array([[1.0, 0.5, 0.2], [0.3, 0.8, 0.2]]), gaussian([1.0, 1.0]))


def test_thm6_loose_delta_tiny_horizon():
    rep = coverage_check_thm6(THREE_ARM, Z, 0.5, 5, 200, seed=0)
    assert rep["verdict"] == "pass"


def test_thm6_violations_grow_with_delta():
    """Larger delta means a smaller radius, so violations can only increase."""
    deltas = [0.01, 0.1, 0.3, 0.6, 0.9]
    # unit-variance noise but a deliberately tiny radius scale via a short
    # horizon keeps the counts informative
    reps = coverage_check_thm6(THREE_ARM, Z, deltas, 50, 300, seed=9)
    fr = [r["fraction"] for r in reps]
    assert fr == sorted(fr)


def test_thm6_shared_paths_match_single_calls():
    many = coverage_check_thm6(THREE_ARM, Z, [0.2, 0.5], 40, 100, seed=4)
    one = coverage_check_thm6(THREE_ARM, Z, 0.5, 40, 100, seed=4)
    assert many[1] == one


def test_as_preference():
    z = as_preference([0.6, 0.8], orthant(2))
    np.testing.assert_allclose(z.cone_coefficients @ orthant(2).generators, [0.6, 0.8])
    with pytest.raises(InputError):
        as_preference([-0.6, 0.8], orthant(2))
