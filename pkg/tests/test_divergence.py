import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from prepex.divergence import RewardFamily, gaussian, kl_scalar, kl_scalarized
from prepex.errors import InputError

GAUSS = gaussian([1.0])
BERN = RewardFamily("bernoulli")
POIS = RewardFamily("poisson")


def test_examples():
    assert kl_scalar(GAUSS, 1, 0) == pytest.approx(0.5)
    for fam in (GAUSS, BERN, POIS):
        assert kl_scalar(fam, 0.3, 0.3) == 0.0
    ref = float(mpmath.mpf("0.5") * mpmath.log(2) + mpmath.mpf("0.5") * mpmath.log(mpmath.mpf(2) / 3))
    assert kl_scalar(BERN, 0.5, 0.25) == pytest.approx(ref, abs=1e-14)
    assert ref == pytest.approx(0.14384, abs=1e-5)


def test_poisson_against_mpmath():
    p, q = mpmath.mpf("2.5"), mpmath.mpf("1.2")
    ref = float(p * mpmath.log(p / q) - p + q)
    assert kl_scalar(POIS, 2.5, 1.2) == pytest.approx(ref, abs=1e-14)


def test_scalarized_examples():
    assert kl_scalarized([1, 0], [2, 9], [0, 9], gaussian([1, 1])) == pytest.approx(2.0)
    assert kl_scalarized([1, 1], [3, 4], [3, 4], gaussian([1, 1])) == 0.0
    assert kl_scalarized([1, 1], [1, 1], [0, 0], gaussian([1, 2])) == pytest.approx(0.625)
    # non-gaussian families use the scalarized means
    assert kl_scalarized([0.5, 0.5], [0.5, 0.5], [0.25, 0.25], BERN) == pytest.approx(
        kl_scalar(BERN, 0.5, 0.25))


def test_domain_errors():
    with pytest.raises(InputError):
        kl_scalar(BERN, 1.5, 0.5)
    with pytest.raises(InputError):
        kl_scalar(POIS, -1.0, 0.5)
    with pytest.raises(InputError):
        kl_scalarized([1, 1], [0.9, 0.9], [0.5, 0.5], BERN)       # z'm = 1.8
    with pytest.raises(InputError):
        RewardFamily("cauchy")
    with pytest.raises(InputError):
        kl_scalarized([1, 0], [1, 2], [0, 0], gaussian([1]))
    with pytest.raises(InputError):
        kl_scalarized([1], [1, 2], [0, 0], gaussian([1, 1]))


def test_boundary_clamping_is_finite():
    assert math.isfinite(kl_scalar(BERN, 0.0, 1.0))
    assert math.isfinite(kl_scalar(BERN, 1.0 + 5e-7, 0.5))
    assert math.isfinite(kl_scalar(POIS, 0.0, 2.0))


unit = st.floats(0.001, 0.999)
pos = st.floats(0.01, 50)
real = st.floats(-50, 50)


@given(st.sampled_from(["gaussian", "bernoulli", "poisson"]), st.data())
def test_nonnegative_zero_iff_equal(kind, data):
    fam = {"gaussian": GAUSS, "bernoulli": BERN, "poisson": POIS}[kind]
    dom = {"gaussian": real, "bernoulli": unit, "poisson": pos}[kind]
    p, q = data.draw(dom), data.draw(dom)
    v = kl_scalar(fam, p, q)
    assert v >= 0
    if p == q:
        assert v == 0
    elif abs(p - q) > 1e-3:
        assert v > 0


@given(st.sampled_from(["gaussian", "bernoulli", "poisson"]), st.data())
def test_monotone_away_from_p(kind, data):
    fam = {"gaussian": GAUSS, "bernoulli": BERN, "poisson": POIS}[kind]
    lo, hi = {"gaussian": (-20, 20), "bernoulli": (0.01, 0.99), "poisson": (0.05, 20)}[kind]
    p = data.draw(st.floats(lo, hi))
    grid = np.linspace(lo, hi, 200)
    right = [kl_scalar(fam, p, q) for q in grid[grid >= p]]
    left = [kl_scalar(fam, p, q) for q in grid[grid <= p]]
    assert all(b >= a - 1e-12 for a, b in zip(right, right[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(left, left[1:]))


@given(st.lists(st.floats(0.01, 3), min_size=3, max_size=3),
       st.lists(real, min_size=3, max_size=3), st.lists(real, min_size=3, max_size=3),
       st.floats(0.01, 10))
def test_gaussian_scalarized_is_quadratic_in_z(z, m, mt, lam):
    fam = gaussian([1.0, 0.5, 2.0])
    base = kl_scalarized(z, m, mt, fam)
    scaled = kl_scalarized(np.array(z) * lam, m, mt, fam)
    assert scaled == pytest.approx(lam ** 2 * base, rel=1e-12, abs=1e-300)
