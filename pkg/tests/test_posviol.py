import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posim.posviol import PositivityPolicy, Region, is_forced

unit = st.floats(0.0, 1.0)


def test_pi_one_never_forces():
    pol = PositivityPolicy(1.0, 500.0, Region.BELOW_TAU)
    p = np.linspace(0, 1, 1000, endpoint=False)
    assert not np.any(is_forced(pol, p, np.full(p.size, 100.0)))


def test_examples():
    assert is_forced(PositivityPolicy(0.5, 300.0, Region.BELOW_TAU), 0.7, 200.0) is True
    assert is_forced(PositivityPolicy(0.5, 2.0, Region.ABOVE_TAU), 0.7, 1.5) is False
    assert is_forced(PositivityPolicy(0.5, 2.0, Region.ABOVE_TAU), 0.7, 2.5) is True


def test_boundaries():
    below = PositivityPolicy(0.5, 300.0, Region.BELOW_TAU)
    assert is_forced(below, 0.5, 200.0)  # p_i == pi counts
    assert not is_forced(below, 0.7, 300.0)  # l == tau is outside [0, tau)
    assert not is_forced(below, 0.7, -1.0)
    above = PositivityPolicy(0.5, 2.0, Region.ABOVE_TAU)
    assert not is_forced(above, 0.7, 2.0)


def test_pi_zero_forces_whole_region():
    pol = PositivityPolicy(0.0, 500.0, Region.BELOW_TAU)
    l = np.linspace(0, 499.9, 50)
    assert np.all(is_forced(pol, np.zeros(50), l))


@pytest.mark.parametrize("pi", [-0.1, 1.01])
def test_invalid_pi(pi):
    with pytest.raises(ValueError):
        PositivityPolicy(pi, 1.0, Region.ABOVE_TAU)


def test_negative_tau_below_region_rejected():
    with pytest.raises(ValueError):
        PositivityPolicy(0.5, -1.0, Region.BELOW_TAU)
    PositivityPolicy(0.5, -1e9, Region.ABOVE_TAU)


@given(p=unit, l=st.floats(-10, 1000), pi1=unit, pi2=unit, tau=st.floats(0, 600))
def test_monotone_in_pi(p, l, pi1, pi2, tau):
    lo, hi = sorted((pi1, pi2))
    for region in Region:
        if is_forced(PositivityPolicy(hi, tau, region), p, l):
            assert is_forced(PositivityPolicy(lo, tau, region), p, l)


@given(p=unit, l=st.floats(-10, 1000), pi=unit, t1=st.floats(0, 600), t2=st.floats(0, 600))
def test_monotone_in_region_width(p, l, pi, t1, t2):
    narrow, wide = sorted((t1, t2))
    if is_forced(PositivityPolicy(pi, narrow, Region.BELOW_TAU), p, l):
        assert is_forced(PositivityPolicy(pi, wide, Region.BELOW_TAU), p, l)
    # for the above-tau region a lower tau is wider
    if is_forced(PositivityPolicy(pi, wide, Region.ABOVE_TAU), p, l):
        assert is_forced(PositivityPolicy(pi, narrow, Region.ABOVE_TAU), p, l)
