import math

import numpy as np
import pytest
from scipy.special import expit

import posim.genmodel_one as g1
from posim.data import NO_INITIATION
from posim.genmodel_one import StudyOneParams, conditional_hazard_one, simulate_dataset_one, treatment_prob_one
from posim.posviol import PositivityPolicy, Region

GAMMA = (-3.0, 0.05, -1.5, 0.1)


def policy(pi, tau):
    return PositivityPolicy(pi, tau, Region.BELOW_TAU)


@pytest.fixture(scope="module")
def bench():
    return simulate_dataset_one(StudyOneParams(n=2000), 0, 17, 3)


def test_hazard_examples():
    assert conditional_hazard_one(GAMMA, 0, 0, None) == pytest.approx(0.04743, abs=1e-5)
    assert conditional_hazard_one(GAMMA, 0, 1, 0) == pytest.approx(0.01099, abs=1e-5)
    assert conditional_hazard_one((0, 0, 0, 0), 12, 1, 3) == 0.5


def test_hazard_formula_vectorized():
    k = np.array([4, 9, 9])
    a = np.array([0, 1, 1])
    ks = np.array([NO_INITIATION, 5, 0])
    got = conditional_hazard_one(GAMMA, k, a, ks)
    expected = expit([-3 + 0.05 * 4, -3 + 0.05 * 5 - 1.5 + 0.1 * 4, -3 - 1.5 + 0.1 * 9])
    assert np.allclose(got, expected, rtol=0, atol=1e-15)


def test_hazard_requires_initiation_for_treated():
    with pytest.raises(ValueError):
        conditional_hazard_one(GAMMA, 3, 1, None)
    with pytest.raises(ValueError):
        conditional_hazard_one(GAMMA, 3, 1, 5)


def test_treatment_probabilities():
    assert treatment_prob_one(0, 500) == pytest.approx(0.400, abs=1e-3)
    assert treatment_prob_one(0, 400) == pytest.approx(0.5, abs=1e-3)
    assert treatment_prob_one(10, 500) == pytest.approx(0.450, abs=1e-3)


def test_params_validation():
    with pytest.raises(ValueError):
        StudyOneParams(n=0)
    with pytest.raises(ValueError):
        StudyOneParams(n=10, policy=PositivityPolicy(0.5, 1.0, Region.ABOVE_TAU))


def test_structure(bench):
    d = bench
    assert len(d) <= d.n * (d.K + 1)
    assert np.all(np.diff(d.id) >= 0)
    assert np.all(d.L >= 0)
    assert np.all((d.U >= 0) & (d.U <= 1))
    assert not np.any(d.forced)
    A = d.subject_history("A", fill=-1)
    L = d.subject_history("L", fill=np.nan)
    for i in range(50):
        rows = d.k[d.id == i]
        y = d.Y_next[d.id == i]
        # consecutive visits from 0, at most one event and it is last
        assert np.array_equal(rows, np.arange(rows.size))
        assert y.sum() <= 1 and (y.sum() == 0 or y[-1] == 1)
        if y.sum() == 0:
            assert rows.size == d.K + 1
        a = A[i, : rows.size]
        assert np.all(np.diff(a) >= 0)
        for k in range(1, rows.size):
            if k % 5:
                assert a[k] == a[k - 1] and L[i, k] == L[i, k - 1]


def test_k_star_consistent(bench):
    d = bench
    treated = d.A == 1
    assert np.all(d.k_star[~treated] == NO_INITIATION)
    assert np.all((d.k_star[treated] >= 0) & (d.k_star[treated] <= d.k[treated]))
    assert np.all(d.k_star[treated] % 5 == 0)


def test_death_rule_reconstruction(bench):
    """Step-5 and step-9 death rules agree with the recorded outcomes."""
    d = bench
    first = d.k == 0
    U0 = np.zeros(d.n)
    U0[d.id[first]] = d.U[first]
    lam = conditional_hazard_one(GAMMA, d.k, d.A, d.k_star)
    for i in range(200):
        rows = np.flatnonzero(d.id == i)
        surv = np.cumprod(1.0 - lam[rows])
        died = surv <= 1.0 - U0[i]
        assert np.array_equal(died.astype(int), d.Y_next[rows])
        assert (lam[rows[0]] >= U0[i]) == bool(d.Y_next[rows[0]])


def test_pi_one_equals_benchmark():
    for rep in range(3):
        base = simulate_dataset_one(StudyOneParams(n=300), rep, 5, 9)
        for tau in (0.0, 250.0, 500.0):
            pi1 = simulate_dataset_one(StudyOneParams(n=300, policy=policy(1.0, tau)), rep, 5, 9)
            assert base.equals(pi1)


def test_pi_zero_forces_low_cd4():
    d = simulate_dataset_one(StudyOneParams(n=500, policy=policy(0.0, 500.0)), 0, 5, 9)
    checkup = d.k % 5 == 0
    low = checkup & (d.L < 500)
    assert np.all(d.A[low] == 1)
    assert np.all(d.forced[low])
    assert not np.any(d.forced[~checkup])


def test_subject_streams_do_not_depend_on_n():
    small = simulate_dataset_one(StudyOneParams(n=50), 2, 5, 9)
    big = simulate_dataset_one(StudyOneParams(n=400), 2, 5, 9)
    m = len(small)
    for col in ("id", "k", "A", "L", "Y_next"):
        assert np.array_equal(getattr(small, col), getattr(big, col)[:m])


def test_deterministic():
    a = simulate_dataset_one(StudyOneParams(n=200, policy=policy(0.3, 300.0)), 4, 8, 1)
    b = simulate_dataset_one(StudyOneParams(n=200, policy=policy(0.3, 300.0)), 4, 8, 1)
    assert a.equals(b)


@pytest.mark.slow
def test_initial_treatment_frequency_near_500():
    # ~1% of subjects fall in the window; 2e6 keeps the sampling SE near 0.003
    d = simulate_dataset_one(StudyOneParams(n=2_000_000, K=0), 0, 21, 2)
    window = (d.k == 0) & (d.L >= 495) & (d.L <= 505)
    assert window.sum() > 20_000
    assert d.A[window].mean() == pytest.approx(0.40, abs=0.01)


def test_baseline_cd4_distribution():
    d = simulate_dataset_one(StudyOneParams(n=20_000, K=0), 0, 3, 2)
    # mean of Gamma(shape 3, scale 154) is 462; noise and clamping barely move it
    assert d.L.mean() == pytest.approx(462.0, rel=0.02)
    assert math.isclose(np.median(d.L), 411.8, rel_tol=0.03)
