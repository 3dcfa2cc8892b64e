"""Discrete-time generator for the logit-MSM study (CD4 / HAART setting).

Treatment and CD4 change only at check-up visits ``k % kappa == 0``; once
treated a subject stays treated.  Failure is driven by the baseline latent
health ``U_{i,0}``: the subject fails in ``(k, k+1]`` as soon as the
conditional survival ``prod_{j<=k} (1 - lambda_j)`` drops to ``1 - U_{i,0}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import NO_INITIATION, LongDataset, assemble
from .posviol import PositivityPolicy, Region, is_forced
from .stochastic import Draw, Label, derive_key, gamma_inverse_cdf, key_normal, key_open_uniform, key_uniform

DEFAULT_GAMMA = (-3.0, 0.05, -1.5, 0.1)


@dataclass(frozen=True)
class StudyOneParams:
    """Parameters of one study-I data-generating mechanism.

    ``policy=None`` is the benchmark mechanism (no forcing code path at all).
    Normal noise terms are parameterized by their variances.
    """

    n: int
    policy: PositivityPolicy | None = None
    K: int = 40
    kappa: int = 5
    gamma: tuple[float, float, float, float] = DEFAULT_GAMMA
    cd4_gamma_shape: float = 3.0
    cd4_gamma_scale: float = 154.0
    baseline_noise_var: float = 20.0
    latent_step_var: float = 0.05
    cd4_drift_var: float = 50.0
    haart_cd4_gain: float = 150.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.K < 0 or self.kappa < 1:
            raise ValueError("K must be >= 0 and kappa >= 1")
        if len(self.gamma) != 4:
            raise ValueError("gamma must have four entries (g0, gA1, gA2, gA3)")
        if self.policy is not None and self.policy.region is not Region.BELOW_TAU:
            raise ValueError("study I uses the below-tau poor-health region")
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))


def conditional_hazard_one(gamma, k, a_k, k_star):
    """Conditional probability of failure in ``(k, k+1]``.

    ``k_star`` is the initiation visit; pass ``NO_INITIATION`` (or ``None``)
    for untreated rows.  Vectorized over ``k``, ``a_k`` and ``k_star``.
    """
    g0, g1, g2, g3 = gamma
    scalar = np.ndim(k) == 0 and np.ndim(a_k) == 0 and np.ndim(k_star) == 0
    if k_star is None:
        k_star = NO_INITIATION
    k = np.asarray(k, dtype=float)
    a = np.asarray(a_k, dtype=float)
    ks = np.asarray(k_star, dtype=float)
    treated = a == 1
    if np.any(treated & ((ks < 0) | (ks > k))):
        raise ValueError("treated rows need an initiation visit k_star <= k")
    d1 = np.where(treated, ks, k)
    d3 = np.where(treated, k - ks, 0.0)
    lam = expit(g0 + g1 * d1 + g2 * a + g3 * d3)
    return float(lam) if scalar else lam


def treatment_prob_one(k, l):
    """Probability of starting HAART at a check-up, given visit and CD4."""
    return expit(-0.405 + 0.0205 * np.asarray(k, dtype=float) - 0.00405 * (np.asarray(l, dtype=float) - 500.0))


def simulate_dataset_one(params: StudyOneParams, rep: int, master_seed: int, scenario_key: int = 0) -> LongDataset:
    """Simulate ``params.n`` subjects for replication ``rep``.

    Subjects are simulated in lock-step over visits, but every random number is
    addressed by ``(scenario_key, rep, subject, visit, draw)`` so each subject's
    trajectory is independent of ``n`` and of evaluation order.
    """
    n, K, kappa = params.n, params.K, params.kappa
    base = [(Label.SCENARIO, scenario_key), (Label.REPLICATION, rep)]

    def key(ids, k, draw):
        return derive_key(master_seed, base + [(Label.SUBJECT, ids), (Label.VISIT, k), (Label.DRAW, draw)])

    ids = np.arange(n, dtype=np.int64)
    P = key_uniform(key(ids, 0, Draw.PROPENSITY))
    U0 = key_open_uniform(key(ids, 0, Draw.BASELINE_LATENT))
    eps0 = key_normal(key(ids, 0, Draw.BASELINE_NOISE), 0.0, math.sqrt(params.baseline_noise_var))
    # CD4 is a non-negative count; the rare negative baseline is clamped.
    L = np.maximum(0.0, gamma_inverse_cdf(U0, params.cd4_gamma_shape, params.cd4_gamma_scale) + eps0)

    forced = _forced(params.policy, P, L)
    u_treat = key_uniform(key(ids, 0, Draw.TREATMENT))
    A = forced | (u_treat < treatment_prob_one(0, L))
    k_star = np.where(A, 0, NO_INITIATION)
    U = U0.copy()
    surv = 1.0 - conditional_hazard_one(params.gamma, np.zeros(n), A.astype(float), k_star)
    Y = surv <= 1.0 - U0

    blocks = [_block(ids, 0, A, L, k_star, Y, forced, U)]
    alive = ~Y
    ids, P, U0, L, A, k_star, U, surv = (v[alive] for v in (ids, P, U0, L, A, k_star, U, surv))

    for k in range(1, K + 1):
        if ids.size == 0:
            break
        step = key_normal(key(ids, k, Draw.LATENT_NOISE), 0.0, math.sqrt(params.latent_step_var))
        U = np.clip(U + step, 0.0, 1.0)
        if k % kappa == 0:
            drift = key_normal(key(ids, k, Draw.CONFOUNDER_NOISE), 100.0 * (U - 2.0), math.sqrt(params.cd4_drift_var))
            L = np.maximum(0.0, L + params.haart_cd4_gain * A + drift)
            forced = _forced(params.policy, P, L)
            u_treat = key_uniform(key(ids, k, Draw.TREATMENT))
            A_new = A | forced | (u_treat < treatment_prob_one(k, L))
            k_star = np.where(A_new & ~A, k, k_star)
            A = A_new
        else:
            forced = np.zeros(ids.size, dtype=bool)
        surv = surv * (1.0 - conditional_hazard_one(params.gamma, np.full(ids.size, float(k)), A.astype(float), k_star))
        Y = surv <= 1.0 - U0
        blocks.append(_block(ids, k, A, L, k_star, Y, forced, U))
        alive = ~Y
        ids, P, U0, L, A, k_star, U, surv = (v[alive] for v in (ids, P, U0, L, A, k_star, U, surv))

    return assemble(1, n, K, blocks)


def _forced(policy, P, L):
    if policy is None:
        return np.zeros(P.shape, dtype=bool)
    return is_forced(policy, P, L)


def _block(ids, k, A, L, k_star, Y, forced, U):
    return {
        "id": ids.copy(),
        "k": np.full(ids.size, k, dtype=np.int64),
        "A": A.astype(np.int64),
        "L": L.astype(float),
        "k_star": k_star.astype(np.int64),
        "Y_next": Y.astype(np.int64),
        "forced": forced.astype(bool),
        "U": U.astype(float),
    }
