"""Continuous-time generator for the additive-hazard (Aalen) MSM study.

The conditional hazard is constant on each interval ``[k, k+1)``, so the
waiting time within an interval is exponential.  Frailty ``U_i`` affects the
biomarker and the hazard but not treatment.

Both a frailty variance of 0.1 and of 1 are in circulation for this design;
``frailty_var`` exposes the choice and defaults to 0.1.  All normal noise terms
are parameterized by variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import NO_INITIATION, LongDataset, assemble
from .posviol import PositivityPolicy, Region, is_forced
from .stochastic import Draw, Label, derive_key, key_normal, key_open_uniform, key_uniform

DEFAULT_ALPHA = (0.7, -0.2, 0.05, 0.05)


@dataclass(frozen=True)
class StudyTwoParams:
    """Parameters of one study-II mechanism.

    When ``intervention`` is given (a 0/1 sequence of length ``K+1``) treatment
    follows it deterministically, no treatment draws are read and ``policy`` is
    ignored.
    """

    n: int
    policy: PositivityPolicy | None = None
    K: int = 4
    alpha: tuple[float, float, float, float] = DEFAULT_ALPHA
    frailty_var: float = 0.1
    biomarker_var: float = 1.0
    intervention: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if len(self.alpha) != 4:
            raise ValueError("alpha must have four entries (a0, aA, aL, aU)")
        if self.frailty_var < 0 or self.biomarker_var < 0:
            raise ValueError("variances must be non-negative")
        if self.policy is not None and self.policy.region is not Region.ABOVE_TAU:
            raise ValueError("study II uses the above-tau poor-health region")
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if self.intervention is not None:
            regime = tuple(int(a) for a in self.intervention)
            if len(regime) != self.K + 1 or any(a not in (0, 1) for a in regime):
                raise ValueError(f"intervention must be a 0/1 sequence of length K+1={self.K + 1}")
            object.__setattr__(self, "intervention", regime)


def conditional_hazard_two(alpha, a_k, l_k, u):
    """Additive conditional hazard; may be negative, callers decide what that means."""
    a0, aA, aL, aU = alpha
    return a0 + aA * np.asarray(a_k, dtype=float) + aL * np.asarray(l_k, dtype=float) + aU * np.asarray(u, dtype=float)


def treatment_prob_two(k, l, a_prev):
    if np.any((np.asarray(k) == 0) & (np.asarray(a_prev) != 0)):
        raise ValueError("there is no previous treatment at visit 0")
    return expit(-2.0 + 0.5 * np.asarray(l, dtype=float) + np.asarray(a_prev, dtype=float))


def interval_event_time(upsilon, hazard):
    """Waiting time ``-log(upsilon) / hazard`` within one unit interval.

    Returns ``inf`` where the hazard is not positive (no event possible).
    The subject fails in the interval iff the result is ``< 1``.
    """
    hazard = np.asarray(hazard, dtype=float)
    upsilon = np.asarray(upsilon, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = -np.log(upsilon) / hazard
    return np.where(hazard > 0, delta, np.inf)


def simulate_dataset_two(params: StudyTwoParams, rep: int, master_seed: int, scenario_key: int = 0) -> LongDataset:
    """Simulate ``params.n`` subjects; returns rows for visits ``0..K`` while at risk.

    ``diagnostics["nonpositive_hazard"]`` counts person-intervals whose
    hazard was ``<= 0`` and were therefore treated as event-free.
    """
    n, K = params.n, params.K
    base = [(Label.SCENARIO, scenario_key), (Label.REPLICATION, rep)]
    regime = params.intervention

    def key(ids, k, draw):
        return derive_key(master_seed, base + [(Label.SUBJECT, ids), (Label.VISIT, k), (Label.DRAW, draw)])

    ids = np.arange(n, dtype=np.int64)
    P = key_uniform(key(ids, 0, Draw.PROPENSITY))
    U = key_normal(key(ids, 0, Draw.BASELINE_LATENT), 0.0, math.sqrt(params.frailty_var))
    L = key_normal(key(ids, 0, Draw.BASELINE_NOISE), U, math.sqrt(params.biomarker_var))
    A_prev = np.zeros(n, dtype=bool)
    k_star = np.full(n, NO_INITIATION, dtype=np.int64)

    blocks = []
    nonpositive = 0
    T_of = np.full(n, float(K + 1))
    for k in range(K + 1):
        if ids.size == 0:
            break
        if k > 0:
            mean = 0.8 * L - A_prev + 0.1 * k + U
            L = key_normal(key(ids, k, Draw.CONFOUNDER_NOISE), mean, math.sqrt(params.biomarker_var))
        if regime is not None:
            forced = np.zeros(ids.size, dtype=bool)
            A = np.full(ids.size, bool(regime[k]))
        else:
            forced = _forced(params.policy, P, L)
            u_treat = key_uniform(key(ids, k, Draw.TREATMENT))
            A = forced | (u_treat < treatment_prob_two(k, L, A_prev.astype(float)))
        k_star = np.where(A & (k_star == NO_INITIATION), k, k_star)

        hazard = conditional_hazard_two(params.alpha, A, L, U)
        nonpositive += int(np.count_nonzero(hazard <= 0))
        delta = interval_event_time(key_open_uniform(key(ids, k, Draw.EVENT)), hazard)
        Y = delta < 1.0
        T_of[ids[Y]] = k + delta[Y]
        blocks.append(
            {
                "id": ids.copy(),
                "k": np.full(ids.size, k, dtype=np.int64),
                "A": A.astype(np.int64),
                "L": L.astype(float),
                "k_star": k_star.copy(),
                "Y_next": Y.astype(np.int64),
                "forced": forced,
                "U": U.astype(float),
            }
        )
        alive = ~Y
        ids, P, U, L, k_star = ids[alive], P[alive], U[alive], L[alive], k_star[alive]
        A_prev = A[alive]

    data = assemble(2, n, K, blocks, diagnostics={"nonpositive_hazard": nonpositive})
    data.T = T_of[data.id]
    return data


def _forced(policy, P, L):
    if policy is None:
        return np.zeros(P.shape, dtype=bool)
    return is_forced(policy, P, L)
