"""Marginal structural model fits (pooled logistic and Aalen additive) and survival transforms."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import LongDataset
from .glm import LogisticFit, fit_weighted_logistic
from .weights import WeightTable


class GForm(enum.Enum):
    """How a treatment history ``a_0..a_k`` enters the hazard at visit ``k``."""

    CurrentLevel = "current"
    Duration = "duration"
    MainEffectTerms = "main_effects"
    HavercroftD1AD3 = "d1_a_d3"


def gform_names(gform: GForm, width: int | None = None) -> list[str]:
    if gform is GForm.CurrentLevel:
        return ["A"]
    if gform is GForm.Duration:
        return ["duration"]
    if gform is GForm.HavercroftD1AD3:
        return ["d1", "A", "d3"]
    if width is None:
        raise ValueError("MainEffectTerms needs the number of lags")
    return [f"A_lag{j}" for j in range(width)]


def gform_design(gform: GForm, history, subject, k) -> np.ndarray:
    """Design columns for rows ``(subject[r], k[r])`` of a treatment-history matrix.

    ``history`` is ``(n_subjects, K+1)``; entries after visit ``k[r]`` are ignored.
    MainEffectTerms yields ``K+1`` columns (lag ``j`` is zero while ``k < j``).
    """
    H = np.asarray(history, dtype=float)
    if H.ndim == 1:
        H = H[None, :]
    s = np.asarray(subject, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    if gform is GForm.CurrentLevel:
        return H[s, k][:, None]
    if gform is GForm.Duration:
        return np.cumsum(H, axis=1)[s, k][:, None]
    if gform is GForm.MainEffectTerms:
        width = H.shape[1]
        out = np.zeros((s.size, width))
        for j in range(width):
            ok = k >= j
            out[ok, j] = H[s[ok], k[ok] - j]
        return out
    if gform is GForm.HavercroftD1AD3:
        started = np.maximum.accumulate(H, axis=1)[s, k] > 0
        first = np.argmax(H > 0, axis=1)[s]
        kf = k.astype(float)
        k_star = np.where(started, first, np.inf)
        d1 = np.minimum(kf, k_star)
        d3 = np.where(started, kf - first, 0.0)
        return np.column_stack([d1, H[s, k], d3])
    raise ValueError(f"unknown g-form {gform!r}")


def regime(kind: str, K: int) -> np.ndarray:
    """``always`` / ``never`` treatment strategies over visits ``0..K``."""
    if kind == "always":
        return np.ones(K + 1)
    if kind == "never":
        return np.zeros(K + 1)
    raise ValueError(f"unknown regime {kind!r}")


@dataclass
class LogitMsmFit:
    gamma_hat: np.ndarray
    names: list[str]
    gform: GForm
    fit: LogisticFit

    @property
    def converged(self) -> bool:
        return self.fit.converged


def _check_aligned(data: LongDataset, weights: WeightTable | None):
    if weights is None:
        return np.ones(len(data))
    if len(weights.id) != len(data) or not (np.array_equal(weights.id, data.id) and np.array_equal(weights.k, data.k)):
        raise ValueError("weights are not aligned with the dataset rows")
    return weights.sw_truncated


def fit_logit_msm(data: LongDataset, weights: WeightTable | None, gform: GForm = GForm.HavercroftD1AD3) -> LogitMsmFit:
    """Weighted pooled logistic regression of ``Y_next`` on intercept plus g-form columns."""
    w = _check_aligned(data, weights)
    H = data.subject_history("A")
    cols = gform_design(gform, H, data.id, data.k)
    X = np.column_stack([np.ones(len(data)), cols])
    fit = fit_weighted_logistic(X, data.Y_next, w)
    names = ["intercept"] + gform_names(gform, cols.shape[1])
    return LogitMsmFit(gamma_hat=fit.coefficients, names=names, gform=gform, fit=fit)


def survival_logit_curve(gamma, gform: GForm, regime_a, t_max: int) -> np.ndarray:
    """``S(t)`` for ``t = 0..t_max`` as the product of one minus the visit hazards before ``t``."""
    gamma = np.asarray(gamma, dtype=float)
    a = np.asarray(regime_a, dtype=float)
    if t_max > a.size:
        raise ValueError("regime is shorter than the survival horizon")
    if t_max == 0:
        return np.ones(1)
    ks = np.arange(t_max)
    cols = gform_design(gform, a[None, :], np.zeros(t_max, dtype=np.int64), ks)
    lam = expit(gamma[0] + cols @ gamma[1:])
    return np.concatenate([[1.0], np.cumprod(1.0 - lam)])


def survival_logit(gamma, gform: GForm, regime_a, t: int) -> float:
    if hasattr(gamma, "gamma_hat"):
        gamma = gamma.gamma_hat
    return float(survival_logit_curve(gamma, gform, regime_a, int(t))[-1])


@dataclass
class AalenMsmFit:
    """Cumulative-coefficient step functions of the additive MSM.

    Column 0 of ``increments`` is the baseline ``C_0``; column ``1 + j`` is the
    lag-``j`` treatment coefficient ``C_Aj``.  ``active[e, c]`` is False where
    column ``c`` was not in the design (``floor(t) < j``) or was not identified
    at event time ``e``; those increments are zero.
    """

    K: int
    event_times: np.ndarray
    increments: np.ndarray
    active: np.ndarray
    n_at_risk: np.ndarray

    @property
    def names(self) -> list[str]:
        return ["C0"] + [f"CA{j}" for j in range(self.K + 1)]

    def cumulative(self, t) -> np.ndarray:
        """Cumulative coefficients at time(s) ``t`` (right-continuous)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        cum = np.vstack([np.zeros(self.K + 2), np.cumsum(self.increments, axis=0)])
        idx = np.searchsorted(self.event_times, t_arr, side="right")
        out = cum[idx]
        return out[0] if np.ndim(t) == 0 else out

    def optional_variation_se(self, t) -> np.ndarray:
        """Square root of the summed squared increments up to ``t``.

        With untied event times each increment comes from a single event, so
        this is the usual optional-variation variance estimate of the
        cumulative coefficients (weight estimation is not accounted for).
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        var = np.vstack([np.zeros(self.K + 2), np.cumsum(self.increments**2, axis=0)])
        out = np.sqrt(var[np.searchsorted(self.event_times, t_arr, side="right")])
        return out[0] if np.ndim(t) == 0 else out

    def unidentified_events(self) -> int:
        """Event times at which some column that belongs in the design was dropped."""
        interval = np.floor(self.event_times).astype(int)
        expected = np.arange(self.K + 2)[None, :] <= (interval[:, None] + 1)
        return int(np.count_nonzero(np.any(expected & ~self.active, axis=1)))


@dataclass
class CumulativeGrid:
    """Cumulative coefficients known only at integer times ``0..K+1`` (e.g. a truth table)."""

    K: int
    values: np.ndarray  # (K+2 times, K+2 coefficients)

    def cumulative(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr != np.round(t_arr)) or np.any(t_arr < 0) or np.any(t_arr > self.K + 1):
            raise ValueError("grid coefficients are only defined at integer times 0..K+1")
        out = self.values[t_arr.astype(int)]
        return out[0] if np.ndim(t) == 0 else out


def _interval_design(H, subj, k):
    # [1, a_k, a_{k-1}, ..., a_0]
    return np.column_stack([np.ones(subj.size)] + [H[subj, k - j] for j in range(k + 1)])


def _solve_identified(G, r, rtol):
    p = G.shape[0]
    d = np.sqrt(np.diag(G))
    kept: list[int] = []
    for j in range(p):
        if d[j] == 0:
            continue
        trial = kept + [j]
        sub = G[np.ix_(trial, trial)] / np.outer(d[trial], d[trial])
        if np.linalg.eigvalsh(sub)[0] > rtol:
            kept.append(j)
    inc = np.zeros(p)
    mask = np.zeros(p, dtype=bool)
    if kept:
        inc[kept] = np.linalg.solve(G[np.ix_(kept, kept)], r[kept])
        mask[kept] = True
    return inc, mask


def fit_aalen_msm(data: LongDataset, weights: WeightTable | None = None, rtol: float = 1e-10) -> AalenMsmFit:
    """Weighted Aalen least-squares fit with main-effect lag terms.

    At each distinct event time ``t`` the increment is
    ``(X' W X)^{-1} X' W dN(t)`` over the risk set ``{T >= t}``, with design
    rows and weights taken from visit ``floor(t)``.  Tied event times share
    one increment.
    """
    if data.T is None:
        raise ValueError("Aalen fit needs continuous event times")
    w_rows = _check_aligned(data, weights)
    K = data.K
    P = K + 2
    H = data.subject_history("A", fill=0).astype(float)

    times, incs, masks, at_risk = [], [], [], []
    for k in range(K + 1):
        rows = np.flatnonzero(data.k == k)
        if rows.size == 0:
            continue
        ev_rows = rows[data.Y_next[rows] == 1]
        if ev_rows.size == 0:
            continue
        subj = data.id[rows]
        X = _interval_design(H, subj, k)
        w = w_rows[rows]
        T = data.T[rows]
        p = k + 2

        order = np.argsort(-T, kind="stable")
        T_desc = T[order]
        outer = (X[order, :, None] * X[order, None, :]) * w[order, None, None]
        G_cum = np.cumsum(outer, axis=0)

        ev_T = data.T[ev_rows]
        uniq, inv = np.unique(ev_T, return_inverse=True)
        ev_X = _interval_design(H, data.id[ev_rows], k) * w_rows[ev_rows][:, None]
        R = np.zeros((uniq.size, p))
        np.add.at(R, inv, ev_X)
        n_risk = np.searchsorted(-T_desc, -uniq, side="right")
        G = G_cum[n_risk - 1]

        diag = np.sqrt(np.einsum("eii->ei", G))
        ok = np.all(diag > 0, axis=1)
        inc = np.zeros((uniq.size, p))
        mask = np.zeros((uniq.size, p), dtype=bool)
        if ok.any():
            Gn = G[ok] / (diag[ok, :, None] * diag[ok, None, :])
            good = np.linalg.eigvalsh(Gn)[:, 0] > rtol
            idx = np.flatnonzero(ok)[good]
            if idx.size:
                inc[idx] = np.linalg.solve(G[idx], R[idx][..., None])[..., 0]
                mask[idx] = True
            ok[np.flatnonzero(ok)[~good]] = False
        for e in np.flatnonzero(~ok):
            inc[e], mask[e] = _solve_identified(G[e], R[e], rtol)

        times.append(uniq)
        incs.append(np.pad(inc, ((0, 0), (0, P - p))))
        masks.append(np.pad(mask, ((0, 0), (0, P - p))))
        at_risk.append(n_risk)

    if not times:
        return AalenMsmFit(K, np.zeros(0), np.zeros((0, P)), np.zeros((0, P), dtype=bool), np.zeros(0, dtype=np.int64))
    return AalenMsmFit(
        K=K,
        event_times=np.concatenate(times),
        increments=np.vstack(incs),
        active=np.vstack(masks),
        n_at_risk=np.concatenate(at_risk),
    )


def cumulative_hazard_aalen(coeffs, regime_a, t: float) -> float:
    """Integrated marginal hazard up to ``t`` under a fixed regime.

    Works interval by interval: on ``[k, k+1)`` the lag-``j`` coefficient
    contributes only if ``a_{k-j} = 1``.
    """
    a = np.asarray(regime_a, dtype=float)
    t = float(t)
    if t <= 0:
        return 0.0
    total = 0.0
    k = 0
    while k < t:
        upper = min(k + 1.0, t)
        delta = coeffs.cumulative(upper) - coeffs.cumulative(float(k))
        lags = a[k::-1] if k < a.size else None
        if lags is None:
            raise ValueError("regime is shorter than the survival horizon")
        total += delta[0] + float(np.dot(delta[1 : k + 2], lags))
        k += 1
    return total


def survival_aalen(coeffs, regime_a, t: float) -> float:
    """``exp(-integrated hazard)``; not forced to be monotone, since increments may be negative."""
    return float(np.exp(-cumulative_hazard_aalen(coeffs, regime_a, t)))
