"""Stabilized inverse-probability-of-treatment weights and percentile truncation."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .data import LongDataset
from .glm import LogisticFit, fit_weighted_logistic


class WeightError(ValueError):
    pass


class TruncationStrategy(enum.Enum):
    NoWT = None
    P1_99 = (1.0, 99.0)
    P2_5_97_5 = (2.5, 97.5)
    P5_95 = (5.0, 95.0)
    P10_90 = (10.0, 90.0)

    @property
    def label(self) -> str:
        if self.value is None:
            return "NoWT"
        lo, hi = self.value
        return f"{lo:g}-{hi:g}"

    @classmethod
    def parse(cls, text: str) -> "TruncationStrategy":
        t = text.strip()
        for s in cls:
            if t in (s.name, s.label):
                return s
        if t.lower() in ("none", "nowt", "no"):
            return cls.NoWT
        raise ValueError(f"unknown truncation strategy {text!r}; use one of {[s.label for s in cls]}")


@dataclass
class WeightTable:
    """Per-row weights aligned with the rows of the dataset they came from.

    ``numerator_prob`` and ``denominator_prob`` are the fitted probabilities of
    the treatment actually received (1 where treatment is deterministic and no
    model applies).  ``sw`` is the running product of their ratio within each
    subject; ``sw_truncated`` is ``sw`` clamped to ``bounds``.
    """

    id: np.ndarray
    k: np.ndarray
    numerator_prob: np.ndarray
    denominator_prob: np.ndarray
    sw: np.ndarray
    sw_truncated: np.ndarray
    extreme: np.ndarray
    model_rows: np.ndarray
    numerator_fit: LogisticFit
    denominator_fit: LogisticFit
    strategy: TruncationStrategy = TruncationStrategy.NoWT
    bounds: tuple[float, float] | None = None

    @property
    def ratio(self) -> np.ndarray:
        return self.numerator_prob / self.denominator_prob

    @property
    def fits_converged(self) -> bool:
        return self.numerator_fit.converged and self.denominator_fit.converged


def _observed_prob(p1, a):
    return np.where(a == 1, p1, 1.0 - p1)


def _cumulative_weights(data: LongDataset, ratio: np.ndarray) -> np.ndarray:
    hist = np.ones((data.n, data.K + 1))
    hist[data.id, data.k] = ratio
    # Sequential products so that sw_k == sw_{k-1} * ratio_k exactly.
    cum = np.cumprod(hist, axis=1)
    return cum[data.id, data.k]


def _build(data, rows, y, X_num, X_den, extreme_threshold) -> WeightTable:
    num_fit = fit_weighted_logistic(X_num, y)
    den_fit = fit_weighted_logistic(X_den, y)
    num = np.ones(len(data))
    den = np.ones(len(data))
    num[rows] = _observed_prob(num_fit.predict(X_num), y)
    den[rows] = _observed_prob(den_fit.predict(X_den), y)
    if np.any(den == 0.0):
        bad = np.flatnonzero(den == 0.0)[:5]
        raise WeightError(f"denominator probability of the observed treatment is 0 at rows {bad.tolist()}")
    sw = _cumulative_weights(data, num / den)
    return WeightTable(
        id=data.id,
        k=data.k,
        numerator_prob=num,
        denominator_prob=den,
        sw=sw,
        sw_truncated=sw.copy(),
        extreme=den < extreme_threshold,
        model_rows=rows,
        numerator_fit=num_fit,
        denominator_fit=den_fit,
    )


def estimate_weights_one(data: LongDataset, kappa: int = 5, extreme_threshold: float = 1e-12) -> WeightTable:
    """Weights for the study-I design.

    Treatment models are pooled logistic regressions for initiation, fitted on
    check-up rows of subjects still untreated entering the visit: numerator on
    ``(1, k)``, denominator on ``(1, k, L - 500)``.  All other rows have
    deterministic treatment and contribute a factor of one.
    """
    rows = np.flatnonzero((data.k % kappa == 0) & (data.previous("A") == 0))
    k = data.k[rows].astype(float)
    y = data.A[rows]
    X_num = np.column_stack([np.ones(rows.size), k])
    X_den = np.column_stack([X_num, data.L[rows] - 500.0])
    return _build(data, rows, y, X_num, X_den, extreme_threshold)


def estimate_weights_two(data: LongDataset, extreme_threshold: float = 1e-12) -> WeightTable:
    """Weights for the study-II design.

    Pooled over all at-risk rows: numerator on ``(1, A_{k-1})``, denominator
    on ``(1, A_{k-1}, L_k)``, with ``A_{-1} = 0``.
    """
    rows = np.arange(len(data))
    a_prev = data.previous("A").astype(float)
    X_num = np.column_stack([np.ones(rows.size), a_prev])
    X_den = np.column_stack([X_num, data.L])
    return _build(data, rows, data.A, X_num, X_den, extreme_threshold)


def percentile_bounds(values, strategy: TruncationStrategy) -> tuple[float, float] | None:
    """Lower/upper percentiles by linear interpolation between order statistics.

    For sorted values ``x_(1..n)`` the ``p``-th percentile sits at position
    ``h = (n - 1) p / 100 + 1`` (numpy's default "linear" method), with the
    position computed exactly.
    """
    if strategy.value is None:
        return None
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise WeightError("cannot take percentiles of an empty weight vector")
    return tuple(_linear_percentile(x, p) for p in strategy.value)


def _linear_percentile(x_sorted: np.ndarray, p: float) -> float:
    # Exact rational position, so that e.g. the 90th of 1..100 is 90.1 and
    # not 90.10000000000001.
    pos = Fraction(x_sorted.size - 1) * Fraction(str(p)) / 100
    j = int(pos)
    g = float(pos - j)
    if g == 0.0:
        return float(x_sorted[j])
    return float(x_sorted[j] + g * (x_sorted[j + 1] - x_sorted[j]))


def truncate_weights(table: WeightTable, strategy: TruncationStrategy) -> WeightTable:
    """Clamp the untruncated weights into pooled percentile bounds.

    Always starts from ``table.sw``, so repeated application is idempotent.
    """
    bounds = percentile_bounds(table.sw, strategy)
    if bounds is None:
        return replace(table, sw_truncated=table.sw.copy(), strategy=strategy, bounds=None)
    return replace(table, sw_truncated=np.clip(table.sw, bounds[0], bounds[1]), strategy=strategy, bounds=bounds)
