"""True estimand values: closed form for study I, intervened-simulation oracle for study II."""
from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass, field

import numpy as np

from .data import LongDataset
from .estimators import CumulativeGrid, GForm, fit_aalen_msm, regime, survival_aalen, survival_logit_curve
from .genmodel_one import DEFAULT_GAMMA
from .genmodel_two import DEFAULT_ALPHA, StudyTwoParams, simulate_dataset_two

CANONICAL_TAU_GRID_TWO = (1.0, 1.5, 2.0, 3.0, 7.0, 10.0)
TAU_PERCENTILES = (80.0, 90.0, 95.0, 99.0, 100.0)


class OracleError(RuntimeError):
    pass


def _stream_tag(text: str) -> int:
    return zlib.crc32(text.encode())


@dataclass
class TruthSetOne:
    gamma_true: tuple[float, ...]
    K: int
    times: np.ndarray
    survival: dict[str, np.ndarray]

    def estimands(self) -> dict[str, float]:
        out = dict(zip(("gamma0", "gammaA1", "gammaA2", "gammaA3"), self.gamma_true))
        for name, curve in self.survival.items():
            for t in self.times[1:]:
                out[f"S_{name}({int(t)})"] = float(curve[int(t)])
        return out


def true_params_one(K: int = 40, gamma=DEFAULT_GAMMA) -> TruthSetOne:
    """Logit-MSM truth; the marginal parameters coincide with the conditional ones."""
    gamma = tuple(float(g) for g in gamma)
    curves = {
        name: survival_logit_curve(gamma, GForm.HavercroftD1AD3, regime(name, K), K + 1) for name in ("always", "never")
    }
    return TruthSetOne(gamma_true=gamma, K=K, times=np.arange(K + 2, dtype=float), survival=curves)


@dataclass
class TruthSetTwo:
    """Oracle cumulative coefficients on the grid ``t = 0..K+1`` plus survival curves.

    ``coefficients.values[t, c]`` is ``C_0(t)`` for ``c = 0`` and ``C_A(c-1)(t)``
    otherwise; ``se`` holds the oracle's own Monte Carlo standard errors.
    """

    K: int
    alpha: tuple[float, ...]
    frailty_var: float
    n_oracle: int
    seed: int
    coefficients: CumulativeGrid
    se: np.ndarray
    survival: dict[str, np.ndarray]
    empirical_survival: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.K + 2, dtype=float)

    def estimands(self) -> dict[str, float]:
        return estimands_two(self.coefficients.values, self.survival, self.K)

    def estimand_se(self) -> dict[str, float]:
        names = coefficient_estimand_names(self.K)
        return {name: float(self.se[t, c]) for name, (t, c) in names.items()}


def coefficient_estimand_names(K: int) -> dict[str, tuple[int, int]]:
    """Map ``"C0(t)"`` / ``"CAj(t)"`` to ``(t, column)`` for defined grid points."""
    out = {}
    for t in range(1, K + 2):
        out[f"C0({t})"] = (t, 0)
    for j in range(K + 1):
        for t in range(j + 1, K + 2):
            out[f"CA{j}({t})"] = (t, j + 1)
    return out


def estimands_two(values: np.ndarray, survival: dict[str, np.ndarray], K: int) -> dict[str, float]:
    out = {name: float(values[t, c]) for name, (t, c) in coefficient_estimand_names(K).items()}
    for name, curve in survival.items():
        for t in range(1, K + 2):
            out[f"S_{name}({t})"] = float(curve[t])
    return out


def concat_datasets(parts: list[LongDataset]) -> LongDataset:
    """Stack datasets, renumbering subject ids so they stay unique."""
    offset = 0
    cols: dict[str, list] = {name: [] for name in ("id", "k", "A", "L", "k_star", "Y_next", "forced", "U", "T")}
    for d in parts:
        for name in cols:
            v = getattr(d, name)
            cols[name].append(v + offset if name == "id" else v)
        offset += d.n
    stacked = {name: np.concatenate(v) for name, v in cols.items()}
    return LongDataset(study=parts[0].study, n=offset, K=parts[0].K, **stacked)


def all_regimes(K: int) -> list[tuple[int, ...]]:
    return [tuple(r) for r in itertools.product((0, 1), repeat=K + 1)]


def empirical_survival(data: LongDataset, times) -> np.ndarray:
    """Fraction of subjects without an event by time ``t`` (censored subjects survive)."""
    first = data.k == 0
    T = data.T[first]
    failed = np.zeros(data.n, dtype=bool)
    failed[data.id[data.Y_next == 1]] = True
    return np.array([np.mean(~failed | (T > t)) for t in times])


def compute_truth_two(
    n_oracle: int = 100_000,
    seed: int = 2024,
    K: int = 4,
    alpha=DEFAULT_ALPHA,
    frailty_var: float = 0.1,
    tolerance: float = 0.01,
) -> TruthSetTwo:
    """Simulation oracle for the additive MSM.

    ``n_oracle`` subjects are split equally over all ``2**(K+1)`` fixed
    regimes, simulated under intervention (so treatment is unconfounded), pooled
    and fitted by the unweighted Aalen estimator.  Survival under always/never
    treatment is then computed from the fitted coefficients and checked against
    the empirical survival of two further intervened samples of ``n_oracle``
    subjects each.

    Raises
    ------
    OracleError
        If the two survival routes disagree by more than ``tolerance``.
    """
    alpha = tuple(float(a) for a in alpha)
    regimes = all_regimes(K)
    per = -(-n_oracle // len(regimes))
    pooled_key = _stream_tag("oracle-pooled")
    parts = [
        simulate_dataset_two(
            StudyTwoParams(n=per, K=K, alpha=alpha, frailty_var=frailty_var, intervention=r), idx, seed, pooled_key
        )
        for idx, r in enumerate(regimes)
    ]
    fit = fit_aalen_msm(concat_datasets(parts))
    grid_t = np.arange(K + 2, dtype=float)
    values = fit.cumulative(grid_t)
    se = fit.optional_variation_se(grid_t)
    grid = CumulativeGrid(K=K, values=values)

    survival, emp = {}, {}
    for name in ("always", "never"):
        a = regime(name, K)
        survival[name] = np.array([survival_aalen(grid, a, t) for t in grid_t])
        sample = simulate_dataset_two(
            StudyTwoParams(n=n_oracle, K=K, alpha=alpha, frailty_var=frailty_var, intervention=tuple(int(x) for x in a)),
            0,
            seed,
            _stream_tag(f"oracle-{name}"),
        )
        emp[name] = empirical_survival(sample, grid_t)
        gap = np.max(np.abs(emp[name] - survival[name]))
        if gap > tolerance:
            raise OracleError(
                f"oracle survival check failed for {name}: plug-in {survival[name].round(4).tolist()} "
                f"vs empirical {emp[name].round(4).tolist()} (max gap {gap:.4f} > {tolerance})"
            )
    return TruthSetTwo(
        K=K,
        alpha=alpha,
        frailty_var=frailty_var,
        n_oracle=n_oracle,
        seed=seed,
        coefficients=grid,
        se=se,
        survival=survival,
        empirical_survival=emp,
    )


def derive_tau_grid_two(n: int = 100_000, seed: int = 2024, **params) -> dict:
    """Percentiles of the pooled biomarker history under the no-violation mechanism.

    The canonical grid is fixed; the computed percentiles are returned so callers
    can check that the grid matches them after rounding.
    """
    data = simulate_dataset_two(StudyTwoParams(n=n, **params), 0, seed, _stream_tag("tau-grid"))
    q = np.percentile(data.L, TAU_PERCENTILES)
    return {
        "canonical": list(CANONICAL_TAU_GRID_TWO),
        "percentiles": dict(zip(TAU_PERCENTILES, (float(x) for x in q))),
    }
