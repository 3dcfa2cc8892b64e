"""Factorial Monte Carlo studies: generate, weight, truncate, fit, summarize."""
from __future__ import annotations

import hashlib
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import GForm, fit_aalen_msm, fit_logit_msm, regime, survival_aalen, survival_logit_curve
from .genmodel_one import StudyOneParams, simulate_dataset_one
from .genmodel_two import StudyTwoParams, simulate_dataset_two
from .posviol import PositivityPolicy, Region
from .truth import TruthSetOne, TruthSetTwo, coefficient_estimand_names
from .weights import TruncationStrategy, estimate_weights_one, estimate_weights_two, truncate_weights

log = logging.getLogger(__name__)

GRID_N = (50, 100, 250, 500, 1000)
GRID_PI = (0.05, 0.1, 0.3, 0.5, 0.8, 1.0)
GRID_TAU_ONE = (0.0, 100.0, 200.0, 300.0, 400.0, 500.0)
GRID_TAU_TWO = (1.0, 1.5, 2.0, 3.0, 7.0, 10.0)
GRID_WT = (TruncationStrategy.NoWT, TruncationStrategy.P1_99, TruncationStrategy.P5_95, TruncationStrategy.P10_90)


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the scenario grid.

    The data-generating part (``study`` and ``params``) determines the random
    streams; scenarios that differ only in truncation reuse identical datasets.
    """

    study: int
    params: StudyOneParams | StudyTwoParams
    truncation: TruncationStrategy = TruncationStrategy.NoWT
    B: int = 1000
    master_seed: int = 1

    def __post_init__(self):
        expected = StudyOneParams if self.study == 1 else StudyTwoParams
        if self.study not in (1, 2) or not isinstance(self.params, expected):
            raise ValueError("study must be 1 or 2 with matching parameter type")
        if self.B < 1:
            raise ValueError("B must be positive")

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def pi(self) -> float:
        return 1.0 if self.params.policy is None else self.params.policy.pi

    @property
    def tau(self) -> float:
        return math.nan if self.params.policy is None else self.params.policy.tau

    @property
    def data_key(self) -> int:
        digest = hashlib.blake2b(f"{self.study}|{self.params!r}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")

    @property
    def scenario_id(self) -> str:
        tau = "bench" if self.params.policy is None else f"{self.tau:g}"
        return f"S{self.study}_n{self.n}_pi{self.pi:g}_tau{tau}_{self.truncation.label}"

    def generate(self, b: int):
        """Dataset of replication ``b``; bit-identical on every call."""
        sim = simulate_dataset_one if self.study == 1 else simulate_dataset_two
        return sim(self.params, b, self.master_seed, self.data_key)


def make_scenario(study: int, n: int, pi: float, tau: float, truncation=TruncationStrategy.NoWT, B: int = 1000, master_seed: int = 1, **model) -> ScenarioConfig:
    if study == 1:
        params = StudyOneParams(n=n, policy=PositivityPolicy(pi, tau, Region.BELOW_TAU), **model)
    else:
        params = StudyTwoParams(n=n, policy=PositivityPolicy(pi, tau, Region.ABOVE_TAU), **model)
    return ScenarioConfig(study, params, truncation, B, master_seed)


def default_grid(study: int, B: int = 1000, master_seed: int = 1) -> list[ScenarioConfig]:
    taus = GRID_TAU_ONE if study == 1 else GRID_TAU_TWO
    return [
        make_scenario(study, n, pi, tau, wt, B, master_seed)
        for n, pi, tau, wt in itertools.product(GRID_N, GRID_PI, taus, GRID_WT)
    ]


# -- performance measures ---------------------------------------------------


def _finite(estimates):
    x = np.asarray(estimates, dtype=float)
    return x[np.isfinite(x)]


def bias(estimates, truth: float) -> float:
    x = _finite(estimates)
    if x.size == 0:
        return math.nan
    return float(np.mean(x) - truth)


def emp_se(estimates) -> float:
    x = _finite(estimates)
    if x.size < 2:
        return math.nan
    return float(np.std(x, ddof=1))


def rmse(estimates, truth: float) -> float:
    x = _finite(estimates)
    if x.size == 0:
        return math.nan
    return float(np.sqrt(np.mean((x - truth) ** 2)))


@dataclass
class EstimandSummary:
    estimand: str
    truth: float
    mean: float
    bias: float
    emp_se: float
    rmse: float
    mcse_bias: float
    n_ok: int
    n_nonfinite: int


@dataclass
class PerformanceSummary:
    scenario: ScenarioConfig
    n_success: int
    n_failed: int
    failure_reasons: dict[str, int]
    estimands: list[EstimandSummary]
    curves: dict[str, np.ndarray]
    true_curves: dict[str, np.ndarray]
    estimates: np.ndarray
    estimand_names: list[str]
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, name: str) -> EstimandSummary:
        for e in self.estimands:
            if e.estimand == name:
                return e
        raise KeyError(name)


def summarize(estimates: np.ndarray, names: list[str], truth: dict[str, float]) -> list[EstimandSummary]:
    out = []
    for j, name in enumerate(names):
        col = estimates[:, j] if estimates.size else np.zeros(0)
        x = _finite(col)
        se = emp_se(x)
        out.append(
            EstimandSummary(
                estimand=name,
                truth=truth[name],
                mean=float(np.mean(x)) if x.size else math.nan,
                bias=bias(x, truth[name]),
                emp_se=se,
                rmse=rmse(x, truth[name]),
                mcse_bias=se / math.sqrt(x.size) if x.size >= 2 else math.nan,
                n_ok=int(x.size),
                n_nonfinite=int(col.size - x.size),
            )
        )
    return out


# -- one replication ----------------------------------------------------------


class ReplicationFailure(RuntimeError):
    pass


def estimand_names(study: int, K: int) -> list[str]:
    if study == 1:
        names = ["gamma0", "gammaA1", "gammaA2", "gammaA3"]
    else:
        names = list(coefficient_estimand_names(K))
    for reg in ("always", "never"):
        names += [f"S_{reg}({t})" for t in range(1, K + 2)]
    return names


def _estimates_one(data, table, K):
    fit = fit_logit_msm(data, table, GForm.HavercroftD1AD3)
    if not fit.converged:
        raise ReplicationFailure("MSM fit did not converge")
    vals = list(fit.gamma_hat)
    for reg in ("always", "never"):
        vals += list(survival_logit_curve(fit.gamma_hat, GForm.HavercroftD1AD3, regime(reg, K), K + 1)[1:])
    return np.array(vals), {}


def _estimates_two(data, table, K):
    fit = fit_aalen_msm(data, table)
    grid = fit.cumulative(np.arange(K + 2, dtype=float))
    vals = [grid[t, c] for t, c in coefficient_estimand_names(K).values()]
    increasing = 0
    for reg in ("always", "never"):
        curve = np.array([survival_aalen(fit, regime(reg, K), t) for t in range(1, K + 2)])
        increasing += int(np.any(np.diff(np.concatenate([[1.0], curve])) > 0))
        vals += list(curve)
    return np.array(vals), {"unidentified_events": fit.unidentified_events(), "increasing_survival": increasing}


def run_replication(scenario: ScenarioConfig, truncations, b: int):
    """Estimates for each truncation strategy on dataset ``b``.

    Returns ``{label: (estimates, diagnostics)}`` with a string reason in
    place of the tuple for failed fits.  Never raises for numerical failures.
    """
    data = scenario.generate(b)
    K = scenario.params.K
    out: dict = {}
    try:
        if scenario.study == 1:
            table = estimate_weights_one(data, scenario.params.kappa)
        else:
            table = estimate_weights_two(data)
        if not table.fits_converged:
            raise ReplicationFailure("weight model did not converge")
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, ReplicationFailure) as exc:
        reason = f"weights: {type(exc).__name__}"
        return {wt.label: reason for wt in truncations}
    base_diag = {"extreme_weights": int(np.count_nonzero(table.extreme)), "max_sw": float(np.max(table.sw))}
    if scenario.study == 2:
        base_diag["nonpositive_hazard"] = data.diagnostics.get("nonpositive_hazard", 0)
    for wt in truncations:
        try:
            est = _estimates_one if scenario.study == 1 else _estimates_two
            vals, diag = est(data, truncate_weights(table, wt), K)
            out[wt.label] = (vals, {**base_diag, **diag})
        except (ValueError, ArithmeticError, np.linalg.LinAlgError, ReplicationFailure) as exc:
            out[wt.label] = f"msm: {type(exc).__name__}"
    return out


def _run_chunk(task):
    scenario, truncations, reps = task
    return [(b, run_replication(scenario, truncations, b)) for b in reps]


# -- whole study -------------------------------------------------------------


def _truth_for(truth, study):
    if isinstance(truth, dict):
        return truth[study]
    return truth


def true_values(study: int, truth) -> tuple[dict[str, float], dict[str, np.ndarray]]:
    if study == 1 and not isinstance(truth, TruthSetOne):
        raise TypeError("study I needs a TruthSetOne")
    if study == 2 and not isinstance(truth, TruthSetTwo):
        raise TypeError("study II needs a TruthSetTwo")
    return truth.estimands(), truth.survival


def run_study(grid: list[ScenarioConfig], truth, jobs: int = 1, chunk_size: int = 25) -> list[PerformanceSummary]:
    """Run every scenario of ``grid`` and summarize.

    Replications are independent and addressed by ``(scenario data key, b)``,
    so the output does not depend on ``jobs`` or on chunking.  Failed
    replications are excluded and counted per scenario.
    """
    groups: dict[tuple, list[ScenarioConfig]] = {}
    for sc in grid:
        groups.setdefault((sc.study, sc.params, sc.B, sc.master_seed), []).append(sc)

    tasks, owners = [], []
    for gkey, members in groups.items():
        lead = members[0]
        truncs = list(dict.fromkeys(m.truncation for m in members))
        for start in range(0, lead.B, chunk_size):
            tasks.append((lead, truncs, list(range(start, min(lead.B, start + chunk_size)))))
            owners.append(gkey)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_chunk, tasks))
    else:
        chunks = [_run_chunk(t) for t in tasks]

    per_group: dict[tuple, list] = {g: [] for g in groups}
    for gkey, chunk in zip(owners, chunks):
        per_group[gkey].extend(chunk)

    summaries = []
    for gkey, members in groups.items():
        reps = sorted(per_group[gkey], key=lambda item: item[0])
        for sc in members:
            summaries.append(_summarize_scenario(sc, reps, _truth_for(truth, sc.study)))
    order = {id(sc): i for i, sc in enumerate(grid)}
    summaries.sort(key=lambda s: order.get(id(s.scenario), 0))
    return summaries


def _summarize_scenario(sc: ScenarioConfig, reps, truth) -> PerformanceSummary:
    K = sc.params.K
    names = estimand_names(sc.study, K)
    true_map, true_curves = true_values(sc.study, truth)
    rows, reasons, diags = [], {}, []
    for _, result in reps:
        r = result[sc.truncation.label]
        if isinstance(r, str):
            reasons[r] = reasons.get(r, 0) + 1
        else:
            rows.append(r[0])
            diags.append(r[1])
    est = np.vstack(rows) if rows else np.zeros((0, len(names)))
    summary = summarize(est, names, true_map)
    curves = {}
    for reg in ("always", "never"):
        cols = [names.index(f"S_{reg}({t})") for t in range(1, K + 2)]
        mean = np.array([np.mean(_finite(est[:, c])) if est.size else math.nan for c in cols])
        curves[reg] = np.concatenate([[1.0], mean])
    diag_summary = {}
    if diags:
        for key in diags[0]:
            diag_summary[f"median_{key}"] = float(np.median([d[key] for d in diags]))
    return PerformanceSummary(
        scenario=sc,
        n_success=len(rows),
        n_failed=sum(reasons.values()),
        failure_reasons=reasons,
        estimands=summary,
        curves=curves,
        true_curves={k: np.asarray(v) for k, v in true_curves.items()},
        estimates=est,
        estimand_names=names,
        diagnostics=diag_summary,
    )
