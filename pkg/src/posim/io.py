"""Versioned delimited files for datasets, weights, fits, truth and results.

Every file starts with ``# posim-<kind> v<version>`` and a JSON metadata
comment, followed by a CSV header and rows.  Floats use the shortest
round-trip representation, so values read back are bit-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .data import LongDataset
from .estimators import AalenMsmFit, CumulativeGrid, LogitMsmFit
from .truth import TruthSetOne, TruthSetTwo, coefficient_estimand_names, true_params_one
from .weights import WeightTable

FORMAT_VERSION = 1
MISSING = "NA"


class FormatError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return MISSING
    return repr(x)


def parse_float(s: str) -> float:
    return math.nan if s == MISSING else float(s)


def parse_bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise FormatError(f"expected true/false, got {s!r}")
    return s == "true"


def write_table(path, kind: str, header: list[str], rows, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# posim-{kind} v{FORMAT_VERSION}\n")
        fh.write("# " + json.dumps(meta or {}, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_table(path, kind: str) -> tuple[dict, list[str], list[list[str]]]:
    """Return ``(meta, header, rows)``; rows are raw strings."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        expected = f"# posim-{kind} v"
        if not first.startswith(expected):
            raise FormatError(f"{path}: not a posim {kind} file (first line {first!r})")
        version = first[len(expected):]
        if version != str(FORMAT_VERSION):
            raise FormatError(f"{path}: unsupported {kind} format version {version!r}")
        second = fh.readline()
        if not second.startswith("# "):
            raise FormatError(f"{path}: missing metadata line")
        meta = json.loads(second[2:])
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return meta, header, rows


def _columns(header, rows) -> dict[str, list[str]]:
    return {name: [r[j] for r in rows] for j, name in enumerate(header)}


# -- datasets ---------------------------------------------------------------


def write_dataset(path, data: LongDataset, meta: dict | None = None) -> None:
    names = data.columns
    cols = [getattr(data, c) for c in names]
    bool_cols = {"forced"}
    rows = (
        [("true" if v else "false") if name in bool_cols else v for name, v in zip(names, vals)]
        for vals in zip(*(c.tolist() for c in cols))
    )
    info = {"study": data.study, "n": data.n, "K": data.K, **(meta or {})}
    write_table(path, "dataset", names, rows, info)


def read_dataset(path) -> LongDataset:
    meta, header, rows = read_table(path, "dataset")
    cols = _columns(header, rows)
    ints = {"id", "k", "A", "k_star", "Y_next"}
    out = {}
    for name, vals in cols.items():
        if name in ints:
            out[name] = np.array([int(v) for v in vals], dtype=np.int64)
        elif name == "forced":
            out[name] = np.array([parse_bool(v) for v in vals], dtype=bool)
        else:
            out[name] = np.array([parse_float(v) for v in vals], dtype=float)
    return LongDataset(study=meta["study"], n=meta["n"], K=meta["K"], **out)


# -- weights and fits ---------------------------------------------------------


def write_weights(path, table: WeightTable, meta: dict | None = None) -> None:
    header = ["id", "k", "numerator_prob", "denominator_prob", "sw", "sw_truncated", "extreme"]
    cols = [table.id, table.k, table.numerator_prob, table.denominator_prob, table.sw, table.sw_truncated, table.extreme]
    info = {"truncation": table.strategy.label, "bounds": list(table.bounds) if table.bounds else None, **(meta or {})}
    write_table(path, "weights", header, zip(*(c.tolist() for c in cols)), info)


def read_weight_column(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(id, k, sw_truncated)`` from a weights file."""
    _, header, rows = read_table(path, "weights")
    cols = _columns(header, rows)
    return (
        np.array([int(v) for v in cols["id"]]),
        np.array([int(v) for v in cols["k"]]),
        np.array([parse_float(v) for v in cols["sw_truncated"]]),
    )


def write_logit_fit(path, fit: LogitMsmFit, meta: dict | None = None) -> None:
    info = {
        "model": "logit",
        "gform": fit.gform.name,
        "converged": fit.converged,
        "iterations": fit.fit.iterations,
        "separation_flag": fit.fit.separation_flag,
        **(meta or {}),
    }
    write_table(path, "fit", ["coefficient", "estimate"], zip(fit.names, fit.gamma_hat.tolist()), info)


def write_aalen_fit(path, fit: AalenMsmFit, meta: dict | None = None) -> None:
    cum = np.cumsum(fit.increments, axis=0)
    names = fit.names
    rows = []
    for e, t in enumerate(fit.event_times.tolist()):
        for c, name in enumerate(names):
            rows.append((t, name, fit.increments[e, c], cum[e, c], bool(fit.active[e, c]), int(fit.n_at_risk[e])))
    info = {"model": "aalen", "K": fit.K, "unidentified_events": fit.unidentified_events(), **(meta or {})}
    write_table(path, "fit", ["event_time", "coefficient", "increment", "cumulative", "active", "n_at_risk"], rows, info)


def read_fit(path) -> tuple[dict, dict[str, list[str]]]:
    meta, header, rows = read_table(path, "fit")
    return meta, _columns(header, rows)


# -- truth ------------------------------------------------------------------


def write_truth(path, truth: TruthSetOne | TruthSetTwo) -> None:
    if isinstance(truth, TruthSetOne):
        meta = {"study": 1, "K": truth.K}
        rows = [(name, value, MISSING) for name, value in truth.estimands().items()]
    else:
        meta = {
            "study": 2,
            "K": truth.K,
            "n_oracle": truth.n_oracle,
            "seed": truth.seed,
            "alpha": list(truth.alpha),
            "frailty_var": truth.frailty_var,
        }
        se = truth.estimand_se()
        rows = [(name, value, se.get(name, math.nan)) for name, value in truth.estimands().items()]
        for reg, curve in truth.empirical_survival.items():
            rows += [(f"Sempirical_{reg}({t})", curve[t], MISSING) for t in range(1, truth.K + 2)]
    write_table(path, "truth", ["estimand", "value", "oracle_se"], rows, meta)


def read_truth(path) -> TruthSetOne | TruthSetTwo:
    meta, header, rows = read_table(path, "truth")
    values = {r[0]: parse_float(r[1]) for r in rows}
    ses = {r[0]: parse_float(r[2]) for r in rows}
    K = int(meta["K"])
    if meta["study"] == 1:
        gamma = tuple(values[n] for n in ("gamma0", "gammaA1", "gammaA2", "gammaA3"))
        return true_params_one(K, gamma)
    grid = np.zeros((K + 2, K + 2))
    se = np.zeros((K + 2, K + 2))
    for name, (t, c) in coefficient_estimand_names(K).items():
        grid[t, c] = values[name]
        se[t, c] = ses[name]

    def curve(prefix):
        return np.array([1.0] + [values[f"{prefix}({t})"] for t in range(1, K + 2)])

    return TruthSetTwo(
        K=K,
        alpha=tuple(meta["alpha"]),
        frailty_var=meta["frailty_var"],
        n_oracle=meta["n_oracle"],
        seed=meta["seed"],
        coefficients=CumulativeGrid(K=K, values=grid),
        se=se,
        survival={reg: curve(f"S_{reg}") for reg in ("always", "never")},
        empirical_survival={
            reg: curve(f"Sempirical_{reg}") for reg in ("always", "never") if f"Sempirical_{reg}(1)" in values
        },
    )


def truth_cache_path(cache_dir, n_oracle: int, seed: int, alpha, frailty_var: float = 0.1, K: int = 4) -> Path:
    key = json.dumps([n_oracle, seed, [float(a) for a in alpha], float(frailty_var), K])
    digest = hashlib.blake2b(key.encode(), digest_size=6).hexdigest()
    return Path(cache_dir) / f"truth2_n{n_oracle}_seed{seed}_{digest}.csv"


def cached_truth_two(cache_dir, n_oracle: int = 100_000, seed: int = 2024, **kw) -> TruthSetTwo:
    """Load the oracle from ``cache_dir`` or compute and store it."""
    from .truth import compute_truth_two

    alpha = kw.get("alpha")
    if alpha is None:
        from .genmodel_two import DEFAULT_ALPHA

        alpha = DEFAULT_ALPHA
        kw["alpha"] = alpha
    path = truth_cache_path(cache_dir, n_oracle, seed, alpha, kw.get("frailty_var", 0.1), kw.get("K", 4))
    if path.exists():
        return read_truth(path)
    truth = compute_truth_two(n_oracle=n_oracle, seed=seed, **kw)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    write_truth(tmp, truth)
    os.replace(tmp, path)
    return read_truth(path)


# -- study results -------------------------------------------------------------

RESULT_HEADER = [
    "scenario",
    "study",
    "n",
    "pi",
    "tau",
    "truncation",
    "B",
    "estimand",
    "truth",
    "mean",
    "bias",
    "emp_se",
    "rmse",
    "mcse_bias",
    "n_ok",
    "n_failed",
    "n_nonfinite",
]


def write_results(path, summaries, meta: dict | None = None) -> None:
    rows = []
    for s in summaries:
        sc = s.scenario
        for e in s.estimands:
            rows.append(
                (
                    sc.scenario_id,
                    sc.study,
                    sc.n,
                    float(sc.pi),
                    float(sc.tau),
                    sc.truncation.label,
                    sc.B,
                    e.estimand,
                    e.truth,
                    e.mean,
                    e.bias,
                    e.emp_se,
                    e.rmse,
                    e.mcse_bias,
                    e.n_ok,
                    s.n_failed,
                    e.n_nonfinite,
                )
            )
    write_table(path, "results", RESULT_HEADER, rows, meta)


def write_curves(path, summaries, meta: dict | None = None) -> None:
    rows = []
    for s in summaries:
        for reg in ("always", "never"):
            mean, true = s.curves[reg], s.true_curves[reg]
            for t in range(mean.size):
                rows.append((s.scenario.scenario_id, float(s.scenario.tau), reg, t, mean[t], true[t]))
    write_table(path, "curves", ["scenario", "tau", "regime", "t", "mean_survival", "true_survival"], rows, meta)


def write_failures(path, summaries) -> None:
    rows = []
    for s in summaries:
        for reason, count in sorted(s.failure_reasons.items()):
            rows.append((s.scenario.scenario_id, reason, count))
    write_table(path, "failures", ["scenario", "reason", "count"], rows)


def read_results(path) -> list[dict]:
    _, header, rows = read_table(path, "results")
    return [dict(zip(header, r)) for r in rows]


def read_curves(path) -> list[dict]:
    _, header, rows = read_table(path, "curves")
    return [dict(zip(header, r)) for r in rows]
