"""Command-line interface: ``posim {gen,truth,weights,fit,run,curves}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import fnmatch
import itertools
import json
import logging
import os
import re
import sys
from types import SimpleNamespace
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import fit_aalen_msm, fit_logit_msm
from .genmodel_one import StudyOneParams
from .genmodel_two import StudyTwoParams
from .harness import ScenarioConfig, make_scenario, run_study
from .io import (
    FormatError,
    read_curves,
    read_dataset,
    read_truth,
    read_weight_column,
    write_aalen_fit,
    write_curves,
    write_dataset,
    write_failures,
    write_logit_fit,
    write_results,
    write_truth,
    write_weights,
)
from .posviol import PositivityPolicy, Region
from .truth import OracleError, TruthSetOne, TruthSetTwo, compute_truth_two, true_params_one
from .weights import TruncationStrategy, estimate_weights_one, estimate_weights_two, truncate_weights

log = logging.getLogger("posim")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
DEFAULT_SEED = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # accept "-1e9" as a value, not an option
        self._negative_number_matcher = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def resolve_seed(flag: int | None, config_seed: int | None = None) -> int:
    """Flag, then config file, then ``POSIM_SEED``, then the default."""
    if flag is not None:
        return flag
    if config_seed is not None:
        return config_seed
    env = os.environ.get("POSIM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"POSIM_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


# -- config files ----------------------------------------------------------------

_CONFIG_KEYS = {
    "study": int,
    "n": int,
    "pi": float,
    "tau": float,
    "truncation": TruncationStrategy.parse,
    "B": int,
    "seed": int,
    "K": int,
    "truth_file": str,
}
_SCALAR_KEYS = {"study", "B", "seed", "K", "truth_file"}


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` text; grid keys take comma-separated lists.

    Raises ``UsageError`` listing every problem with its line number.
    """
    out: dict = {}
    seen: set[str] = set()
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            errors.append(f"line {lineno}: unknown key {key!r} (allowed: {', '.join(_CONFIG_KEYS)})")
            continue
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        seen.add(key)
        items = [v.strip() for v in value.split(",")]
        if key in _SCALAR_KEYS and len(items) != 1:
            errors.append(f"line {lineno}: {key} takes a single value")
            continue
        if any(not v for v in items):
            errors.append(f"line {lineno}: empty value for {key!r}")
            continue
        try:
            parsed = [_CONFIG_KEYS[key](v) for v in items]
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for {key!r}: {exc}")
            continue
        out[key] = parsed[0] if key in _SCALAR_KEYS else parsed
    for key in ("study", "n", "pi", "tau"):
        if key not in seen:
            errors.append(f"missing required key {key!r}")
    if "study" in out and out["study"] not in (1, 2):
        errors.append("study must be 1 or 2")
    if errors:
        raise UsageError("invalid config:\n  " + "\n  ".join(errors))
    out.setdefault("truncation", [TruncationStrategy.NoWT])
    return out


def build_grid(cfg: dict, B: int, seed: int) -> list[ScenarioConfig]:
    model = {"K": cfg["K"]} if "K" in cfg else {}
    grid = []
    try:
        for n, pi, tau, wt in itertools.product(cfg["n"], cfg["pi"], cfg["tau"], cfg["truncation"]):
            grid.append(make_scenario(cfg["study"], n, pi, tau, wt, B, seed, **model))
    except ValueError as exc:
        raise UsageError(f"invalid scenario: {exc}") from None
    return grid


# -- commands ---------------------------------------------------------------------


def _scenario_from_flags(args) -> ScenarioConfig:
    if args.n < 1:
        raise UsageError("--n must be positive")
    if args.rep < 0:
        raise UsageError("--rep must be non-negative")
    policy = None
    if args.pi is not None:
        if args.tau is None:
            if args.pi != 1.0:
                raise UsageError("--pi below 1 needs --tau")
            # empty poor-health region
            args.tau = 0.0 if args.study == 1 else float("inf")
        region = Region.BELOW_TAU if args.study == 1 else Region.ABOVE_TAU
        try:
            policy = PositivityPolicy(args.pi, args.tau, region)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif args.tau is not None:
        raise UsageError("--tau needs --pi")
    model = {"K": args.K} if args.K is not None else {}
    try:
        params = (StudyOneParams if args.study == 1 else StudyTwoParams)(n=args.n, policy=policy, **model)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return ScenarioConfig(args.study, params, master_seed=resolve_seed(args.seed))


def cmd_gen(args) -> int:
    sc = _scenario_from_flags(args)
    data = sc.generate(args.rep)
    meta = {"seed": sc.master_seed, "rep": args.rep, "pi": sc.pi, "tau": None if sc.params.policy is None else sc.tau}
    write_dataset(args.out, data, meta)
    return EXIT_OK


def cmd_truth(args) -> int:
    if args.study == 1:
        truth = true_params_one()
    else:
        seed = resolve_seed(args.seed)
        if args.n_oracle < 32:
            raise UsageError("--n-oracle must be at least 32")
        truth = compute_truth_two(n_oracle=args.n_oracle, seed=seed)
    write_truth(args.out, truth)
    return EXIT_OK


def cmd_weights(args) -> int:
    data = read_dataset(args.dataset)
    table = estimate_weights_one(data) if data.study == 1 else estimate_weights_two(data)
    table = truncate_weights(table, TruncationStrategy.parse(args.truncation))
    write_weights(args.out, table, {"dataset": str(args.dataset), "fits_converged": table.fits_converged})
    return EXIT_OK


def cmd_fit(args) -> int:
    data = read_dataset(args.dataset)
    table = None
    if args.weights:
        wid, wk, sw = read_weight_column(args.weights)
        if not (np.array_equal(wid, data.id) and np.array_equal(wk, data.k)):
            raise UsageError("weights file rows do not match the dataset")
        table = SimpleNamespace(id=wid, k=wk, sw_truncated=sw)
    meta = {"dataset": str(args.dataset), "weights": str(args.weights) if args.weights else None}
    if data.study == 1:
        write_logit_fit(args.out, fit_logit_msm(data, table), meta)
    else:
        write_aalen_fit(args.out, fit_aalen_msm(data, table), meta)
    return EXIT_OK


def _load_truth(study: int, cfg: dict, config_path: Path, flag: str | None) -> TruthSetOne | TruthSetTwo:
    if study == 1:
        return true_params_one(**({"K": cfg["K"]} if "K" in cfg else {}))
    path = flag or cfg.get("truth_file")
    if path is None:
        raise UsageError(
            "study 2 needs an oracle truth file; create one with `posim truth --study 2 --out truth2.csv` "
            "and pass it with --truth or the 'truth_file' config key"
        )
    path = Path(path)
    if not path.is_absolute() and flag is None:
        path = config_path.parent / path
    if not path.exists():
        raise UsageError(f"truth file {path} not found; run `posim truth --study 2 --out {path}` first")
    truth = read_truth(path)
    if not isinstance(truth, TruthSetTwo):
        raise UsageError(f"{path} holds study-1 truth")
    return truth


def cmd_run(args) -> int:
    config_path = Path(args.config)
    try:
        text = config_path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    cfg = parse_config(text)
    seed = resolve_seed(args.seed, cfg.get("seed"))
    B = args.b if args.b is not None else cfg.get("B", 1000)
    if B < 1:
        raise UsageError("B must be positive")
    if args.jobs < 1:
        raise UsageError("--jobs must be positive")
    grid = build_grid(cfg, B, seed)
    truth = _load_truth(cfg["study"], cfg, config_path, args.truth)
    summaries = run_study(grid, truth, jobs=args.jobs)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results(out / "results.csv", summaries)
    write_curves(out / "curves.csv", summaries)
    write_failures(out / "failures.csv", summaries)
    manifest = {
        "tool": "posim",
        "version": __version__,
        "config_path": str(config_path),
        "config_text": text,
        "master_seed": seed,
        "B": B,
        "truth": None if cfg["study"] == 1 else {
            "n_oracle": truth.n_oracle, "seed": truth.seed, "alpha": list(truth.alpha), "frailty_var": truth.frailty_var
        },
        "scenarios": [
            {
                "id": sc.scenario_id,
                "study": sc.study,
                "n": sc.n,
                "pi": sc.pi,
                "tau": sc.tau,
                "truncation": sc.truncation.label,
                "params": repr(sc.params),
                "data_key": sc.data_key,
            }
            for sc in grid
        ],
        "files": ["results.csv", "curves.csv", "failures.csv"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# -- curves ----------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf")
_TRUTH_COLOR = "#ff7f0e"


def _select(rows, patterns):
    ids = list(dict.fromkeys(r["scenario"] for r in rows))
    chosen = [i for i in ids if any(fnmatch.fnmatchcase(i, p) for p in patterns)]
    unknown = [p for p in patterns if not any(fnmatch.fnmatchcase(i, p) for i in ids)]
    if unknown:
        raise UsageError(f"unknown scenario id(s): {', '.join(unknown)}")
    return chosen


def render_svg(series: list[dict], truth: dict, width: int = 640, height: int = 420) -> str:
    """Single-panel line chart of survival against time.

    ``series`` entries carry ``label``, ``regime``, ``t`` and ``s``; the
    always-treated regime is drawn solid and the never-treated regime dashed.
    """
    left, right, top, bottom = 60, 170, 20, 50
    pw, ph = width - left - right, height - top - bottom
    all_t = [t for s in series for t in s["t"]] + [t for c in truth.values() for t in c["t"]]
    all_s = [v for s in series for v in s["s"]] + [v for c in truth.values() for v in c["s"]]
    t_max = max(all_t) if all_t else 1.0
    finite = [v for v in all_s if np.isfinite(v)]
    y_lo = min(0.0, float(np.floor(min(finite) * 10) / 10)) if finite else 0.0
    y_hi = max(1.0, float(np.ceil(max(finite) * 10) / 10)) if finite else 1.0

    def x(t):
        return left + pw * t / t_max

    def y(v):
        return top + ph * (y_hi - v) / (y_hi - y_lo)

    def path(ts, vs):
        pts = [f"{x(t):.2f},{y(v):.2f}" for t, v in zip(ts, vs) if np.isfinite(v)]
        return " ".join(pts)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(6):
        v = y_lo + (y_hi - y_lo) * i / 5
        out.append(f'<text x="{left - 8}" y="{y(v) + 4:.2f}" font-size="11" text-anchor="end">{v:.2f}</text>')
    step = max(1, int(round(t_max / 8)))
    for t in range(0, int(t_max) + 1, step):
        out.append(f'<text x="{x(t):.2f}" y="{top + ph + 16}" font-size="11" text-anchor="middle">{t}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 12}" font-size="12" text-anchor="middle">time</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.2f})">survival</text>'
    )
    legend_y = top + 10
    labels = list(dict.fromkeys(s["label"] for s in series))
    for s in series:
        color = _PALETTE[labels.index(s["label"]) % len(_PALETTE)]
        dash = "" if s["regime"] == "always" else ' stroke-dasharray="6,4"'
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{path(s["t"], s["s"])}"/>')
    for regime, c in truth.items():
        dash = "" if regime == "always" else ' stroke-dasharray="6,4"'
        out.append(f'<polyline fill="none" stroke="{_TRUTH_COLOR}" stroke-width="2"{dash} points="{path(c["t"], c["s"])}"/>')
    for i, label in enumerate(labels + ["truth"]):
        color = _TRUTH_COLOR if label == "truth" else _PALETTE[i % len(_PALETTE)]
        ly = legend_y + 16 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 36}" y="{ly + 4}" font-size="11">{label}</text>')
    ly = legend_y + 16 * (len(labels) + 1)
    out.append(f'<text x="{left + pw + 12}" y="{ly + 4}" font-size="10">solid: always, dashed: never</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_curves(args) -> int:
    results = Path(args.results)
    curves_path = results / "curves.csv" if results.is_dir() else results
    rows = read_curves(curves_path)
    chosen = _select(rows, args.scenario)
    picked = [r for r in rows if r["scenario"] in chosen]
    if args.format == "table":
        from .io import write_table

        write_table(
            args.out,
            "curve-table",
            ["scenario", "tau", "regime", "t", "mean_survival", "true_survival"],
            ([r["scenario"], r["tau"], r["regime"], r["t"], r["mean_survival"], r["true_survival"]] for r in picked),
        )
        return EXIT_OK
    series, truth = [], {}
    for sid in chosen:
        for regime in ("always", "never"):
            sel = [r for r in picked if r["scenario"] == sid and r["regime"] == regime]
            ts = [float(r["t"]) for r in sel]
            tau = sel[0]["tau"]
            series.append({"label": f"tau={float(tau):g}" if tau != "NA" else sid, "regime": regime, "t": ts,
                           "s": [float(r["mean_survival"]) if r["mean_survival"] != "NA" else np.nan for r in sel]})
            truth.setdefault(regime, {"t": ts, "s": [float(r["true_survival"]) for r in sel]})
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(render_svg(series, truth))
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="posim", description="Positivity-violation simulation studies for marginal structural models.")
    p.add_argument("--version", action="version", version=f"posim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="simulate one dataset")
    g.add_argument("--study", type=int, choices=(1, 2), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--pi", type=float, help="exposure cut-off; omit for the benchmark mechanism")
    g.add_argument("--tau", type=float)
    g.add_argument("--K", type=int)
    g.add_argument("--rep", type=int, default=0)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("truth", help="true estimand values")
    t.add_argument("--study", type=int, choices=(1, 2), required=True)
    t.add_argument("--n-oracle", type=int, default=100_000)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_truth)

    w = sub.add_parser("weights", help="stabilized weights for a dataset file")
    w.add_argument("dataset")
    w.add_argument("--truncation", default="NoWT")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_weights)

    f = sub.add_parser("fit", help="fit the study's MSM to a dataset file")
    f.add_argument("dataset")
    f.add_argument("--weights", help="weights file; unweighted fit if omitted")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("run", help="run a scenario grid from a config file")
    r.add_argument("config")
    r.add_argument("--b", type=int, help="replications per scenario (overrides the config)")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int)
    r.add_argument("--truth", help="study-2 truth file (overrides the config)")
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("curves", help="mean survival curves from a run")
    c.add_argument("results", help="run output directory or its curves.csv")
    c.add_argument("--scenario", action="append", required=True, help="scenario id or glob; repeatable")
    c.add_argument("--format", choices=("table", "svg"), default="table")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_curves)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"posim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OracleError, FormatError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"posim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
