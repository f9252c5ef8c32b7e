"""Configuration-driven runner: ``dgnse run --config cfg.json [--override key=value ...]``.

Writes ``report.json`` and ``tables.csv`` into the configured output
directory. Exit codes: 0 all checks passed, 1 a check failed, 2 invalid
configuration, 3 Newton did not converge, 4 singular linear system.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .cases import CASE_NAMES, builtin_case
from .gronwall import soundness_suite
from .mesh import build_structured
from .spaces import MixedSpace, infsup_constant
from .solver import NewtonConfig, NonConvergenceError, SingularSystemError
from .study import best_approx_ratios, dual_stability_study, eoc, primal_run
from .timeslab import GridAssumptionError, TimeGrid

SCHEMA_VERSION = "1.0"
STUDIES = ("single", "spatial", "temporal", "best-approx", "dual-stability", "gronwall")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_SINGULAR = 0, 1, 2, 3, 4

DEFAULTS = {
    "study": "single",
    "case": "taylor-vortex-box",
    "q": 0,
    "n": 8,
    "M": 8,
    "nu": 1.0,
    "T": 1.0,
    "newton": {},
    "output": "out",
    "seed": 42,
    "instances": 10000,
    "parallel": 1,
    "thresholds": {},
}

# default acceptance thresholds per study
THRESHOLDS = {
    "energy_residual": 1e-8,
    "divergence": 1e-10,
    "spatial_eoc_LinfL2": 1.9,
    "spatial_eoc_L2L2": 1.9,
    "spatial_eoc_L2H1": 0.9,
    "temporal_eoc_q0": [0.85, 1.15],
    "temporal_eoc_q1": 1.7,
    "best_approx_spread": 2.5,
    "dual_spread": 2.0,
}

log = logging.getLogger("dgnse")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, item: str) -> None:
    """Apply ``key=value`` (dotted keys reach nested dicts; values parsed as JSON)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = _parse_value(value)


def _levels(cfg: dict) -> list[tuple[int, int]]:
    if "levels" in cfg:
        return [(int(a), int(b)) for a, b in cfg["levels"]]
    n, M = cfg["n"], cfg["M"]
    if isinstance(n, list) and isinstance(M, list):
        if len(n) != len(M):
            raise ConfigError("lists n and M must have equal length")
        return list(zip(map(int, n), map(int, M)))
    if isinstance(n, list):
        return [(int(v), int(M)) for v in n]
    if isinstance(M, list):
        return [(int(n), int(v)) for v in M]
    return [(int(n), int(M))]


def validate(cfg: dict) -> dict:
    """Fill defaults and check every field; raises ConfigError."""
    out = copy.deepcopy(DEFAULTS)
    unknown = set(cfg) - set(DEFAULTS) - {"levels"}
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    out.update(copy.deepcopy(cfg))
    if out["study"] not in STUDIES:
        raise ConfigError(f"study must be one of {', '.join(STUDIES)}, got {out['study']!r}")
    if out["study"] == "gronwall":
        if int(out["instances"]) < 1:
            raise ConfigError("instances must be positive")
        return out
    if out["case"] not in CASE_NAMES:
        raise ConfigError(f"case must be one of {', '.join(CASE_NAMES)}, got {out['case']!r}")
    if out["q"] not in (0, 1):
        raise ConfigError(f"q must be 0 or 1, got {out['q']!r}")
    if not (isinstance(out["nu"], (int, float)) and out["nu"] > 0):
        raise ConfigError("nu must be a positive number")
    if not (isinstance(out["T"], (int, float)) and out["T"] > 0):
        raise ConfigError("T must be a positive number")
    levels = _levels(out)
    for n, M in levels:
        if n < 1:
            raise ConfigError(f"spatial resolution n must be a positive integer, got {n}")
        if M < 1:
            raise ConfigError(f"number of slabs M must be a positive integer, got {M}")
        try:
            TimeGrid.uniform(out["T"], M)
        except GridAssumptionError as exc:
            raise ConfigError(f"time grid with M={M}: {exc}") from exc
    if out["study"] in ("spatial", "temporal", "best-approx", "dual-stability") and len(levels) < 2:
        raise ConfigError(f"study {out['study']!r} needs at least two refinement levels")
    try:
        NewtonConfig(**out["newton"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid newton settings: {exc}") from exc
    out["levels"] = [list(p) for p in levels]
    return out


# ---------------------------------------------------------------------------
# studies


def _check(name, value, passed, threshold) -> dict:
    return {"name": name, "value": value, "threshold": threshold, "passed": bool(passed)}


def _run_level(args):
    case_name, nu, T, n, M, q, newton, rhs = args
    case = builtin_case(case_name, nu=nu, T=T)
    rec, _ = primal_run(case, n, M, q, NewtonConfig(**newton), with_rhs=rhs)
    return rec


def _records(cfg, with_rhs=False):
    jobs = [(cfg["case"], cfg["nu"], cfg["T"], n, M, cfg["q"], cfg["newton"], with_rhs) for n, M in cfg["levels"]]
    if int(cfg["parallel"]) > 1:
        with ProcessPoolExecutor(int(cfg["parallel"])) as ex:
            return list(ex.map(_run_level, jobs))
    return [_run_level(j) for j in jobs]


def _monitor_checks(records, th) -> list[dict]:
    e = max(r.monitors["energy_residual_max"] for r in records)
    d = max(r.monitors["divergence_max"] for r in records)
    return [
        _check("energy_identity_residual", e, e <= th["energy_residual"], th["energy_residual"]),
        _check("divergence_residual", d, d <= th["divergence"], th["divergence"]),
    ]


def _infsup_monitor(levels) -> dict:
    """beta_h for every distinct mesh of the study, keyed by n."""
    return {str(n): infsup_constant(MixedSpace(build_structured(n))) for n in sorted({n for n, _ in levels})}


def run_study(cfg: dict) -> tuple[dict, list[dict]]:
    """Execute the configured study; returns (report, table rows)."""
    th = dict(THRESHOLDS, **cfg.get("thresholds", {}))
    study = cfg["study"]
    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "thresholds": th,
        "notes": "ratio and spread tolerances are engineering choices; the estimates carry unquantified constants",
        "records": [],
        "eoc": {},
        "monitors": {},
        "checks": [],
    }
    if study != "gronwall":
        report["monitors"]["infsup_beta"] = _infsup_monitor(cfg["levels"])
    rows: list[dict] = []
    if study == "gronwall":
        for kind in ("lemma", "quadlinear"):
            res = soundness_suite(int(cfg["instances"]), int(cfg["seed"]), kind)
            rows.append(res)
            report["checks"].append(_check(f"gronwall_{kind}_failures", res["failures"], res["failures"] == 0, 0))
        report["monitors"]["gronwall"] = rows
    elif study == "dual-stability":
        case = builtin_case(cfg["case"], nu=cfg["nu"], T=cfg["T"])
        rows = dual_stability_study(case, cfg["q"], [tuple(p) for p in cfg["levels"]], config=NewtonConfig(**cfg["newton"]))
        report["monitors"]["dual"] = rows
        for key in ("stability_ratio", "h2_ratio"):
            v = [r[key] for r in rows]
            spread = max(v) / min(v)
            report["checks"].append(_check(f"dual_{key}_spread", spread, spread <= th["dual_spread"], th["dual_spread"]))
    else:
        records = _records(cfg, with_rhs=(study == "best-approx"))
        report["records"] = [r.to_dict() for r in records]
        rows = [dict(n=n, M=M, **r.row()) for (n, M), r in zip(cfg["levels"], records)]
        report["monitors"]["newton_iterations_max"] = max(r.monitors["newton_iterations_max"] for r in records)
        report["monitors"]["newton_iterations_mean"] = float(np.mean([r.monitors["newton_iterations_mean"] for r in records]))
        report["monitors"]["energy_residual_max"] = max(r.monitors["energy_residual_max"] for r in records)
        report["checks"].extend(_monitor_checks(records, th))
        if study in ("spatial", "temporal"):
            varying = "h" if study == "spatial" else "k"
            for norm in ("err_LinfL2", "err_L2L2", "err_L2H1"):
                report["eoc"][norm] = eoc(records, varying, norm)
            for row, i in zip(rows[1:], range(len(rows) - 1)):
                for norm in ("err_LinfL2", "err_L2L2", "err_L2H1"):
                    row[f"eoc_{norm}"] = report["eoc"][norm][i]
            if study == "spatial":
                for norm in ("LinfL2", "L2L2", "L2H1"):
                    v = min(report["eoc"][f"err_{norm}"])
                    t = th[f"spatial_eoc_{norm}"]
                    report["checks"].append(_check(f"spatial_eoc_{norm}", v, v >= t, t))
            else:
                v = report["eoc"]["err_L2L2"]
                if cfg["q"] == 0:
                    lo, hi = th["temporal_eoc_q0"]
                    ok = all(lo <= x <= hi for x in v)
                    report["checks"].append(_check("temporal_eoc_L2L2", v, ok, [lo, hi]))
                else:
                    t = th["temporal_eoc_q1"]
                    report["checks"].append(_check("temporal_eoc_L2L2", v, min(v) >= t, t))
        elif study == "best-approx":
            ratios = [best_approx_ratios(r, cfg["T"]) for r in records]
            for row, rt in zip(rows, ratios):
                row.update({f"ratio_{k}": v for k, v in rt.items()})
            for key in ("l2h1", "linf", "l2l2"):
                v = [r[key] for r in ratios]
                spread = max(v) / min(v)
                report["checks"].append(_check(f"best_approx_{key}_spread", spread, spread <= th["best_approx_spread"], th["best_approx_spread"]))
    report["passed"] = all(c["passed"] for c in report["checks"])
    return report, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_outputs(report: dict, rows: list[dict], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(out / "tables.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg: dict = {}
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must contain a JSON object")
    for item in overrides or []:
        apply_override(cfg, item)
    return validate(cfg)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dgnse", description="dG(q) Navier-Stokes verification runs")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a configured study")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report, rows = run_study(cfg)
    except NonConvergenceError as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except SingularSystemError as exc:
        print(f"singular system: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    write_outputs(report, rows, Path(cfg["output"]))
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']} (threshold {c['threshold']})")
    return EXIT_OK if report["passed"] else EXIT_CHECKS
