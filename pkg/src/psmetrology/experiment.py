"""Sweeps over initial states, calibration runs and table output."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import DegeneratePostSelection, MetrologyError, TooFewTrials
from .estimator import EstimatorKind, run_estimator, summarize
from .fisher import QUANTUM_FISHER, crb, fisher_total
from .forward import OpticalSetup, forward_point, halfplane_probabilities, mean_momentum, postselection_probability
from .gridoracle import GridSpec, simulate_on_grid
from .qcore import SAME, SIGMA3_MODE, PostSelectionMode
from .sampler import RNG_ALGORITHM, derive_seed, run_repetitions, sample_counts

WORKERS_ENV = "PSMETROLOGY_WORKERS"
CALIBRATION_STREAM = 0xCA1B

SWEEP_COLUMNS = [
    "theta_deg", "mode", "estimator", "variant", "g_true", "g_hat_mean", "g_hat_std", "bias",
    "three_sigma", "n_failed", "p_f_model", "mean_k_model", "F_pf", "F_m", "F_split", "F_total",
    "F_total_split", "F_quantum", "crb", "seed",
]
FISHER_COLUMNS = [
    "theta_deg", "mode", "g_true", "p_f_model", "mean_k_model", "F_pf", "F_m", "F_split",
    "pf_F_m", "pf_F_split", "F_total", "F_total_split", "F_quantum",
    "crb_ps", "crb_meter", "crb_total", "crb_total_split",
]
_STRING_COLUMNS = {"mode", "estimator", "variant"}
_INT_COLUMNS = {"n_failed", "seed"}

UNITS = {
    "g_true": "dimensionless g*delta",
    "mean_k_model": "dimensionless <k>*delta",
    "F_*": "Fisher information for g*delta (F*delta^2)",
    "crb": "Cramer-Rao bound on std(g*delta) for n_photons photons",
}
CRB_DEFINITION = {
    "ps": "1/sqrt(N F_pf)",
    "meter": "1/sqrt(N p_f F_split)",
    "joint": "1/sqrt(N (p_f F_split + F_pf))",
}


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[dict]
    metadata: dict


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _safe(fn, *args, **kwargs) -> float:
    try:
        return float(fn(*args, **kwargs))
    except (MetrologyError, ValueError, ArithmeticError):
        return math.nan


def _cell(config: ExperimentConfig, ti: int, mi: int) -> list[dict]:
    theta = config.theta_grid[ti]
    mode = config.mode_list[mi]
    setup = config.setup
    g = config.g_delta_true
    n = config.n_photons
    seed = derive_seed(config.master_seed, ti, mi)

    try:
        fb = fisher_total(g, theta, mode, setup)
        f_pf, f_m, f_split, p_f = fb.f_postselection, fb.f_meter_conditional, fb.f_split_conditional, fb.p_f
    except (MetrologyError, ArithmeticError):
        f_pf = f_m = f_split = math.nan
        p_f = _safe(postselection_probability, g, theta, mode, setup)
    f_total = p_f * f_m + f_pf
    f_total_split = p_f * f_split + f_pf
    bound_info = {"ps": f_pf, "meter": p_f * f_split, "joint": f_total_split}
    mean_k = _safe(mean_momentum, g, theta, mode, setup) * setup.delta

    records = run_repetitions(g, theta, mode, setup, n, config.n_reps, seed)
    rows = []
    for kind in config.estimator_kinds:
        ests = [run_estimator(kind, rec, theta, mode, setup, config.variant) for rec in records]
        try:
            s = summarize(ests, g)
            mean, std, bias, three, n_failed = s.mean, s.std, s.bias, s.three_sigma, s.n_failed
        except TooFewTrials:
            mean = std = bias = three = math.nan
            n_failed = sum(1 for e in ests if not e.converged)
        failures: dict[str, int] = {}
        for e in ests:
            if not e.converged:
                key = e.failure or "NonConvergence"
                failures[key] = failures.get(key, 0) + 1
        rows.append(
            {
                "theta_deg": config.theta_deg[ti],
                "mode": mode.name,
                "estimator": kind.value,
                "variant": config.variant if kind is not EstimatorKind.POSTSELECTION else "none",
                "g_true": g,
                "g_hat_mean": mean,
                "g_hat_std": std,
                "bias": bias,
                "three_sigma": three,
                "n_failed": int(n_failed),
                "p_f_model": p_f,
                "mean_k_model": mean_k,
                "F_pf": f_pf,
                "F_m": f_m,
                "F_split": f_split,
                "F_total": f_total,
                "F_total_split": f_total_split,
                "F_quantum": QUANTUM_FISHER,
                "crb": _safe(crb, bound_info[kind.value], n),
                "seed": seed,
                "_failures": failures,
            }
        )
    return rows


def _cell_args(config: ExperimentConfig):
    return [(config, ti, mi) for ti in range(len(config.theta_deg)) for mi in range(len(config.modes))]


def _run_cell(args):
    return _cell(*args)


def metadata(config: ExperimentConfig, kind: str) -> dict:
    return {
        "kind": kind,
        "package_version": __version__,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "rng_algorithm": RNG_ALGORITHM,
        "master_seed": int(config.master_seed),
        "config": config.to_dict(),
        "units": UNITS,
        "crb_definition": CRB_DEFINITION,
        "reference_bound": "F_total: p_f F_m + F_pf with an ideal momentum measurement at the configured visibilities",
    }


def run_sweep(config: ExperimentConfig, workers: int | None = None) -> ResultTable:
    """Ensemble estimates, bounds and model values for every (theta, mode, estimator).

    Cells are independent and may run in a process pool; rows are always
    assembled in (theta index, mode index, estimator) order.
    """
    workers = worker_count() if workers is None else workers
    args = _cell_args(config)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, args))
    else:
        cells = [_run_cell(a) for a in args]
    rows = [row for cell in cells for row in cell]
    return ResultTable(SWEEP_COLUMNS, rows, metadata(config, "sweep"))


def failed_fraction(table: ResultTable) -> float:
    """Fraction of rows where no trial produced a usable estimate."""
    if not table.rows:
        return 0.0
    bad = sum(1 for r in table.rows if "g_hat_mean" in r and not math.isfinite(r["g_hat_mean"]))
    return bad / len(table.rows)


@dataclass(frozen=True)
class CalibrationResult:
    d0_hat: float
    stderr: float
    d0_true: float
    n_left: int
    n_right: int
    n_photons: int
    seed: int


def calibrate_reference(config: ExperimentConfig, n_photons: int | None = None) -> CalibrationResult:
    """Emulate the reference-point calibration with |+> prepared and post-selected at g = 0.

    The detector offset is read from the split imbalance,
    ``d0_hat = sqrt(pi/2) delta_f (N_R - N_L)/(N_R + N_L)``, with the binomial
    standard error propagated through the same factor.
    """
    n = config.calibration_photons if n_photons is None else int(n_photons)
    base = config.setup
    setup = OpticalSetup(base.delta, base.wavelength, base.focal_length, base.nu0, base.nu_half,
                         config.calibration_d0_true)
    seed = derive_seed(config.master_seed, CALIBRATION_STREAM, n)
    rec = sample_counts(0.0, math.pi / 2, SAME, setup, n, seed)
    n_f = rec.n_postselected
    imb = (rec.n_right - rec.n_left) / n_f
    scale = math.sqrt(math.pi / 2) * setup.delta_f
    stderr = scale * math.sqrt(max(1.0 - imb**2, 0.0) / n_f)
    return CalibrationResult(scale * imb, stderr, config.calibration_d0_true, int(rec.n_left),
                             int(rec.n_right), n, seed)


def fisher_curves(config: ExperimentConfig) -> ResultTable:
    setup = config.setup
    g = config.g_delta_true
    n = config.n_photons
    rows = []
    for th_deg, theta in zip(config.theta_deg, config.theta_grid):
        for mode in config.mode_list:
            try:
                fb = fisher_total(g, theta, mode, setup)
                f_pf, f_m, f_split, p_f = fb.f_postselection, fb.f_meter_conditional, fb.f_split_conditional, fb.p_f
            except (MetrologyError, ArithmeticError):
                f_pf = f_m = f_split = math.nan
                p_f = _safe(postselection_probability, g, theta, mode, setup)
            rows.append(
                {
                    "theta_deg": th_deg,
                    "mode": mode.name,
                    "g_true": g,
                    "p_f_model": p_f,
                    "mean_k_model": _safe(mean_momentum, g, theta, mode, setup) * setup.delta,
                    "F_pf": f_pf,
                    "F_m": f_m,
                    "F_split": f_split,
                    "pf_F_m": p_f * f_m,
                    "pf_F_split": p_f * f_split,
                    "F_total": p_f * f_m + f_pf,
                    "F_total_split": p_f * f_split + f_pf,
                    "F_quantum": QUANTUM_FISHER,
                    "crb_ps": _safe(crb, f_pf, n),
                    "crb_meter": _safe(crb, p_f * f_split, n),
                    "crb_total": _safe(crb, p_f * f_m + f_pf, n),
                    "crb_total_split": _safe(crb, p_f * f_split + f_pf, n),
                }
            )
    return ResultTable(FISHER_COLUMNS, rows, metadata(config, "fisher-curves"))


VALIDATION_G = (0.0, 0.01, 0.05, 0.1, 0.3)


def oracle_check(grid: GridSpec = GridSpec(), setups: tuple[OpticalSetup, ...] | None = None) -> dict:
    """Largest deviation between the grid oracle and the closed forms on the validation grid.

    Probabilities are compared absolutely and the mean momentum as ``<k> delta``.
    Points where the post-selection is degenerate are skipped and counted.
    """
    if setups is None:
        lab = OpticalSetup()
        setups = (lab, lab.with_perfect_visibility())
    start = time.perf_counter()
    worst = {"p_f": 0.0, "mean_k": 0.0, "p_left": 0.0, "p_right": 0.0}
    n_points = n_skipped = 0
    for setup in setups:
        for mode in (SAME, SIGMA3_MODE):
            for deg in range(0, 181, 5):
                theta = math.radians(deg)
                for g in VALIDATION_G:
                    res = simulate_on_grid(g, theta, mode, setup, grid)
                    n_points += 1
                    try:
                        fp = forward_point(g, theta, mode, setup)
                    except DegeneratePostSelection:
                        n_skipped += 1
                        worst["p_f"] = max(worst["p_f"], abs(res.p_f - postselection_probability(g, theta, mode, setup)))
                        continue
                    worst["p_f"] = max(worst["p_f"], abs(res.p_f - fp.p_f))
                    worst["p_left"] = max(worst["p_left"], abs(res.p_left - fp.p_left))
                    worst["p_right"] = max(worst["p_right"], abs(res.p_right - fp.p_right))
                    worst["mean_k"] = max(worst["mean_k"], abs(res.mean_k - fp.mean_k) * setup.delta)
    return {
        "max_abs_deviation": worst,
        "overall": max(worst.values()),
        "n_points": n_points,
        "n_degenerate_skipped": n_skipped,
        "seconds": time.perf_counter() - start,
    }


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _json_value(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


def emit(table: ResultTable, fmt: str, out_dir: str | Path, stem: str) -> list[Path]:
    """Write ``table`` as ``<stem>.csv`` plus ``<stem>.meta.json``, or as ``<stem>.json``.

    The CSV holds data only, so it is byte-identical between runs with the same
    configuration; the run timestamp lives in the metadata.
    """
    if not table.rows:
        raise ValueError("refusing to write an empty table")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            data_path = out / f"{stem}.csv"
            meta_path = out / f"{stem}.meta.json"
            with data_path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(table.columns)
                for row in table.rows:
                    writer.writerow([_fmt(row[c]) for c in table.columns])
            meta = dict(table.metadata)
            failures = [r.get("_failures", {}) for r in table.rows]
            if any(failures):
                meta["failure_counts"] = failures
            meta_path.write_text(json.dumps(_json_value(meta), indent=2, sort_keys=True) + "\n")
            return [data_path, meta_path]
        if fmt == "json":
            path = out / f"{stem}.json"
            rows = []
            for row in table.rows:
                item = {c: _json_value(row[c]) for c in table.columns}
                if "_failures" in row:
                    item["failure_counts"] = row["_failures"]
                rows.append(item)
            doc = {"metadata": _json_value(table.metadata), "columns": table.columns, "rows": rows}
            path.write_text(json.dumps(doc, indent=2) + "\n")
            return [path]
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    raise ValueError(f"unknown output format {fmt!r}")


def _parse_cell(column: str, text: str):
    if column in _STRING_COLUMNS:
        return text
    if column in _INT_COLUMNS:
        return int(text)
    return float(text)


def read_table(path: str | Path) -> ResultTable:
    """Parse a table written by :func:`emit` (CSV or JSON)."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        rows = []
        for item in doc["rows"]:
            row = {}
            for c in doc["columns"]:
                v = item[c]
                row[c] = math.nan if v is None else v
            rows.append(row)
        return ResultTable(doc["columns"], rows, doc["metadata"])
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [{c: _parse_cell(c, v) for c, v in zip(columns, line)} for line in reader]
    meta_path = path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return ResultTable(columns, rows, meta)
