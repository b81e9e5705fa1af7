"""Versioned CSV/JSON outputs and run manifests.

Data files never carry timestamps, so a re-run with the same seed rewrites
them byte for byte. Timestamps live in the manifest written next to them.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .walk import GENERATOR_ID

# name -> (version, [(column, description)])
SCHEMAS: dict[str, tuple[int, list[tuple[str, str]]]] = {
    "cluster": (1, [
        ("index", "explorer index in launch order"),
        ("x0..x{d-1}", "settling site coordinates"),
        ("tau", "settling time in walk steps"),
    ]),
    "scan_trials": (1, [
        ("n", "ball radius; N = |B(0,n)| explorers start at the origin"),
        ("trial", "trial index (selects the random stream)"),
        ("delta_I", "inner error"),
        ("delta_O", "outer error"),
    ]),
    "scan_summary": (1, [
        ("n", "ball radius"),
        ("d", "dimension"),
        ("trials", "number of trials"),
        ("normalizer", "log n (d = 2) or sqrt(log n) (d >= 3); 0 if n <= 1"),
        ("degenerate_normalizer", "True when the normalizer is 0 and ratios are raw errors"),
        ("inner_mean", "mean inner error"),
        ("inner_median", "median inner error"),
        ("inner_max", "largest inner error"),
        ("inner_q10", "10% quantile of the inner error"),
        ("inner_q90", "90% quantile of the inner error"),
        ("inner_ratio", "inner_mean / normalizer"),
        ("inner_ratio_sqrtlog", "inner_mean / sqrt(log n), for cross-dimension comparison"),
        ("outer_mean", "mean outer error"),
        ("outer_median", "median outer error"),
        ("outer_max", "largest outer error"),
        ("outer_q10", "10% quantile of the outer error"),
        ("outer_q90", "90% quantile of the outer error"),
        ("outer_ratio", "outer_mean / normalizer"),
        ("outer_ratio_sqrtlog", "outer_mean / sqrt(log n)"),
    ]),
    "probe_covering": (1, [
        ("d", "dimension"), ("R", "covered radius"), ("A", "explorers per R^d"),
        ("alpha", "stopping radius factor"), ("placement", "even or uniform on B(0,R/2)"),
        ("trials", "number of trials"), ("base_seed", "base seed"),
        ("successes", "trials where B(0,R) was not covered"),
        ("frequency", "successes / trials"),
        ("wilson_halfwidth", "95% Wilson score half-width"),
    ]),
    "probe_origin": (1, [
        ("d", "dimension"), ("R", "start sphere radius"), ("beta", "explorers per R^d"),
        ("explorers", "floor(beta R^d)"), ("trials", "number of trials"),
        ("base_seed", "base seed"), ("successes", "trials where the origin was occupied"),
        ("frequency", "successes / trials"),
        ("wilson_halfwidth", "95% Wilson score half-width"),
    ]),
    "probe_traps": (1, [
        ("d", "dimension"), ("R", "inner radius of the annulus"),
        ("density", "probability that an annulus site is trap free"),
        ("height", "shell height after adjustment to R/2h integer"),
        ("mean_V", "mean number of trap-free sites |V|"),
        ("trials", "number of probes"), ("base_seed", "base seed"),
        ("successes", "flashing crossings (crossed_count)"),
        ("frequency", "flashing crossing frequency"),
        ("wilson_halfwidth", "95% Wilson score half-width of frequency"),
        ("plain_crossed", "plain-walk crossings on the same trajectories"),
        ("plain_frequency", "plain_crossed / trials"),
        ("containment_violations", "probes with a plain but no flashing crossing"),
        ("crossed_with_trap_flash", "crossings with a flashing site on a trap (must be 0)"),
    ]),
    "probe_fit": (1, [
        ("probe", "probe name"), ("x_name", "regressor"),
        ("slope", "least squares slope of log frequency"),
        ("intercept", "least squares intercept"), ("r2", "coefficient of determination"),
        ("zero_count_cells", "cells with no successes (add-one adjusted)"),
    ]),
    "waves": (1, [
        ("k", "sphere index; explorers paused on dB(0, k h)"),
        ("tile_center", "tile centre, coordinates joined by ':'"),
        ("W", "paused explorers on the tile"),
        ("mu_estimate", "mean tile excess mu(T)"),
        ("mu_halfwidth", "95% half-width (0 for exact solves)"),
    ]),
    "flash": (1, [
        ("index", "explorer index"), ("T", "plain settling time"),
        ("T_star", "flashing settling time, -1 when stopped at the cap"),
        ("plain_site", "plain settling site, ':'-joined"),
        ("flash_site", "flashing settling (or stopping) site, ':'-joined"),
    ]),
    "greens": (1, [
        ("quantity", "computed quantity"), ("arguments", "its arguments"),
        ("value", "result"),
    ]),
    "mean_value_gap": (1, [
        ("d", "dimension"), ("n", "ball radius, R = n"),
        ("max_gap", "largest gap over z with n - |z| <= 1"),
        ("sites", "number of such z"),
    ]),
    "tails": (1, [
        ("which", "lower or upper"), ("mu", "E M - E L"), ("xi", "threshold"),
        ("c", "slack constant"), ("kappa", "H1 constant"), ("s2", "sum of squared L means"),
        ("lambda", "lambda used"), ("log_bound", "natural log of the bound"),
        ("bound", "bound clamped to [0, 1]"),
    ]),
    "tails_validation": (1, [
        ("cell", "grid cell"), ("which", "lower or upper"), ("mu", "E M - E L"),
        ("s2", "sum of squared L means"), ("kappa", "H1 constant"), ("xi", "threshold"),
        ("c", "slack constant"), ("lambda", "optimal lambda"), ("trials", "trials"),
        ("empirical_freq", "observed tail frequency"), ("analytic_bound", "optimized bound"),
        ("standard_error", "binomial standard error of empirical_freq"),
        ("holds", "empirical_freq <= analytic_bound + 3 standard errors"),
    ]),
    "report": (1, [
        ("section", "scan or probe name"), ("key", "row label"),
        ("metric", "reported quantity"), ("value", "its value"),
    ]),
}


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "True" if v else "False"
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ":".join(fmt(x) for x in v)
    return str(v)


def header_lines(schema: str, meta: dict) -> list[str]:
    version, _ = SCHEMAS[schema]
    lines = [f"# schema: idla.{schema}/{version}"]
    for k in sorted(meta):
        lines.append(f"# {k}: {fmt(meta[k])}")
    return lines


def csv_text(schema: str, columns: list[str], rows: list[dict], meta: dict) -> str:
    buf = io.StringIO()
    for line in header_lines(schema, meta):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def schema_columns(schema: str) -> list[str]:
    return [c for c, _ in SCHEMAS[schema][1]]


def write_csv(path: Path, schema: str, rows: list[dict], meta: dict,
              columns: list[str] | None = None) -> Path:
    cols = columns or schema_columns(schema)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(schema, cols, rows, meta))
    return path


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(v):
    if hasattr(v, "tolist"):
        return v.tolist()
    if hasattr(v, "item"):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v)}")


def read_csv(path: Path) -> tuple[dict, list[dict]]:
    meta: dict = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def write_manifest(path: Path, command: str, argv: list[str], config: dict,
                   base_seed, outputs: list[Path], started: float) -> Path:
    obj = {
        "command": command,
        "argv": list(argv),
        "config": {k: v for k, v in sorted(config.items())},
        "base_seed": base_seed,
        "generator": GENERATOR_ID,
        "code_version": __version__,
        "python": sys.version.split()[0],
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": [os.fspath(p) for p in outputs],
    }
    return write_json(path, obj)


def schema_markdown() -> str:
    """The shipped schema document, generated from SCHEMAS."""
    out = ["# Output schemas", "",
           "Every CSV starts with `#` comment lines: `schema: idla.<name>/<version>`, then",
           "run metadata (`base_seed`, `generator`, `code_version`, `manifest`, parameters).",
           "The column header row follows. Data files never contain timestamps; those are",
           "in the JSON manifest named by the `manifest` line.", ""]
    for name, (version, cols) in SCHEMAS.items():
        out.append(f"## idla.{name}/{version}")
        out.append("")
        out.append("| column | meaning |")
        out.append("|---|---|")
        for c, desc in cols:
            cell = desc.replace("|", r"\|")
            out.append(f"| `{c}` | {cell} |")
        out.append("")
    out += ["## idla.cluster/1 (JSON)", "",
            "`grow --format json` writes one object with keys `schema`, `metadata`",
            "(`d`, `explorers`, `base_seed`, `stream_id`, `generator`, `code_version`,",
            "`manifest`, and `n` when given), `settle_order` (list of",
            "`[explorer index, site, settling time]` in settling order) and `stopped`",
            "(list of `[explorer index, site]` for explorers frozen on a stopping sphere).",
            "",
            "## idla.probe_summary/1 (JSON)", "",
            "Each `probe` command also writes `probe_<name>.json` with keys `schema`,",
            "`probe`, `base_seed`, `generator`, `code_version`, `manifest`, `results`",
            "(the CSV rows as objects) and `fits` (the `probe_fit` rows as objects).",
            "",
            "## Manifests",
            "",
            "`<file>.manifest.json` holds `command`, `argv`, `config`, `base_seed`,",
            "`generator`, `code_version`, `python`, `started`, `finished` (UTC) and `outputs`.",
            ""]
    return "\n".join(out)
