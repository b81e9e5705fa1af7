"""``idla`` command line.

Subcommands: grow, scan, probe {covering, origin, traps}, waves, flash,
greens {green, hit, kernel, gap, fit-kernel}, tails {lower, upper, validate}
and report. Data files are deterministic functions of their flags; the
manifest written next to each one (``<file>.manifest.json``) records the
command line, configuration, seed and timestamps.

Exit status: 0 success, 2 usage error, 3 violated precondition,
4 exceeded budget or step cap, 1 any other library error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import greens, tails
from .errors import BudgetExceeded, IDLAError, PreconditionViolated
from .flashing import NEVER, flashing_grow
from .growth import Configuration, grow, grow_ball
from .records import (csv_text, fmt, read_csv, schema_columns, write_csv, write_json,
                      write_manifest)
from .walk import GENERATOR_ID, RandomSource, stream_id
from .waves import DEFAULT_L, wave_report

EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_BUDGET = 4

# stream ids for single-run commands (probes and scans use experiments' ids)
_GROW = 11
_WAVES = 12
_FLASH = 13
_TAILS = 14


# ------------------------------------------------------------ arg types

def dimension(text: str) -> int:
    try:
        d = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dimension {text!r}")
    if d < 2:
        raise argparse.ArgumentTypeError("the model needs dimension d >= 2")
    return d


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def seed_int(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be >= 0")
    return v


def finite_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}")
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be finite")
    return v


def float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid list {text!r}")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("need a non-empty list of finite numbers")
    return vals


def site(text: str) -> tuple:
    try:
        s = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid site {text!r}; use e.g. 3,-1")
    if len(s) < 2:
        raise argparse.ArgumentTypeError("sites need at least two coordinates")
    return s


# --------------------------------------------------------------- parser

def _common(seed: bool = True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path,
                   help="key=value file; command-line flags override it")
    p.add_argument("--out-dir", type=Path, default=None,
                   help="output directory (default $IDLA_OUT_DIR or .)")
    p.add_argument("--out", type=Path, default=None, help="output file")
    p.add_argument("--threads", type=positive_int, default=None,
                   help="trial threads (default $IDLA_THREADS or all cores)")
    if seed:
        p.add_argument("--seed", type=seed_int, default=0, help="base seed (default 0)")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idla", description="Internal DLA experiments.")
    ap.add_argument("--version", action="version", version=f"idla {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    com = _common()
    com_noseed = _common(seed=False)

    g = sub.add_parser("grow", parents=[com], help="grow one cluster")
    g.add_argument("--dim", type=dimension, default=None)
    g.add_argument("--n", type=finite_float, default=None,
                   help="radius; launches |B(0,n)| explorers at the origin")
    g.add_argument("--count", type=positive_int, default=None,
                   help="number of explorers at the origin")
    g.add_argument("--format", choices=["json", "csv"], default=None,
                   help="default: from the --out suffix, else json")
    g.set_defaults(func=cmd_grow, _parser=g)

    s = sub.add_parser("scan", parents=[com], help="inner/outer error scan")
    s.add_argument("--dim", type=dimension, default=3)
    s.add_argument("--n-list", type=float_list, default=[10.0, 15.0, 20.0, 25.0, 30.0])
    s.add_argument("--trials", type=positive_int, default=100)
    s.set_defaults(func=cmd_scan, _parser=s)

    p = sub.add_parser("probe", help="Monte Carlo probes")
    psub = p.add_subparsers(dest="probe", required=True)
    pc = psub.add_parser("covering", parents=[com], help="non-covering frequency")
    pc.add_argument("--dim", type=dimension, default=3)
    pc.add_argument("--radius", type=float_list, default=[6.0])
    pc.add_argument("--A", dest="A", type=float_list, default=[1.0, 2.0, 3.0])
    pc.add_argument("--alpha", type=finite_float, default=ex.DEFAULT_ALPHA)
    pc.add_argument("--placement", choices=[ex.PLACE_EVEN, ex.PLACE_UNIFORM],
                    default=ex.PLACE_EVEN)
    pc.add_argument("--trials", type=positive_int, default=1000)
    pc.set_defaults(func=cmd_probe_covering, _parser=pc)
    po = psub.add_parser("origin", parents=[com], help="origin-hit frequency")
    po.add_argument("--dim", type=dimension, default=2)
    po.add_argument("--radius", type=float_list, default=[6.0, 9.0, 12.0])
    po.add_argument("--beta", type=finite_float, default=ex.DEFAULT_BETA)
    po.add_argument("--trials", type=positive_int, default=1000)
    po.set_defaults(func=cmd_probe_origin, _parser=po)
    pt = psub.add_parser("traps", parents=[com], help="trap crossing frequency")
    pt.add_argument("--dim", type=dimension, default=2)
    pt.add_argument("--radius", type=float_list, default=[12.0])
    pt.add_argument("--density", type=float_list, default=[0.2, 0.5, 0.8])
    pt.add_argument("--height", type=finite_float, default=2.0)
    pt.add_argument("--trials", type=positive_int, default=1000)
    pt.set_defaults(func=cmd_probe_traps, _parser=pt)

    w = sub.add_parser("waves", parents=[com], help="per-tile wave observables")
    w.add_argument("--dim", type=dimension, default=2)
    w.add_argument("--n", type=finite_float, default=12.0)
    w.add_argument("--L", dest="L", type=finite_float, default=DEFAULT_L)
    w.add_argument("--all-centers", action="store_true",
                   help="use every sphere site as a tile centre")
    w.set_defaults(func=cmd_waves, _parser=w)

    f = sub.add_parser("flash", parents=[com], help="coupled plain/flashing run")
    f.add_argument("--dim", type=dimension, default=2)
    f.add_argument("--n", type=finite_float, default=8.0)
    f.add_argument("--height", type=finite_float, default=None,
                   help="shell height (default: the standard height at n)")
    f.set_defaults(func=cmd_flash, _parser=f)

    gr = sub.add_parser("greens", help="Green's function quantities")
    gsub = gr.add_subparsers(dest="quantity", required=True)
    gg = gsub.add_parser("green", parents=[com_noseed], help="G_n(y, z)")
    gg.add_argument("--n", type=finite_float, required=True)
    gg.add_argument("--y", type=site, required=True)
    gg.add_argument("--z", type=site, required=True)
    gg.set_defaults(func=cmd_greens, _parser=gg)
    gh = gsub.add_parser("hit", parents=[com_noseed], help="P_y(hit z before leaving B(0,R))")
    gh.add_argument("--R", dest="R", type=finite_float, required=True)
    gh.add_argument("--y", type=site, required=True)
    gh.add_argument("--z", type=site, required=True)
    gh.set_defaults(func=cmd_greens, _parser=gh)
    gk = gsub.add_parser("kernel", parents=[com_noseed], help="potential kernel a(z), d = 2")
    gk.add_argument("--z", type=site, required=True)
    gk.set_defaults(func=cmd_greens, _parser=gk)
    gm = gsub.add_parser("gap", parents=[com_noseed], help="mean-value gaps with R = n")
    gm.add_argument("--dim", type=dimension, default=2)
    gm.add_argument("--n-list", type=float_list, default=[5.0, 10.0, 15.0, 20.0])
    gm.set_defaults(func=cmd_gap, _parser=gm)
    gf = gsub.add_parser("fit-kernel", parents=[com_noseed],
                         help="fit the potential kernel error constant")
    gf.add_argument("--rmin", type=finite_float, default=5.0)
    gf.add_argument("--rmax", type=finite_float, default=20.0)
    gf.set_defaults(func=cmd_greens, _parser=gf)

    t = sub.add_parser("tails", help="tail bounds")
    tsub = t.add_subparsers(dest="which", required=True)
    for which in (tails.LOWER, tails.UPPER):
        tp = tsub.add_parser(which, parents=[com_noseed], help=f"{which} tail bound")
        tp.add_argument("--mu", type=finite_float, required=True)
        tp.add_argument("--xi", type=finite_float, required=True)
        tp.add_argument("--c", type=finite_float, default=0.0)
        tp.add_argument("--kappa", type=finite_float, default=None)
        tp.add_argument("--s2", type=finite_float, default=0.0)
        grp = tp.add_mutually_exclusive_group()
        grp.add_argument("--lambda", dest="lam", type=finite_float, default=None)
        grp.add_argument("--optimize", action="store_true")
        tp.set_defaults(func=cmd_tails, _parser=tp)
    tv = tsub.add_parser("validate", parents=[com], help="Monte Carlo validation grid")
    tv.add_argument("--grid", type=positive_int, default=50)
    tv.add_argument("--grid-seed", type=seed_int, default=0)
    tv.add_argument("--trials", type=positive_int, default=10_000)
    tv.set_defaults(func=cmd_tails_validate, _parser=tv)

    r = sub.add_parser("report", parents=[com_noseed], help="tables from earlier outputs")
    r.add_argument("--in-dir", type=Path, default=None,
                   help="directory with scan/probe CSVs (default: output directory)")
    r.set_defaults(func=cmd_report, _parser=r)
    return ap


# ---------------------------------------------------------- config file

def read_config(path: Path) -> dict:
    out = {}
    for no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{no}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def apply_config(args, argv: list[str]) -> dict:
    """Fill options not given on the command line from ``--config``."""
    if args.config is None:
        return {}
    parser = args._parser
    try:
        conf = read_config(args.config)
    except (OSError, ValueError) as e:
        parser.error(f"--config: {e}")
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    given = {tok.split("=", 1)[0] for tok in argv if tok.startswith("-")}
    for key, text in conf.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            parser.error(f"--config: unknown key {key!r}")
        if given & set(act.option_strings):
            continue
        if act.nargs == 0:
            value = text.lower() in ("1", "true", "yes", "on")
        else:
            try:
                value = act.type(text) if act.type else text
            except (argparse.ArgumentTypeError, ValueError) as e:
                parser.error(f"--config: {key}: {e}")
            if act.choices is not None and value not in act.choices:
                parser.error(f"--config: {key}: invalid choice {value!r}")
        setattr(args, key, value)
    return conf


# -------------------------------------------------------------- helpers

def out_dir(args) -> Path:
    if args.out_dir is not None:
        return args.out_dir
    return Path(os.environ.get("IDLA_OUT_DIR", "."))


def out_path(args, default_name: str) -> Path:
    if args.out is not None:
        return args.out if args.out.is_absolute() or args.out_dir is None \
            else args.out_dir / args.out
    return out_dir(args) / default_name


def threads(args) -> int:
    return args.threads if args.threads else ex.default_threads()


def manifest_name(path: Path) -> str:
    return path.name + ".manifest.json"


def config_dict(args) -> dict:
    skip = {"func", "_parser", "config", "out", "out_dir", "threads"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = [fmt(x) for x in v] if isinstance(v, (list, tuple)) else \
            (fmt(v) if v is not None else None)
    return out


def base_meta(args, path: Path) -> dict:
    meta = {"generator": GENERATOR_ID, "code_version": __version__,
            "manifest": manifest_name(path), "command": _command_name(args)}
    if getattr(args, "seed", None) is not None:
        meta["base_seed"] = args.seed
    return meta


def _command_name(args) -> str:
    parts = [args.command]
    for k in ("probe", "quantity", "which"):
        if getattr(args, k, None):
            parts.append(getattr(args, k))
    return " ".join(parts)


class Run:
    """Collects outputs and writes one manifest per data file."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.started = time.time()
        self.outputs: list[Path] = []

    def add(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def finish(self):
        for p in self.outputs:
            write_manifest(p.with_name(manifest_name(p)), _command_name(self.args),
                           self.argv, config_dict(self.args),
                           getattr(self.args, "seed", None), self.outputs, self.started)
        for p in self.outputs:
            print(p)


# ------------------------------------------------------------- commands

def cmd_grow(args, run: Run):
    if args.dim is None:
        args._parser.error("--dim is required")
    if (args.n is None) == (args.count is None):
        args._parser.error("give exactly one of --n and --count")
    fmt_ = args.format
    if fmt_ is None:
        fmt_ = "csv" if args.out is not None and args.out.suffix == ".csv" else "json"
    path = out_path(args, f"cluster.{fmt_}")
    src = RandomSource(args.seed, stream_id(_GROW, args.dim))
    if args.n is not None:
        if args.n <= 0:
            raise PreconditionViolated("--n must be positive")
        cl = grow_ball(args.n, args.dim, src)
    else:
        cl = grow(Configuration.at_origin(args.count, args.dim), src)
    meta = base_meta(args, path)
    if fmt_ == "json":
        cl.meta.update({"manifest": meta["manifest"]})
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(cl.to_json() + "\n")
    else:
        cols = ["index"] + [f"x{i}" for i in range(args.dim)] + ["tau"]
        rows = [{"index": i, **{f"x{j}": s[j] for j in range(args.dim)}, "tau": t}
                for i, s, t in cl.settle_order]
        meta.update({"d": args.dim, "explorers": cl.n_explorers})
        if args.n is not None:
            meta["n"] = args.n
        write_csv(path, "cluster", rows, meta, columns=cols)
    run.add(path)


def cmd_scan(args, run: Run):
    sc = ex.scan_fluctuations(args.dim, args.n_list, args.trials, args.seed, threads(args))
    path = out_path(args, "scan_trials.csv")
    meta = {**base_meta(args, path), "d": args.dim, "trials": args.trials}
    run.add(write_csv(path, "scan_trials", sc.trial_rows(), meta))
    spath = path.with_name(path.stem + "_summary.csv")
    run.add(write_csv(spath, "scan_summary", sc.stats(), {**meta, "manifest": manifest_name(spath)}))
    for which in ("inner", "outer"):
        st = ex.ratio_stability(sc, which)
        print(f"{which}: ratio spread {st['spread']:.3f} "
              f"(< 2: {st['spread_ok']}), envelope ok: {st['envelope_ok']}")


def _write_probe(args, run: Run, name: str, results, x_name: str, xs, vary: str):
    path = out_path(args, f"probe_{name}.csv")
    meta = base_meta(args, path)
    run.add(write_csv(path, f"probe_{name}", [r.row() for r in results], meta))
    groups: dict = {}
    for x, r in zip(xs, results):
        key = tuple((k, v) for k, v in r.params.items() if k not in
                    (vary, "explorers", "mean_V"))
        groups.setdefault(key, []).append((x, r))
    fits = []
    for key, items in groups.items():
        fit = ex.fit_decay([x for x, _ in items], [r for _, r in items])
        label = ";".join(f"{k}={fmt(v)}" for k, v in key if k != "d")
        fits.append({"probe": f"{name}[{label}]" if label else name, "x_name": x_name,
                     "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                     "zero_count_cells": len(fit.adjusted)})
    fpath = path.with_name(path.stem + "_fit.csv")
    run.add(write_csv(fpath, "probe_fit", fits, {**meta, "manifest": manifest_name(fpath)}))
    jpath = path.with_suffix(".json")
    run.add(write_json(jpath, {"schema": "idla.probe_summary/1", "probe": name,
                               "base_seed": args.seed, "generator": GENERATOR_ID,
                               "code_version": __version__, "manifest": manifest_name(jpath),
                               "results": [r.row() for r in results], "fits": fits}))
    for r in results:
        print(f"{name} {r.params}: {r.success_count}/{r.trials} = {r.frequency:.4f} "
              f"+- {r.wilson_halfwidth:.4f}")


def cmd_probe_covering(args, run: Run):
    res, xs = [], []
    for R in args.radius:
        for A in args.A:
            res.append(ex.probe_covering(R, A, args.trials, args.seed, args.dim,
                                         args.alpha, args.placement, threads(args)))
            xs.append(A)
    _write_probe(args, run, "covering", res, "A", xs, "A")


def cmd_probe_origin(args, run: Run):
    res, xs = [], []
    for R in args.radius:
        res.append(ex.probe_origin_hit(R, args.beta, args.trials, args.seed, args.dim,
                                       threads(args)))
        xs.append(ex.origin_decay_variable(R, args.dim))
    _write_probe(args, run, "origin", res,
                 "R^2/log R" if args.dim == 2 else "R^2", xs, "R")


def cmd_probe_traps(args, run: Run):
    res, xs = [], []
    for R in args.radius:
        for rho in args.density:
            if not 0 <= rho <= 1:
                raise PreconditionViolated("densities must lie in [0, 1]")
            res.append(ex.probe_traps(R, rho, args.trials, args.seed, args.dim,
                                      args.height, threads(args)))
            xs.append(rho)
    _write_probe(args, run, "traps", res, "density", xs, "density")


def cmd_waves(args, run: Run):
    src = RandomSource(args.seed, stream_id(_WAVES, args.dim))
    rows = wave_report(args.n, args.dim, src, args.L, thinned=not args.all_centers)
    path = out_path(args, "waves.csv")
    meta = {**base_meta(args, path), "d": args.dim, "n": args.n, "L": args.L,
            "tile_family": "all_centers" if args.all_centers else "thinned"}
    run.add(write_csv(path, "waves", rows, meta))


def cmd_flash(args, run: Run):
    from .lattice import default_height
    h = args.height if args.height is not None else default_height(args.n, args.dim)
    src = RandomSource(args.seed, stream_id(_FLASH, args.dim))
    cr = flashing_grow(args.n, h, args.dim, src)
    rows = [{"index": i, "T": int(cr.T[i]),
             "T_star": -1 if cr.T_star[i] == NEVER else int(cr.T_star[i]),
             "plain_site": tuple(int(v) for v in cr.plain_sites[i]),
             "flash_site": tuple(int(v) for v in cr.flash_sites[i])}
            for i in range(len(cr.T))]
    path = out_path(args, "flash.csv")
    meta = {**base_meta(args, path), "d": args.dim, "n": args.n, "height": cr.height,
            **{k: v for k, v in cr.diagnostics.items()
               if k in ("probes", "gated", "inside_gated", "stopped", "cap_radius")}}
    run.add(write_csv(path, "flash", rows, meta))
    print(f"order violations (T* < T): {cr.order_violations()}")


def _emit(args, run: Run, schema: str, rows: list[dict], meta_extra: dict,
          default_name: str):
    """Write to --out if given, else print the CSV to standard output."""
    if args.out is None and args.out_dir is None:
        meta = {"generator": GENERATOR_ID, "code_version": __version__,
                "command": _command_name(args), **meta_extra}
        sys.stdout.write(csv_text(schema, schema_columns(schema), rows, meta))
        return
    path = out_path(args, default_name)
    run.add(write_csv(path, schema, rows, {**base_meta(args, path), **meta_extra}))


def cmd_greens(args, run: Run):
    q = args.quantity
    if q == "green":
        v = greens.green_function(args.n, args.y, args.z)
        rows = [{"quantity": "G_n(y,z)", "arguments": f"n={fmt(args.n)} y={fmt(args.y)} "
                 f"z={fmt(args.z)}", "value": v}]
    elif q == "hit":
        v = greens.hitting_probability(args.y, args.z, args.R)
        rows = [{"quantity": "H_R(y,z)", "arguments": f"R={fmt(args.R)} y={fmt(args.y)} "
                 f"z={fmt(args.z)}", "value": v}]
    elif q == "kernel":
        v = float(greens.potential_kernel(args.z))
        asym = float(greens.kernel_asymptotic(np.array([args.z]))[0])
        rows = [{"quantity": "a(z)", "arguments": f"z={fmt(args.z)}", "value": v},
                {"quantity": "a_asymptotic(z)", "arguments": f"z={fmt(args.z)}", "value": asym}]
    else:
        fit = greens.fit_kernel_constant(args.rmin, args.rmax)
        arg = f"rmin={fmt(args.rmin)} rmax={fmt(args.rmax)}"
        rows = [{"quantity": k, "arguments": arg, "value": fit[k]}
                for k in ("K_g", "K_g_lower_half", "K_g_upper_half")]
    _emit(args, run, "greens", rows, {}, "greens.csv")


def cmd_gap(args, run: Run):
    rows = []
    for n in args.n_list:
        sites, gaps = greens.mean_value_gaps(n, n, args.dim)
        rows.append({"d": args.dim, "n": n, "max_gap": float(np.max(gaps)) if len(gaps) else 0.0,
                     "sites": len(sites)})
    _emit(args, run, "mean_value_gap", rows, {"d": args.dim}, "mean_value_gap.csv")


def cmd_tails(args, run: Run):
    which = args.which
    kappa = args.kappa
    inp = tails.TailBoundInput(args.mu, args.xi, args.c, kappa, args.s2)
    if args.lam is None and not args.optimize:
        args._parser.error("give --lambda or --optimize")
    if args.optimize:
        opt = tails.optimize_lambda(inp, which)
        lam, logb = opt.lam, opt.log_bound
    else:
        lam = args.lam
        logb = (tails.log_lower_tail_bound(inp, lam) if which == tails.LOWER
                else tails.log_upper_tail_bound(inp, lam))
    rows = [{"which": which, "mu": args.mu, "xi": args.xi, "c": args.c,
             "kappa": kappa if kappa is not None else "", "s2": args.s2,
             "lambda": lam, "log_bound": logb, "bound": 1.0 if logb >= 0 else math.exp(logb)}]
    _emit(args, run, "tails", rows, {}, "tails.csv")


def cmd_tails_validate(args, run: Run):
    rows = []
    for cell in tails.validation_grid(args.grid, args.grid_seed):
        for which, xi in ((tails.LOWER, cell["xi_lower"]), (tails.UPPER, cell["xi_upper"])):
            src = RandomSource(args.seed, stream_id(_TAILS, cell["cell"],
                                                    0 if which == tails.LOWER else 1))
            v = tails.validate_bound(cell["p_m"], cell["q_l"], xi, cell["c"], args.trials,
                                     src, which=which)
            rows.append({"cell": cell["cell"], "which": which, "mu": v.mu, "s2": v.s2,
                         "kappa": v.kappa if v.kappa is not None else "", "xi": xi,
                         "c": cell["c"] if which == tails.LOWER else 0.0, "lambda": v.lam,
                         "trials": v.trials, "empirical_freq": v.empirical_freq,
                         "analytic_bound": v.analytic_bound,
                         "standard_error": v.standard_error, "holds": v.holds})
    path = out_path(args, "tails_validation.csv")
    meta = {**base_meta(args, path), "grid": args.grid, "grid_seed": args.grid_seed}
    run.add(write_csv(path, "tails_validation", rows, meta))
    held = sum(r["holds"] for r in rows)
    print(f"bound held in {held}/{len(rows)} cells")


def cmd_report(args, run: Run):
    src = args.in_dir if args.in_dir is not None else out_dir(args)
    rows, text = [], []
    for p in sorted(Path(src).glob("*.csv")):
        try:
            meta, data = read_csv(p)
        except (OSError, UnicodeDecodeError):
            continue
        schema = meta.get("schema", "")
        if schema.startswith("idla.scan_summary/"):
            text.append(f"== {p.name}: normalized errors (d = {data[0]['d'] if data else '?'})")
            text.append(f"{'n':>8} {'mean dI':>10} {'dI ratio':>10} {'mean dO':>10} {'dO ratio':>10}")
            for r in data:
                text.append(f"{r['n']:>8} {float(r['inner_mean']):10.4f} "
                            f"{float(r['inner_ratio']):10.4f} {float(r['outer_mean']):10.4f} "
                            f"{float(r['outer_ratio']):10.4f}")
                for m in ("inner_mean", "inner_ratio", "outer_mean", "outer_ratio"):
                    rows.append({"section": p.stem, "key": f"n={r['n']}", "metric": m,
                                 "value": r[m]})
        elif schema.startswith("idla.probe_fit/"):
            text.append(f"== {p.name}: log-frequency fits")
            for r in data:
                text.append(f"{r['probe']}: slope {r['slope']} vs {r['x_name']}, "
                            f"r2 {r['r2']}, zero cells {r['zero_count_cells']}")
                for m in ("slope", "intercept", "r2", "zero_count_cells"):
                    rows.append({"section": p.stem, "key": r["probe"], "metric": m,
                                 "value": r[m]})
        elif schema.startswith("idla.probe_"):
            text.append(f"== {p.name}: frequencies")
            for i, r in enumerate(data):
                text.append(f"row {i}: {r['successes']}/{r['trials']} = {r['frequency']} "
                            f"+- {r['wilson_halfwidth']}")
                for m in ("frequency", "wilson_halfwidth"):
                    rows.append({"section": p.stem, "key": f"row{i}", "metric": m,
                                 "value": r[m]})
    if not rows:
        raise PreconditionViolated(f"no scan or probe CSVs found in {src}")
    path = out_path(args, "report.csv")
    run.add(write_csv(path, "report", rows, base_meta(args, path)))
    tpath = path.with_suffix(".txt")
    tpath.write_text("\n".join(text) + "\n")
    run.add(tpath)


# ----------------------------------------------------------------- main

def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    apply_config(args, argv)
    run = Run(args, argv)
    try:
        args.func(args, run)
        run.finish()
    except PreconditionViolated as e:
        print(f"idla: precondition violated: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except BudgetExceeded as e:
        print(f"idla: budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except IDLAError as e:
        print(f"idla: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
