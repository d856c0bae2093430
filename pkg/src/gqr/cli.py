"""Command line interface.

Four subcommands: ``fit`` evaluates a surface on a grid, ``cc`` wraps it
in a simultaneous corridor, ``compare`` contrasts two samples through
corridor exceedance, and ``simulate`` runs seeded coverage studies.
Every command writes its artifacts atomically with fixed numeric
formatting, so a rerun with the same configuration and seed reproduces
every output file byte for byte.  Wall-clock timing goes to stderr only.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .bandwidth import estimation_bandwidth, kappa_for
from .bootstrap import BootstrapConfig
from .compare import common_grid, compare_groups, group_corridor, response_ks
from .config import RunConfig, VALID_METHODS, build_run_config, load_config_file
from .errors import ConfigError, DataError, GqrError, NumericalError
from .estimator import Dataset, GridSpec, fit_surface
from .io import csv_header, read_dataset, write_csv, write_metadata, write_text
from .kernels import ProductKernel, QUARTIC
from .losses import FAMILIES, TaskSpec
from .simulate import CellSpec, coverage_study

BOOT_VARIANTS = ("auto", "standard", "quantile-ratio")


def _parse_floats(text: str, flag: str) -> tuple:
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        try:
            out.append(float(piece))
        except ValueError:
            raise ConfigError("%s: could not parse %r as a number" % (flag, piece)) from None
    if not out:
        raise ConfigError("%s: no values given" % flag)
    return tuple(out)


def _parse_grid(text: str):
    """LO:HI:POINTS segments, comma-separated, one per covariate."""
    lo, hi, pts = [], [], []
    for segment in text.split(","):
        parts = segment.strip().split(":")
        if len(parts) != 3:
            raise ConfigError(
                "--grid: each segment must be LO:HI:POINTS, got %r" % segment.strip()
            )
        try:
            lo.append(float(parts[0]))
            hi.append(float(parts[1]))
            pts.append(int(parts[2]))
        except ValueError:
            raise ConfigError("--grid: could not parse segment %r" % segment.strip()) from None
    return tuple(lo), tuple(hi), tuple(pts)


def _overrides(args) -> dict:
    ov = {}
    simple = {
        "family": "family",
        "alpha": "alpha",
        "method": "method",
        "boot_b": "n_boot",
        "seed": "seed",
        "variant": "variant",
        "out": "out_dir",
        "y_column": "y_column",
        "trials": "n_trials",
        "master_seed": "master_seed",
        "workers": "workers",
    }
    for attr, field in simple.items():
        value = getattr(args, attr, None)
        if value is not None:
            ov[field] = value
    if getattr(args, "tau", None):
        ov["taus"] = tuple(args.tau)
    if getattr(args, "x_columns", None) is not None:
        ov["x_columns"] = tuple(
            name.strip() for name in args.x_columns.split(",") if name.strip()
        )
    if getattr(args, "bandwidth", None) is not None:
        ov["h"] = _parse_floats(args.bandwidth, "--bandwidth")
    if getattr(args, "grid", None) is not None:
        ov["grid_lo"], ov["grid_hi"], ov["grid_points"] = _parse_grid(args.grid)
    if getattr(args, "full_scale", None):
        ov["full_scale"] = True
    if getattr(args, "plot_script", None):
        ov["plot_script"] = True
    return ov


def _load_cfg(args) -> RunConfig:
    file_config = load_config_file(args.config) if getattr(args, "config", None) else {}
    return build_run_config(file_config, _overrides(args))


def _broadcast(values, dim: int, what: str) -> tuple:
    vals = tuple(values)
    if len(vals) == 1:
        return vals * dim
    if len(vals) != dim:
        raise ConfigError("%s needs 1 or %d values, got %d" % (what, dim, len(vals)))
    return vals


def _resolve_grid(cfg: RunConfig, data: Dataset) -> GridSpec:
    """Evaluation grid: explicit config, else the sample range trimmed 10%."""
    dim = data.dim
    points = (20,) * dim
    if cfg.grid_points is not None:
        points = tuple(int(p) for p in _broadcast(cfg.grid_points, dim, "grid points"))
    if cfg.grid_lo is None and cfg.grid_hi is None:
        ranges = []
        for j in range(dim):
            lo = float(data.x[:, j].min())
            hi = float(data.x[:, j].max())
            if hi <= lo:
                raise DataError("covariate %d is constant; cannot build a grid" % j)
            pad = 0.1 * (hi - lo)
            ranges.append((lo + pad, hi - pad))
        return GridSpec(tuple(ranges), points)
    if cfg.grid_lo is None or cfg.grid_hi is None:
        raise ConfigError("grid needs both lo and hi bounds (or neither)")
    lo = _broadcast(cfg.grid_lo, dim, "grid lo")
    hi = _broadcast(cfg.grid_hi, dim, "grid hi")
    try:
        return GridSpec(tuple(zip(lo, hi)), points)
    except ValueError as exc:
        raise ConfigError("grid: %s" % exc) from None


def _resolve_columns(cfg: RunConfig, path) -> tuple:
    """Covariate column names, defaulting to every column but the response."""
    if cfg.x_columns:
        return tuple(cfg.x_columns)
    names = tuple(name for name in csv_header(path) if name != cfg.y_column)
    if not names:
        raise DataError("%s has no covariate columns besides %r" % (path, cfg.y_column))
    return names


def _manual_h(cfg: RunConfig, dim: int):
    if cfg.bandwidth_mode != "manual":
        return None
    return _broadcast(cfg.h, dim, "bandwidth")


def _taus(cfg: RunConfig) -> tuple:
    return (0.5,) if cfg.family == "mean" else cfg.taus


def _suffix(taus, tau: float) -> str:
    return "" if len(taus) == 1 else "_tau%g" % tau


def _outpath(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


def _config_echo(cfg: RunConfig, command: str, inputs: dict) -> dict:
    echo = {
        "command": command,
        "tool_version": __version__,
        "inputs": inputs,
        "family": cfg.family,
        "taus": list(_taus(cfg)),
        "alpha": cfg.alpha,
        "x_columns": list(cfg.x_columns),
        "y_column": cfg.y_column,
        "bandwidth": {
            "mode": cfg.bandwidth_mode,
            "h": None if cfg.h is None else list(cfg.h),
            "delta": cfg.delta,
            "h1_inflation": cfg.h1_inflation,
            "tail_inflation": cfg.tail_inflation,
        },
    }
    if command in ("cc", "compare"):
        echo["method"] = cfg.method
        echo["bootstrap"] = {
            "n_boot": cfg.n_boot,
            "seed": cfg.seed,
            "variant": cfg.variant,
            "center": cfg.center,
        }
    return echo


def _grid_echo(grid: GridSpec) -> dict:
    return {
        "ranges": [[a, b] for a, b in grid.ranges],
        "counts": list(grid.counts),
    }


def _corridor_rows(grid: GridSpec, theta, lower=None, upper=None):
    pts = grid.points()
    cols = [pts[:, j] for j in range(pts.shape[1])] + [np.asarray(theta)]
    if lower is not None:
        cols.extend([np.asarray(lower), np.asarray(upper)])
    return np.column_stack(cols)


def _emit(path):
    print("wrote %s" % path)


def cmd_fit(args) -> int:
    cfg = _load_cfg(args)
    xnames = _resolve_columns(cfg, args.data)
    data = read_dataset(args.data, xnames, cfg.y_column)
    grid = _resolve_grid(cfg, data)
    kernel = ProductKernel(QUARTIC, data.dim)
    manual = _manual_h(cfg, data.dim)
    taus = _taus(cfg)

    derived = {}
    for tau in taus:
        spec = TaskSpec(cfg.family, tau)
        h = np.asarray(manual, dtype=float) if manual is not None else estimation_bandwidth(
            data, spec, kernel.base, cfg.delta
        )
        fit = fit_surface(data, spec, kernel, h, grid)
        path = _outpath(cfg, "fit%s.csv" % _suffix(taus, tau))
        write_csv(path, list(xnames) + ["theta_hat"], _corridor_rows(grid, fit.theta))
        _emit(path)
        derived["tau=%g" % tau] = {
            "h": [float(v) for v in h],
            "kappa": kappa_for(h, data.n),
        }

    meta = _config_echo(cfg, "fit", {"data": args.data, "n": data.n})
    meta["grid"] = _grid_echo(grid)
    meta["derived"] = derived
    path = _outpath(cfg, "metadata.json")
    write_metadata(path, meta)
    _emit(path)
    return 0


def _plot_script(csv_names, dim: int, xnames) -> str:
    lines = ["# gnuplot script: fitted surface with corridor bands"]
    if dim > 2:
        lines.append("# plotting is supported for 1 or 2 covariates only")
        return "\n".join(lines) + "\n"
    lines.append("set datafile separator ','")
    lines.append("set key autotitle columnhead")
    if dim == 2:
        lines.append("set dgrid3d")
        lines.append("set hidden3d")
        lines.append("set xlabel '%s'" % xnames[0])
        lines.append("set ylabel '%s'" % xnames[1])
        for name in csv_names:
            lines.append(
                "splot '%s' using 1:2:3 with lines, '' using 1:2:4 with lines, "
                "'' using 1:2:5 with lines" % name
            )
            lines.append("pause -1 '%s: press enter'" % name)
    else:
        lines.append("set xlabel '%s'" % xnames[0])
        for name in csv_names:
            lines.append(
                "plot '%s' using 1:2 with lines, '' using 1:3 with lines, "
                "'' using 1:4 with lines" % name
            )
            lines.append("pause -1 '%s: press enter'" % name)
    return "\n".join(lines) + "\n"


def cmd_cc(args) -> int:
    cfg = _load_cfg(args)
    xnames = _resolve_columns(cfg, args.data)
    data = read_dataset(args.data, xnames, cfg.y_column)
    grid = _resolve_grid(cfg, data)
    manual = _manual_h(cfg, data.dim)
    taus = _taus(cfg)
    tail = bool(cfg.tail_inflation) if cfg.tail_inflation is not None else False

    corridor_meta = {}
    csv_names = []
    for ti, tau in enumerate(taus):
        spec = TaskSpec(cfg.family, tau)
        boot = None
        if cfg.method == "bootstrap":
            boot = BootstrapConfig(
                n_boot=cfg.n_boot, seed=(cfg.seed, ti), variant=cfg.variant, center=cfg.center
            )
        corr = group_corridor(
            data,
            spec,
            grid,
            method=cfg.method,
            alpha=cfg.alpha,
            h=manual,
            delta=cfg.delta,
            h1_inflation=cfg.h1_inflation,
            tail_inflation=tail,
            boot=boot,
        )
        name = "cc%s.csv" % _suffix(taus, tau)
        path = _outpath(cfg, name)
        write_csv(
            path,
            list(xnames) + ["theta_hat", "lower", "upper"],
            _corridor_rows(grid, corr.theta, corr.lower, corr.upper),
        )
        _emit(path)
        csv_names.append(name)
        corridor_meta["tau=%g" % tau] = corr.metadata

    meta = _config_echo(cfg, "cc", {"data": args.data, "n": data.n})
    meta["grid"] = _grid_echo(grid)
    meta["corridors"] = corridor_meta
    path = _outpath(cfg, "metadata.json")
    write_metadata(path, meta)
    _emit(path)

    if cfg.plot_script:
        path = _outpath(cfg, "plot.gp")
        write_text(path, _plot_script(csv_names, grid.dim, xnames))
        _emit(path)
    return 0


def cmd_compare(args) -> int:
    cfg = _load_cfg(args)
    xnames = _resolve_columns(cfg, args.control)
    data0 = read_dataset(args.control, xnames, cfg.y_column)
    data1 = read_dataset(args.treatment, xnames, cfg.y_column)
    manual = _manual_h(cfg, data0.dim)
    taus = _taus(cfg)

    if cfg.grid_lo is not None or cfg.grid_hi is not None:
        grid = _resolve_grid(cfg, data0)
    else:
        points = 20
        if cfg.grid_points is not None:
            points = _broadcast(cfg.grid_points, data0.dim, "grid points")
        grid = common_grid(data0.x, data1.x, points=points)

    grid, comparisons = compare_groups(
        data0,
        data1,
        cfg.family,
        taus,
        alpha=cfg.alpha,
        grid=grid,
        method=cfg.method,
        h=manual,
        delta=cfg.delta,
        h1_inflation=cfg.h1_inflation,
        tail_inflation=cfg.tail_inflation,
        n_boot=cfg.n_boot,
        seed=cfg.seed,
        variant=cfg.variant,
        center=cfg.center,
    )

    ks_stat, ks_pvalue = response_ks(data0.y, data1.y)
    summary = [
        "two-group comparison: group 0 = %s (n=%d), group 1 = %s (n=%d)"
        % (args.control, data0.n, args.treatment, data1.n),
        "family=%s, alpha=%g, method=%s" % (cfg.family, cfg.alpha, cfg.method),
        "unconditional two-sample KS on responses: D=%.6g, p=%.6g "
        "(covariate-free convenience check)" % (ks_stat, ks_pvalue),
    ]
    corridor_meta = {}
    for comp in comparisons:
        suffix = "_tau%g" % comp.tau
        for gi, corr in ((0, comp.corridor0), (1, comp.corridor1)):
            path = _outpath(cfg, "group%d_cc%s.csv" % (gi, suffix))
            write_csv(
                path,
                list(xnames) + ["theta_hat", "lower", "upper"],
                _corridor_rows(grid, corr.theta, corr.lower, corr.upper),
            )
            _emit(path)
        rows = np.column_stack(
            [
                grid.points(),
                comp.qte,
                comp.exceed_hi.astype(float),
                comp.exceed_lo.astype(float),
                comp.overlap.astype(float),
            ]
        )
        path = _outpath(cfg, "comparison%s.csv" % suffix)
        write_csv(
            path,
            list(xnames) + ["qte", "exceed_hi", "exceed_lo", "overlap"],
            rows,
        )
        _emit(path)
        summary.append(comp.summary_line())
        corridor_meta["tau=%g" % comp.tau] = {
            "group0": comp.corridor0.metadata,
            "group1": comp.corridor1.metadata,
        }

    path = _outpath(cfg, "summary.txt")
    write_text(path, "\n".join(summary) + "\n")
    _emit(path)

    meta = _config_echo(
        cfg,
        "compare",
        {"group0": args.control, "n0": data0.n, "group1": args.treatment, "n1": data1.n},
    )
    meta["grid"] = _grid_echo(grid)
    meta["ks_test"] = {"statistic": ks_stat, "pvalue": ks_pvalue}
    meta["corridors"] = corridor_meta
    path = _outpath(cfg, "metadata.json")
    write_metadata(path, meta)
    _emit(path)
    return 0


FULL_SCALE_SIGMA0 = (0.2, 0.5, 0.7)
FULL_SCALE_N = (100, 300, 500)
FULL_SCALE_TAU = (0.2, 0.5, 0.8)


def _cell_from_dict(entry: dict) -> CellSpec:
    kw = dict(entry)
    if "methods" in kw:
        methods = tuple(str(m) for m in kw["methods"])
        for m in methods:
            if m not in ("asymptotic", "bootstrap"):
                raise ConfigError("cell method must be asymptotic or bootstrap, got %r" % m)
        if not methods:
            raise ConfigError("cell methods list is empty")
        kw["methods"] = methods
    if "h" in kw:
        h = kw["h"]
        kw["h"] = tuple(float(v) for v in (h if isinstance(h, list) else [h]))
    for name in ("tau", "sigma0", "alpha", "h1_inflation"):
        if name in kw:
            kw[name] = float(kw[name])
    for name in ("n", "n_boot"):
        if name in kw:
            kw[name] = int(kw[name])
    try:
        cell = CellSpec(**kw)
        cell.task()
        cell.dgp()
    except (TypeError, ValueError) as exc:
        raise ConfigError("bad simulate cell %r: %s" % (entry, exc)) from None
    if cell.n_boot < 100:
        raise ConfigError("cell n_boot must be at least 100, got %d" % cell.n_boot)
    return cell


def _cells_from_config(cfg: RunConfig) -> list:
    if cfg.full_scale:
        cells = []
        for hetero in (False, True):
            for sigma0 in FULL_SCALE_SIGMA0:
                for n in FULL_SCALE_N:
                    for tau in FULL_SCALE_TAU:
                        cells.append(
                            CellSpec(
                                family="quantile",
                                tau=tau,
                                n=n,
                                sigma0=sigma0,
                                heteroscedastic=hetero,
                            )
                        )
        return cells
    if cfg.cells:
        return [_cell_from_dict(entry) for entry in cfg.cells]
    # no cells configured: one smoke-test cell with library defaults
    return [CellSpec()]


_REPORT_HEADER = [
    "family",
    "tau",
    "n",
    "sigma0",
    "heteroscedastic",
    "method",
    "n_trials",
    "n_failed",
    "coverage",
    "mean_volume",
]


def _report_rows(results) -> list:
    rows = []
    for res in results:
        cell = res.cell
        for method in cell.methods:
            if method not in res.coverage:
                continue
            rows.append(
                [
                    cell.family,
                    "%g" % cell.tau,
                    "%d" % cell.n,
                    "%g" % cell.sigma0,
                    "%d" % int(cell.heteroscedastic),
                    method,
                    "%d" % res.n_trials,
                    "%d" % res.n_failed,
                    res.coverage[method],
                    res.mean_volume[method],
                ]
            )
    return rows


def _format_table(rows) -> str:
    header = [
        "family",
        "tau",
        "n",
        "sigma0",
        "hetero",
        "method",
        "trials",
        "failed",
        "coverage",
        "volume",
    ]
    body = [
        [
            row[0],
            row[1],
            row[2],
            row[3],
            "yes" if row[4] == "1" else "no",
            row[5],
            row[6],
            row[7],
            "%.3f" % row[8],
            "%.4f" % row[9],
        ]
        for row in rows
    ]
    widths = [max(len(header[j]), max((len(r[j]) for r in body), default=0)) for j in range(10)]
    lines = [
        "  ".join(header[j].ljust(widths[j]) for j in range(10)),
        "  ".join("-" * widths[j] for j in range(10)),
    ]
    for r in body:
        lines.append("  ".join(r[j].ljust(widths[j]) for j in range(10)))
    return "\n".join(lines) + "\n"


def _cell_echo(cell: CellSpec) -> dict:
    echo = {
        "family": cell.family,
        "tau": cell.tau,
        "n": cell.n,
        "sigma0": cell.sigma0,
        "heteroscedastic": cell.heteroscedastic,
        "alpha": cell.alpha,
        "n_boot": cell.n_boot,
        "methods": list(cell.methods),
        "variant": cell.variant,
        "h1_inflation": cell.h1_inflation,
        "h": None if cell.h is None else list(cell.h),
    }
    if cell.h is not None:
        echo["kappa"] = kappa_for(np.asarray(cell.h), cell.n)
    return echo


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    cells = _cells_from_config(cfg)

    start = time.monotonic()
    results = coverage_study(cells, cfg.n_trials, cfg.master_seed, cfg.workers)
    elapsed = time.monotonic() - start
    print("coverage study: %d cells x %d trials in %.1f s" % (len(cells), cfg.n_trials, elapsed), file=sys.stderr)

    rows = _report_rows(results)
    path = _outpath(cfg, "coverage_report.csv")
    write_csv(path, _REPORT_HEADER, rows)
    _emit(path)

    table = _format_table(rows)
    path = _outpath(cfg, "coverage_table.txt")
    write_text(path, table)
    _emit(path)
    print(table, end="")

    meta = {
        "command": "simulate",
        "tool_version": __version__,
        "n_trials": cfg.n_trials,
        "master_seed": cfg.master_seed,
        "full_scale": bool(cfg.full_scale),
        "cells": [_cell_echo(cell) for cell in cells],
        "grid": {"lo": cells[0].grid_lo, "hi": cells[0].grid_hi, "points": cells[0].grid_points},
    }
    path = _outpath(cfg, "metadata.json")
    write_metadata(path, meta)
    _emit(path)
    return 0


def _add_common(sp, corridor: bool):
    sp.add_argument("--config", metavar="FILE", help="TOML configuration file")
    sp.add_argument("--family", choices=FAMILIES)
    sp.add_argument(
        "--tau", action="append", type=float, metavar="T", help="level; repeat for several"
    )
    sp.add_argument("--alpha", type=float, metavar="A", help="corridor miss probability")
    sp.add_argument(
        "--grid",
        metavar="LO:HI:PTS[,...]",
        help="per-covariate grid segments; one segment broadcasts to all",
    )
    sp.add_argument(
        "--bandwidth",
        metavar="H[,H2...]",
        help="manual estimation bandwidths; one value broadcasts to all",
    )
    sp.add_argument("--x-columns", metavar="A,B,...", help="covariate column names")
    sp.add_argument("--y-column", metavar="NAME", help="response column name")
    sp.add_argument("--out", metavar="DIR", help="output directory (default '.')")
    if corridor:
        sp.add_argument("--method", choices=VALID_METHODS)
        sp.add_argument("--boot-B", dest="boot_b", type=int, metavar="B")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--variant", choices=BOOT_VARIANTS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gqr",
        description="Kernel quantile/expectile/mean surfaces with simultaneous confidence corridors.",
    )
    parser.add_argument("--version", action="version", version="gqr " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="estimate the surface on a grid")
    p_fit.add_argument("data", metavar="DATA.csv")
    _add_common(p_fit, corridor=False)

    p_cc = sub.add_parser("cc", help="surface plus simultaneous confidence corridor")
    p_cc.add_argument("data", metavar="DATA.csv")
    _add_common(p_cc, corridor=True)
    p_cc.add_argument(
        "--plot-script", action="store_true", default=None, help="also write a gnuplot script"
    )

    p_cmp = sub.add_parser("compare", help="two-group corridor comparison")
    p_cmp.add_argument("control", metavar="GROUP0.csv")
    p_cmp.add_argument("treatment", metavar="GROUP1.csv")
    _add_common(p_cmp, corridor=True)

    p_sim = sub.add_parser("simulate", help="seeded coverage study")
    p_sim.add_argument("--config", metavar="FILE", help="TOML configuration file")
    p_sim.add_argument("--trials", type=int, metavar="R", help="trials per cell")
    p_sim.add_argument("--master-seed", type=int, metavar="S")
    p_sim.add_argument("--workers", type=int, metavar="W", help="process count (or GQR_THREADS)")
    p_sim.add_argument(
        "--full-scale",
        action="store_true",
        default=None,
        help="full benchmark matrix instead of configured cells",
    )
    p_sim.add_argument("--out", metavar="DIR", help="output directory (default '.')")

    return parser


_HANDLERS = {
    "fit": cmd_fit,
    "cc": cmd_cc,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except DataError as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return 3
    except NumericalError as exc:
        print("numerical error: %s" % exc, file=sys.stderr)
        return 4
    except GqrError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 4
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
