"""Command-line front end.

Subcommands::

    memhopf analyze    --config cfg   # conditions, thresholds, verdict
    memhopf curves     --config cfg   # bifurcation-curve scan CSVs
    memhopf normalform --config cfg   # K1/K2 classification record
    memhopf simulate   --config cfg   # trajectory export + diagnostics

Common flags: ``--config <path>``, ``--out <dir>``, ``--threads <n>``.
The environment variable ``MEMHOPF_LOG`` sets the log level (only
logging is environment-controlled).  Every error exits nonzero after a
single ``error[<code>] ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import simulator, spectral
from .config import get_float, get_int, get_str, parse_kv
from .errors import (BlowUpError, BranchConditionError, CflError, ConfigError,
                     DivisionHazardError, InconclusiveError, MemhopfError,
                     NoHopfPointError, ParameterError, SingularSolveError)
from .model import ModelParams, load_model_params, steady_state, linearize
from .normalform import normal_form
from .spectral import fmt_csv_float

log = logging.getLogger("memhopf")

_SECTIONS = {"analyze", "scan", "nf", "sim"}

_SECTION_KEYS = {
    "analyze": {"tau"},
    "scan": {"d21_min", "d21_max", "step"},
    "nf": {"d21", "n_c", "j", "source"},
    "sim": {"tau", "t_end", "n_x", "dt", "stride", "scheme", "window",
            "format", "ic", "ic.du", "ic.dv", "ic.n", "ic.amp_u", "ic.amp_v"},
}

_ERROR_CODES = {
    ConfigError: ("config", 2),
    ParameterError: ("parameter", 2),
    NoHopfPointError: ("no-hopf-point", 3),
    InconclusiveError: ("inconclusive", 3),
    CflError: ("cfl", 3),
    BlowUpError: ("blow-up", 3),
    BranchConditionError: ("branch-condition", 3),
    SingularSolveError: ("singular-solve", 3),
    DivisionHazardError: ("division-hazard", 3),
}


def _load_config(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    entries = parse_kv(text)
    params = load_model_params(text)
    for key, (_, lineno) in entries.items():
        if "." in key:
            section = key.split(".", 1)[0]
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section {section!r} in key {key!r}",
                                  lineno)
    return params, entries


def _section(entries, name):
    prefix = name + "."
    block = {k[len(prefix):]: v for k, v in entries.items()
             if k.startswith(prefix)}
    for key, (_, lineno) in block.items():
        if key not in _SECTION_KEYS[name]:
            raise ConfigError(f"unknown key {name}.{key}", lineno)
    return block


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit_report(lines, out_dir, filename) -> None:
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_dir is not None:
        (Path(out_dir) / filename).write_text(text)


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def cmd_analyze(params: ModelParams, entries, out_dir, threads) -> int:
    block = _section(entries, "analyze")
    tau = get_float(block, "tau", default=math.nan)
    lin = linearize(params)
    ss = steady_state(params)
    report = spectral.classify_conditions(lin, params)
    lines = [
        "command: analyze",
        f"variant: {params.variant.value}",
        f"u_star: {_fmt(ss.u_star)}",
        f"v_star: {_fmt(ss.v_star)}",
        f"a11: {_fmt(lin.a11)}", f"a12: {_fmt(lin.a12)}",
        f"a21: {_fmt(lin.a21)}", f"a22: {_fmt(lin.a22)}",
        f"b21: {_fmt(lin.b21)}",
        f"c_star: {_fmt(report.c_star)}",
        f"C0: {report.c0}", f"C1: {report.c1}", f"C11: {report.c11}",
        f"C2: {report.c2}", f"C21: {report.c21}", f"C3: {report.c3}",
    ]
    if report.d21_thresholds is not None:
        star_n = min(report.d21_thresholds, key=report.d21_thresholds.get)
        shown = sorted(report.d21_thresholds)[:max(8, star_n + 2)]
        for n in shown:
            lines.append(f"d21_threshold[{n}]: {_fmt(report.d21_thresholds[n])}")
        lines.append(f"d21_star: {_fmt(report.d21_star)}")
        lines.append(f"d21_star_mode: {star_n}")
        lines.append(f"index_set: {list(report.index_set)}")
    if report.n_star is not None:
        lines.append(f"n_star: {report.n_star}")
    if report.n1 is not None:
        lines.append(f"n1: {_fmt(report.n1)}")
        lines.append(f"n2: {_fmt(report.n2)}")
    if not math.isnan(tau):
        verdict = spectral.stability_verdict(params, tau)
        lines.append(f"tau: {_fmt(tau)}")
        lines.append(f"verdict: {verdict.state}")
        if verdict.tau_star is not None:
            lines.append(f"tau_star: {_fmt(verdict.tau_star)}")
        if verdict.state == "on_hopf_curve":
            lines.append(f"hopf_mode: {verdict.n}")
            lines.append(f"hopf_branch: {verdict.j}")
        if verdict.double_hopf:
            lines.append(f"double_hopf_modes: {[n for n, _ in verdict.minimizers]}")
    _emit_report(lines, out_dir, "analyze_report.txt")
    return 0


def cmd_curves(params: ModelParams, entries, out_dir, threads) -> int:
    block = _section(entries, "scan")
    lo = get_float(block, "d21_min")
    hi = get_float(block, "d21_max")
    step = get_float(block, "step", default=0.05)
    rows, crossings = spectral.hopf_curve_scan(params, (lo, hi), step,
                                               threads=threads)
    out = Path(out_dir) if out_dir is not None else Path(".")
    spectral.write_curve_csv(rows, out / "curves.csv")
    spectral.write_crossings_csv(crossings, out / "crossings.csv")
    if not rows:
        sys.stderr.write("warning[empty-range] no mode is above threshold "
                         "anywhere in the scanned d21 range\n")
    sys.stdout.write(f"curve rows: {len(rows)}\n")
    sys.stdout.write(f"crossings: {len(crossings)}\n")
    for d21, tau, n_a, n_b in crossings:
        sys.stdout.write(
            f"crossing: d21={fmt_csv_float(d21)} tau={fmt_csv_float(tau)} "
            f"modes=({n_a},{n_b})\n")
    return 0


def cmd_normalform(params: ModelParams, entries, out_dir, threads) -> int:
    block = _section(entries, "nf")
    d21 = get_float(block, "d21", default=math.nan)
    if not math.isnan(d21):
        params = replace(params, d21=d21)
    n_c = get_int(block, "n_c", default=-1)
    j = get_int(block, "j", default=0)
    source = get_str(block, "source", default="analytic",
                     choices={"analytic", "published"})
    res = normal_form(params, n_c=None if n_c < 0 else n_c, j=j, source=source)
    cls = f"{res.direction}-{res.orbit_stability}"
    lines = [
        "command: normalform",
        f"n_c: {res.n_c}",
        f"omega_nc: {_fmt(res.omega_nc)}",
        f"tau_c: {_fmt(res.tau_c)}",
        f"K1: {_fmt(res.K1)}",
        f"K2: {_fmt(res.K2)}",
        f"direction: {res.direction}",
        f"orbit_stability: {res.orbit_stability}",
        f"class: {cls}",
        f"coefficient_source: {source}",
    ]
    _emit_report(lines, out_dir, "normalform_report.txt")
    if out_dir is not None:
        with open(Path(out_dir) / "normalform.csv", "w") as fh:
            fh.write("n_c,omega_nc,tau_c,K1,K2,class\n")
            fh.write(f"{res.n_c},{fmt_csv_float(res.omega_nc)},"
                     f"{fmt_csv_float(res.tau_c)},{fmt_csv_float(res.K1)},"
                     f"{fmt_csv_float(res.K2)},{cls}\n")
    return 0


def _initial_conditions(params: ModelParams, block):
    ss = steady_state(params)
    kind = get_str(block, "ic", default="offset", choices={"offset", "mode"})
    if kind == "offset":
        du = get_float(block, "ic.du", default=0.01)
        dv = get_float(block, "ic.dv", default=0.01)
        return (lambda x, t: np.full_like(x, ss.u_star + du),
                lambda x, t: np.full_like(x, ss.v_star + dv))
    n = get_int(block, "ic.n")
    amp_u = get_float(block, "ic.amp_u")
    amp_v = get_float(block, "ic.amp_v")
    ell = params.ell
    return (lambda x, t: ss.u_star + amp_u * np.cos(n * x / ell),
            lambda x, t: ss.v_star + amp_v * np.cos(n * x / ell))


def cmd_simulate(params: ModelParams, entries, out_dir, threads) -> int:
    block = _section(entries, "sim")
    tau = get_float(block, "tau")
    t_end = get_float(block, "t_end", default=3000.0)
    n_x = get_int(block, "n_x", default=201)
    dt = get_float(block, "dt", default=0.02)
    stride = get_float(block, "stride", default=1.0)
    scheme = get_str(block, "scheme", default="imex", choices={"imex", "rk4"})
    window = get_float(block, "window", default=1000.0)
    fmt = get_str(block, "format", default="csv", choices={"csv", "binary"})
    grid = simulator.make_grid(params, n_x=n_x, dt=dt, t_end=t_end,
                               stride=stride)
    if scheme == "rk4":
        limit = simulator.cfl_limit(params, grid.dx)
        if dt > limit:
            raise CflError(f"dt={dt:g} violates the diffusive stability limit; "
                           f"use dt <= {limit:g}")
    initial = _initial_conditions(params, block)
    traj = simulator.run(params, tau, grid, initial, scheme=scheme)
    diag = simulator.diagnose(traj, window=window)
    out = Path(out_dir) if out_dir is not None else Path(".")
    if fmt == "csv":
        simulator.write_trajectory_csv(traj, out / "trajectory_u.csv",
                                       out / "trajectory_v.csv")
    else:
        simulator.write_trajectory_binary(traj, out / "trajectory.bin")
    lines = [
        "command: simulate",
        f"tau: {_fmt(tau)}",
        f"t_end: {_fmt(t_end)}",
        f"dt_effective: {_fmt(traj.meta['dt_effective'])}",
        f"converged_to_steady: {diag.converged_to_steady}",
        f"final_distance: {_fmt(diag.final_distance)}",
        f"amplitude_trend: {diag.amplitude_trend}",
        f"period_estimate: {_fmt(diag.period_estimate) if diag.period_estimate is not None else 'none'}",
        f"spatial_inhomogeneity: {_fmt(diag.spatial_inhomogeneity)}",
        f"n_peaks: {diag.n_peaks}",
        f"inconclusive: {diag.inconclusive}",
    ]
    _emit_report(lines, out_dir, "diagnostics.txt")
    return 0


_COMMANDS = {
    "analyze": cmd_analyze,
    "curves": cmd_curves,
    "normalform": cmd_normalform,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memhopf",
        description="Hopf bifurcation analysis for memory-delayed "
                    "cross-diffusion systems")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("MEMHOPF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        params, entries = _load_config(args.config)
        if args.out is not None:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](params, entries, args.out, args.threads)
    except MemhopfError as exc:
        for klass, (code, status) in _ERROR_CODES.items():
            if isinstance(exc, klass):
                sys.stderr.write(f"error[{code}] {exc}\n")
                return status
        sys.stderr.write(f"error[internal] {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
