"""Command-line front end: ``slogse {simulate,converge,props,norms,noise}``.

Exit codes: 0 success, 1 property violation, 2 usage or config error,
3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    EXACT_LEMMAS,
    LEMMAS,
    cauchy_sweep,
    inequality_scan,
    write_scan_csv,
    write_sweep_csv,
)
from .config import ConfigError, load_config, load_noise
from .grid import FieldFormatError, h1_norm, l2_norm, read_field
from .noise import empirical_moments, moments, sample_path, write_path
from .nonlinearity import energy, entropy_F, luxembourg_norm
from .solver import NumericalAbort, run, write_diagnostics_csv, write_states

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
MASS_TOL = 1e-10
MOMENT_PATHS = 200


class UsageError(Exception):
    pass


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_manifest(out: Path, args, seed, finished: str | None = None, status=None):
    if seed is not None:
        args._seed = seed
    manifest = {
        "command": args.command,
        "config": str(getattr(args, "config", None) or ""),
        "output_dir": str(out),
        "seed": getattr(args, "_seed", seed),
        "version": __version__,
        "started": args._started,
    }
    if finished:
        manifest["finished"] = finished
        manifest["exit_code"] = status
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, *parts):
    if not args.quiet:
        print(*parts)


def _plots():
    from . import plotting

    return plotting


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    solver = cfg.solver if args.seed is None else cfg.solver.replace(seed=args.seed)
    out = _outdir(args)
    _write_manifest(out, args, solver.seed)
    path = solver.noise_path()
    traj = run(solver, path, cfg.u0)
    write_diagnostics_csv(out / "diagnostics.csv", traj.diagnostics)
    write_path(out / "noise.npath", path)
    if cfg.write_states:
        write_states(out, traj)
    if cfg.plots:
        _plots().plot_diagnostics(traj.diagnostics, out / "diagnostics.png")
    drift = traj.diagnostics.mass_drift()
    _say(args, f"events={len(path)} mass_drift={drift:.3e} "
               f"h1_max={traj.diagnostics.h1.max():.6g}")
    return EXIT_OK if drift < MASS_TOL else EXIT_VIOLATION


def _eps_list(text: str | None, fallback) -> tuple[float, ...]:
    if text:
        try:
            values = tuple(float(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise UsageError(f"--eps-list: cannot parse {text!r}") from None
    else:
        values = tuple(fallback)
    if len(values) < 4:
        raise UsageError("--eps-list needs at least four values")
    if any(not 0 < v < 1 for v in values):
        raise UsageError("every eps must lie in (0, 1)")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise UsageError("--eps-list must be strictly decreasing")
    return values


def cmd_converge(args) -> int:
    cfg = load_config(args.config)
    eps_list = _eps_list(args.eps_list, cfg.eps_list)
    radius = cfg.radius if args.radius is None else args.radius
    if not radius > 0 or 2 * radius > cfg.solver.grid.ell / 2:
        raise UsageError(f"--radius must satisfy 0 < 2R <= ell/2, got {radius}")
    solver = cfg.solver if args.seed is None else cfg.solver.replace(seed=args.seed)
    out = _outdir(args)
    _write_manifest(out, args, solver.seed)
    report = cauchy_sweep(solver, eps_list, cfg.u0, R=radius, n_paths=cfg.n_paths)
    write_sweep_csv(out / "sweep.csv", report)
    with open(out / "sweep_eps.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "h1_max", "entropy_sup"])
        for e, h, s in zip(report.eps_list, report.h1_max, report.entropy_sup):
            writer.writerow([f"{e:.17g}", f"{h:.17g}", f"{s:.17g}"])
    if cfg.plots:
        _plots().plot_sweep(report, out / "sweep.png")
    _say(args, "D =", " ".join(f"{d:.4e}" for d in report.distances),
         f"order={report.order:.3f} monotone={report.monotone()}")
    return EXIT_OK if report.monotone() else EXIT_VIOLATION


def cmd_props(args) -> int:
    lemmas = LEMMAS if args.lemma == "all" else (args.lemma,)
    if args.lemma != "all" and args.lemma not in LEMMAS:
        raise UsageError(f"unknown lemma {args.lemma!r}; expected one of {', '.join(LEMMAS)} or all")
    if args.samples < 10**5:
        raise UsageError("--samples must be at least 100000")
    seed = 0 if args.seed is None else args.seed
    out = _outdir(args)
    _write_manifest(out, args, seed)
    status = EXIT_OK
    for lemma in lemmas:
        report = inequality_scan(lemma, args.samples, seed)
        write_scan_csv(out / f"scan_{lemma}.csv", report)
        _say(args, f"{lemma}: samples={report.samples} violations={report.violations} "
                   f"worst_slack={report.worst_slack:.3e}")
        if lemma in EXACT_LEMMAS and report.violations:
            status = EXIT_VIOLATION
    return status


def cmd_norms(args) -> int:
    try:
        u = read_field(args.field)
    except OSError as exc:
        raise UsageError(f"{args.field}: {exc.strerror}") from None
    except FieldFormatError as exc:
        raise UsageError(str(exc)) from None
    l2 = l2_norm(u)
    h1 = h1_norm(u)
    v = luxembourg_norm(u)
    rows = [("L2", l2), ("H1", h1), ("V", v), ("W", h1 + v),
            ("entropy", entropy_F(u)), ("energy", energy(u, args.lam))]
    for name, value in rows:
        print(f"{name} {value!r}")
    return EXIT_OK


def cmd_noise(args) -> int:
    spec, T = load_noise(args.config)
    seed = 0 if args.seed is None else args.seed
    out = _outdir(args)
    _write_manifest(out, args, seed)
    noise = sample_path(spec, T, seed)
    write_path(out / "path.npath", noise)

    _, mu2, mass = moments(spec)
    children = np.random.SeedSequence(seed).spawn(MOMENT_PATHS)
    ensemble = [sample_path(spec, T, int(c.generate_state(1, np.uint64)[0])) for c in children]
    mean_n, mean_sq, se_n, se_sq = empirical_moments(ensemble)
    expected = ((mean_n, mass * T, se_n), (mean_sq, mu2 * T, se_sq))
    ok = all(abs(obs - exp) <= 3 * se or (se == 0 and obs == exp) for obs, exp, se in expected)
    with open(out / "moments.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["quantity", "empirical", "expected", "std_error", "within_3sigma"])
        for name, (obs, exp, se) in zip(("count", "sum_sq_marks"), expected):
            within = abs(obs - exp) <= 3 * se or (se == 0 and obs == exp)
            writer.writerow([name, f"{obs:.17g}", f"{exp:.17g}", f"{se:.17g}", int(within)])
    _say(args, f"events={len(noise)} mean_count={mean_n:.4f} (expected {mass * T:.4f})")
    return EXIT_OK if ok else EXIT_VIOLATION


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slogse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"slogse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--quiet", action="store_true", help="suppress the summary line")

    common(sub.add_parser("simulate", help="integrate one noise path"))
    p = sub.add_parser("converge", help="eps sweep and Cauchy report")
    common(p)
    p.add_argument("--eps-list", default=None, help="comma-separated decreasing eps values")
    p.add_argument("--radius", type=float, default=None, help="localization radius R")
    p = sub.add_parser("props", help="randomized inequality scans")
    common(p, config=False)
    p.add_argument("--lemma", required=True, help=f"one of {', '.join(LEMMAS)} or all")
    p.add_argument("--samples", type=int, default=10**6)
    p = sub.add_parser("norms", help="norms of a CFLD1 field")
    p.add_argument("field", help="CFLD1 field file")
    p.add_argument("--lam", type=float, default=1.0, help="coupling used in the energy")
    p.add_argument("--quiet", action="store_true")
    common(sub.add_parser("noise", help="sample a Levy noise path"))
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "props": cmd_props,
    "norms": cmd_norms,
    "noise": cmd_noise,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._started = _now()
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a u64", file=sys.stderr)
        return EXIT_USAGE
    try:
        status = COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    if args.command != "norms" and (Path(args.out) / "manifest.json").exists():
        _write_manifest(Path(args.out), args, getattr(args, "seed", None), _now(), status)
    return status


if __name__ == "__main__":
    sys.exit(main())
