"""``noklab`` command line: eigenvalues, energies, optimal bubble counts, simulations.

Exit status is 0 on success, 2 for usage or parameter errors and 3 for
numerical failures. Every subcommand accepts ``--config FILE`` with
``key=value`` lines; explicit flags win over file values.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .energy import DEFAULT_TRUNCATION, EnergyParams, f_infinity, repulsion_table
from .errors import NoklabError, NumericalError, ParameterError
from .io import RunManifest, config_text, read_config, write_csv
from .kernels import (
    ALPHA_STAR_BRACKET,
    Family,
    KernelSpec,
    alpha_star,
    alpha_star_residual,
    eigenvalue,
    eigenvalue_limit,
)
from .optimal import CapLimitedWarning, delta_effect_report, delta_sweep, resolve_jobs
from .simulation import SolverConfig, detect_bubbles, evolve, init_random

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _kernel_flags(p, delta_default=None):
    g = p.add_argument_group("kernel")
    g.add_argument("--kernel", choices=[f.value for f in Family], default="power", help="kernel family (default: power)")
    g.add_argument("--alpha", type=float, default=None, help="power-kernel exponent in (0,1) or (1,3)")
    g.add_argument(
        "--delta",
        type=float,
        default=delta_default,
        help="horizon in (0, pi]; screening constant for screened; ignored for local (default: %(default)s)",
    )


def _common_flags(p, output=True):
    p.add_argument("--config", default=None, help="key=value file; explicit flags override it")
    if output:
        p.add_argument("-o", "--output", default=None, help="CSV path (default: stdout)")
    p.add_argument("--manifest", default=None, help="run manifest JSON path (default: next to the output)")


def _jobs_flag(p):
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: $NOKLAB_JOBS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noklab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("eig", help="eigenvalues lambda(n) of a kernel")
    _kernel_flags(p)
    p.add_argument("--nmin", type=float, default=1.0, help="first mode (default: %(default)s)")
    p.add_argument("--nmax", type=float, default=100.0, help="last mode (default: %(default)s)")
    p.add_argument("--continuum", action="store_true", help="evaluate on a dense real grid instead of integers")
    p.add_argument("--points", type=int, default=2001, help="grid size with --continuum (default: %(default)s)")
    _common_flags(p)

    p = sub.add_parser("alpha-star", help="critical power-kernel exponent by bisection")
    p.add_argument("--tol", type=float, default=1e-8, help="bracket width and residual tolerance (default: %(default)s)")
    _common_flags(p, output=False)

    p = sub.add_parser("energy", help="sharp-interface energy of the equal N-bubble state")
    _kernel_flags(p)
    p.add_argument("--omega", type=float, default=0.3, help="volume fraction in (0, 1/2] (default: %(default)s)")
    p.add_argument("--gamma", type=float, default=1.0, help="repulsion strength >= 0 (default: %(default)s)")
    p.add_argument("--nmin", type=float, default=1.0, help="first N (default: %(default)s)")
    p.add_argument("--nmax", type=float, default=50.0, help="last N (default: %(default)s)")
    p.add_argument("--continuum", action="store_true", help="treat N as a real variable on a dense grid")
    p.add_argument("--points", type=int, default=2001, help="grid size with --continuum (default: %(default)s)")
    p.add_argument("--truncation", type=int, default=DEFAULT_TRUNCATION, help="series terms M (default: %(default)s)")
    _common_flags(p)

    p = sub.add_parser("nstar", help="optimal bubble count over a gamma grid (and optional delta grid)")
    _kernel_flags(p)
    p.add_argument("--omega", type=float, default=0.3, help="volume fraction (default: %(default)s)")
    p.add_argument("--gamma-min", type=float, default=1.0, help="smallest gamma (default: %(default)s)")
    p.add_argument("--gamma-max", type=float, default=1e6, help="largest gamma (default: %(default)s)")
    p.add_argument("--gamma-points", type=int, default=100, help="log-spaced gamma points (default: %(default)s)")
    p.add_argument("--gammas", type=float_list, default=None, help="explicit comma-separated gamma grid")
    p.add_argument("--deltas", type=float_list, default=None, help="comma-separated deltas; 0 = local baseline")
    p.add_argument("--scan-cap", type=int, default=None, help="largest N scanned (default: max(200, ceil(4 pi/delta)))")
    p.add_argument("--truncation", type=int, default=DEFAULT_TRUNCATION, help="series terms M (default: %(default)s)")
    _jobs_flag(p)
    _common_flags(p)

    p = sub.add_parser("delta-effect", help="promotion/demotion diagnostics as delta varies")
    _kernel_flags(p, delta_default=None)
    p.add_argument("--omega", type=float, default=0.3, help="volume fraction (default: %(default)s)")
    p.add_argument("--gamma", type=float, required=False, default=None, help="repulsion strength (required)")
    p.add_argument("--deltas", type=float_list, default=None, help="ascending comma-separated deltas (required)")
    p.add_argument("--scan-cap", type=int, default=None, help="largest N scanned")
    p.add_argument("--truncation", type=int, default=DEFAULT_TRUNCATION, help="series terms M (default: %(default)s)")
    _jobs_flag(p)
    _common_flags(p)

    p = sub.add_parser("simulate", help="diffuse-interface gradient flow from a random start")
    _kernel_flags(p)
    p.add_argument("--omega", type=float, default=0.3, help="volume fraction in (0,1) (default: %(default)s)")
    p.add_argument("--gamma", type=float, default=0.0, help="repulsion strength (default: %(default)s)")
    p.add_argument("--grid-points", type=int, default=1024, help="power of two (default: %(default)s)")
    p.add_argument("--epsilon", type=float, default=None, help="interface width (default: 10*dx)")
    p.add_argument("--dt", type=float, default=1e-3, help="time step (default: %(default)s)")
    p.add_argument("--max-steps", type=int, default=200000, help="step limit (default: %(default)s)")
    p.add_argument("--steady-tol", type=float, default=1e-7, help="max|du|/dt stop criterion (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--noise-amp", type=float, default=0.1, help="initial noise amplitude (default: %(default)s)")
    p.add_argument("--dealias", action="store_true", help="apply the 2/3 rule to the double-well term")
    p.add_argument("--threshold", type=float, default=0.5, help="bubble detection level (default: %(default)s)")
    p.add_argument("--record-every", type=int, default=1000, help="trajectory row interval (default: %(default)s)")
    p.add_argument(
        "--snapshot-every", type=int, default=0, help="field snapshot interval in steps; 0 = first and last only"
    )
    p.add_argument("--out-dir", default=None, help="output directory (required)")
    p.add_argument("--config", default=None, help="key=value file; explicit flags override it")
    p.add_argument("--manifest", default=None, help="manifest path (default: OUT_DIR/manifest.json)")
    return parser


def _config_argv(parser: argparse.ArgumentParser, command: str, cfg: dict[str, str]) -> list[str]:
    """Turn config entries into flags placed before the real ones, so the real ones win."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    argv: list[str] = []
    for key, value in cfg.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {command}")
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(flag)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects true/false, got {value!r}")
        else:
            argv.append(f"{flag}={value}")
    return argv


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        extra = _config_argv(parser, args.command, read_config(args.config))
        idx = argv.index(args.command) + 1
        args = parser.parse_args(argv[:idx] + extra + argv[idx:])
    return args


def kernel_from_args(args, delta=None) -> KernelSpec:
    fam = Family(args.kernel)
    d = args.delta if delta is None else delta
    if fam is Family.POWER and args.alpha is None:
        raise ParameterError("--alpha is required for the power kernel")
    if fam is not Family.POWER and args.alpha is not None:
        raise ParameterError(f"--alpha does not apply to the {fam.value} kernel")
    if d is None:
        if fam in (Family.SCREENED, Family.LOCAL):
            d = 0.0
        else:
            raise ParameterError(f"--delta is required for the {fam.value} kernel")
    return KernelSpec(fam, d, args.alpha)


def _grid(lo, hi, continuum, points, name):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ParameterError(f"{name} range must satisfy min <= max")
    if continuum:
        if points < 2:
            raise ParameterError("--points must be >= 2")
        return np.linspace(lo, hi, points)
    values = np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=float)
    if len(values) == 0:
        raise ParameterError(f"{name} range contains no integers")
    return values


def cmd_eig(args, outputs):
    kernel = kernel_from_args(args)
    if args.nmin < 0:
        raise ParameterError("--nmin must be >= 0")
    n = _grid(args.nmin, args.nmax, args.continuum, args.points, "n")
    lam = eigenvalue(kernel, n)
    lim = eigenvalue_limit(kernel)
    rows = ((v if args.continuum else int(v), l, lim.value) for v, l in zip(n, lam))
    _emit(args, outputs, ["n", "lambda", "lambda_inf"], rows)


def cmd_alpha_star(args, outputs):
    value = alpha_star(args.tol)
    lo, hi = ALPHA_STAR_BRACKET
    print(f"alpha_star={value:.17g}")
    print(f"residual={alpha_star_residual(value):.17g}")
    print(f"bracket={lo:g},{hi:g}")
    print(f"bracket_residuals={alpha_star_residual(lo):.17g},{alpha_star_residual(hi):.17g}")


def cmd_energy(args, outputs):
    kernel = kernel_from_args(args)
    params = EnergyParams(args.gamma, args.omega, kernel, args.truncation)
    n = _grid(args.nmin, args.nmax, args.continuum, args.points, "N")
    f, _ = repulsion_table(n, params)
    f_inf = f_infinity(params).value
    scale = 2.0 * params.gamma / math.pi
    rows = (
        (v if args.continuum else int(v), 2.0 * v, scale * fv, 2.0 * v + scale * fv, fv, f_inf) for v, fv in zip(n, f)
    )
    _emit(args, outputs, ["N", "E_att", "E_rep", "E_tot", "F", "F_inf"], rows)


def _gamma_grid(args):
    if args.gammas:
        return np.asarray(args.gammas, dtype=float)
    if not (0 < args.gamma_min < args.gamma_max) or args.gamma_points < 2:
        raise ParameterError("need 0 < --gamma-min < --gamma-max and --gamma-points >= 2")
    return np.logspace(math.log10(args.gamma_min), math.log10(args.gamma_max), args.gamma_points)


def cmd_nstar(args, outputs):
    grid = _gamma_grid(args)
    deltas = args.deltas if args.deltas else [args.delta]
    base = kernel_from_args(args, delta=next((d for d in deltas if d), None))
    if not args.deltas:
        deltas = [base.delta]
    jobs = resolve_jobs(args.jobs)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CapLimitedWarning)
        sweeps = delta_sweep(base, args.omega, grid, deltas, args.scan_cap, args.truncation, jobs)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = [
        (float(g), float(d), int(ns), sweep.bounded)
        for d, sweep in zip(deltas, sweeps)
        for g, ns in zip(sweep.gamma_grid, sweep.n_star_values)
    ]
    _emit(args, outputs, ["gamma", "delta", "n_star", "bounded"], rows)


def cmd_delta_effect(args, outputs):
    if args.gamma is None or not args.deltas:
        raise ParameterError("delta-effect needs --gamma and --deltas")
    kernel = kernel_from_args(args, delta=args.deltas[0])
    report = delta_effect_report(
        kernel, args.omega, args.gamma, args.deltas, args.scan_cap, args.truncation, resolve_jobs(args.jobs)
    )
    header = [
        "delta", "n_star", "n_star_local", "instant_prev", "instant_at", "cumulative_prev", "cumulative_at",
        "instant_mode", "cumulative_mode",
    ]
    rows = [
        (p.delta, p.n_star, p.n_star_local, p.instant_prev, p.instant_at, p.cumulative_prev, p.cumulative_at,
         p.instant_mode, p.cumulative_mode)
        for p in report.points
    ]
    _emit(args, outputs, header, rows)
    print(f"mode={report.mode.value}", file=sys.stderr if args.output is None else sys.stdout)


def cmd_simulate(args, outputs):
    if not args.out_dir:
        raise ParameterError("simulate needs --out-dir")
    if args.snapshot_every < 0 or args.record_every < 1:
        raise ParameterError("--snapshot-every must be >= 0 and --record-every >= 1")
    kernel = kernel_from_args(args)
    config = SolverConfig(
        gamma=args.gamma,
        omega=args.omega,
        kernel=kernel,
        grid_points=args.grid_points,
        epsilon=args.epsilon,
        dt=args.dt,
        max_steps=args.max_steps,
        steady_tol=args.steady_tol,
        seed=args.seed,
        noise_amp=args.noise_amp,
        dealias=args.dealias,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_path = out / "config.txt"
    config_path.write_text(config_text(_config_items(config, args)), encoding="utf-8")
    outputs.append(str(config_path))
    x = config.x

    def snapshot(state):
        path = out / f"snapshot_{state.step:08d}.csv"
        write_csv(path, ["x", "u"], zip(x, state.u))
        outputs.append(str(path))

    state = init_random(config)
    snapshot(state)
    if args.snapshot_every:
        final, report = _evolve_with_snapshots(state, config, args.record_every, args.snapshot_every, snapshot)
    else:
        final, report = evolve(state, config, record_every=args.record_every)
        snapshot(final)
    traj = out / "trajectory.csv"
    write_csv(traj, ["step", "time", "energy", "bubble_count"], report.trajectory)
    outputs.append(str(traj))
    profile = detect_bubbles(final.u, args.threshold)
    bub = out / "bubbles.csv"
    write_csv(
        bub,
        ["index", "start", "end", "width", "gap"],
        [(i, s, e, w, g) for i, ((s, e), w, g) in enumerate(zip(profile.intervals, profile.widths, profile.gaps))],
    )
    outputs.append(str(bub))
    summary = [
        ("count", profile.count),
        ("width_cv", profile.width_cv),
        ("gap_cv", profile.gap_cv),
        ("full_cover", profile.full_cover),
        ("converged", report.converged),
        ("steps", report.steps),
        ("residual", report.residual),
        ("energy", final.energy),
        ("energy_nonincreasing", report.energy_nonincreasing),
        ("max_energy_increase", report.max_energy_increase),
    ]
    summary_path = out / "summary.txt"
    summary_path.write_text(config_text(summary), encoding="utf-8")
    outputs.append(str(summary_path))
    sys.stdout.write(config_text(summary))


def _evolve_with_snapshots(state, config, record_every, snapshot_every, snapshot):
    # record at the gcd so that trajectory rows and snapshots both land on their own multiples
    step = math.gcd(record_every, snapshot_every)

    def on_record(s):
        if s.step > 0 and s.step % snapshot_every == 0:
            snapshot(s)

    final, report = evolve(state, config, record_every=step, on_record=on_record)
    if final.step % snapshot_every:
        snapshot(final)
    report.trajectory = [r for r in report.trajectory if r.step % record_every == 0 or r.step == final.step]
    return final, report


def _config_items(config: SolverConfig, args):
    k = config.kernel
    items = [("kernel", k.family.value), ("delta", k.delta)]
    if k.alpha is not None:
        items.append(("alpha", k.alpha))
    items += [
        ("omega", config.omega),
        ("gamma", config.gamma),
        ("grid_points", config.grid_points),
        ("epsilon", config.epsilon),
        ("dt", config.dt),
        ("max_steps", config.max_steps),
        ("steady_tol", config.steady_tol),
        ("seed", config.seed),
        ("noise_amp", config.noise_amp),
        ("dealias", config.dealias),
        ("threshold", args.threshold),
        ("record_every", args.record_every),
        ("snapshot_every", args.snapshot_every),
    ]
    return items


def _emit(args, outputs, header, rows):
    path = write_csv(args.output, header, rows)
    if path is not None:
        outputs.append(str(path))


COMMANDS = {
    "eig": cmd_eig,
    "alpha-star": cmd_alpha_star,
    "energy": cmd_energy,
    "nstar": cmd_nstar,
    "delta-effect": cmd_delta_effect,
    "simulate": cmd_simulate,
}


def _manifest_path(args) -> Path | None:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    if getattr(args, "out_dir", None):
        return Path(args.out_dir) / "manifest.json"
    if getattr(args, "output", None):
        return Path(args.output + ".manifest.json")
    return None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NoklabError as exc:
        print(f"noklab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    params = [(k, v) for k, v in sorted(vars(args).items()) if k not in ("command", "manifest")]
    manifest = RunManifest(args.command, params, tool_version=__version__)
    outputs: list[str] = []
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        COMMANDS[args.command](args, outputs)
    except ParameterError as exc:
        manifest.error = f"ParameterError: {exc}"
        code = EXIT_USAGE
    except NumericalError as exc:
        manifest.error = f"{type(exc).__name__}: {exc}"
        code = EXIT_NUMERICAL
    except NoklabError as exc:
        manifest.error = f"{type(exc).__name__}: {exc}"
        code = EXIT_NUMERICAL
    if manifest.error:
        print(f"noklab: error: {manifest.error}", file=sys.stderr)
    manifest.wall_time = time.perf_counter() - t0
    manifest.output_paths = outputs
    path = _manifest_path(args)
    if path is not None:
        manifest.write(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
