"""``ldpkit`` command-line entry point.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
Every run writes one JSON manifest (``--manifest``, default ``<out>.manifest.json``).
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .determlimit import NumericalError, OdeConfig, find_fixed_point, integrate_ode, vector_field
from .io import (
    file_digest,
    read_histogram,
    state_header,
    write_histogram,
    write_table,
    write_trajectories,
    write_trajectory,
)
from .ldp import ActionOptions, PhasePoint, integrate_hamilton, minimize_action
from .master_cit import (
    MasterEquationSpec,
    affinity_coefficients,
    entropy_balance,
    evolve_master,
    free_energy_balance,
    is_detailed_balanced,
    relative_entropy,
    stationary_distribution,
)
from .model import GeneratorSpec, load_model
from .quasipotential import (
    QuadraticRate,
    RelativeEntropyRate,
    gaussian_quadratic,
    lyapunov_scan,
    ou_quadratic,
    residual_scan,
    transient_hje_residual,
)
from .simulate import (
    DEFAULT_MIN_COUNT,
    SimConfig,
    empirical_rate_function,
    ensemble_histogram,
    ensemble_mean,
    n_workers,
    sample_states,
    simulate_paths,
)
from .thermo import cit_sigma, entropy_decomposition

log = logging.getLogger("ldpkit")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# argument helpers


def vec(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {text!r}") from exc


def matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ','."""
    try:
        return np.array([[float(v) for v in row.split(",")] for row in text.split(";")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a matrix like '1,0;0,1', got {text!r}") from exc


def _state(spec: GeneratorSpec, value, name):
    if value is None:
        return np.zeros(spec.dimension)
    if value.size == 1 and spec.dimension > 1:
        return np.full(spec.dimension, value[0])
    if value.size != spec.dimension:
        raise UsageError(f"--{name} needs {spec.dimension} entries, got {value.size}")
    return value


def _candidate(args, spec: GeneratorSpec | None):
    kind = args.candidate
    if kind == "relent":
        if args.zss is None:
            raise UsageError("--candidate relent needs --zss")
        return RelativeEntropyRate(_state(spec, args.zss, "zss") if spec else args.zss)
    if kind == "ou":
        return ou_quadratic(args.a, args.D)
    if kind == "gaussian":
        return gaussian_quadratic(spec)
    if kind == "quadratic":
        if args.precision is None:
            raise UsageError("--candidate quadratic needs --precision")
        n = args.precision.shape[0]
        center = np.zeros(n) if args.center is None else args.center
        return QuadraticRate(args.precision, center)
    raise UsageError(f"unknown candidate {kind!r}")


def _add_candidate_flags(p, required=True):
    p.add_argument(
        "--candidate",
        choices=["relent", "ou", "gaussian", "quadratic"],
        required=required,
        help="rate-function candidate: relative entropy, OU quadratic, Gaussian from a linear model, or explicit quadratic",
    )
    p.add_argument("--zss", type=vec, help="reference state for the relative entropy")
    p.add_argument("--a", type=float, default=1.0, help="OU relaxation rate")
    p.add_argument("--D", type=float, default=1.0, help="OU diffusion constant")
    p.add_argument("--precision", type=matrix, help="precision matrix for --candidate quadratic")
    p.add_argument("--center", type=vec, help="centre for --candidate quadratic")


def _add_sim_flags(p):
    p.add_argument("--model", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z0", type=vec, help="initial state (default: origin)")
    p.add_argument("--time", type=float, help="histogram time (default: t-end)")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--range", type=grid_range, action="append", dest="ranges", help="histogram span lo:hi, once per dimension")
    p.add_argument("--threads", type=int)


def grid_range(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from exc


# --------------------------------------------------------------------------
# commands; each returns (summary dict, output paths)


def _sim_histogram(args):
    spec = load_model(args.model)
    cfg = SimConfig(args.epsilon, args.t_end, args.dt, args.paths, args.seed)
    z0 = _state(spec, args.z0, "z0")
    t = args.t_end if args.time is None else args.time
    states = sample_states(spec, z0, cfg, [t], threads=args.threads)[0]
    hist = ensemble_histogram(states, t, bins=args.bins, ranges=args.ranges, epsilon=args.epsilon)
    mean, se = ensemble_mean(states)
    summary = {
        "time": t,
        "n_paths": args.paths,
        "mean": mean.tolist(),
        "standard_error": se.tolist(),
        "in_range": int(hist.counts.sum()),
        "out_of_range": hist.out_of_range,
        "threads": n_workers(args.threads),
    }
    return spec, hist, summary


def cmd_simulate(args):
    spec, hist, summary = _sim_histogram(args)
    outputs = []
    if args.out:
        write_histogram(args.out, hist)
        outputs.append(args.out)
    if args.paths_out:
        cfg = SimConfig(args.epsilon, args.t_end, args.dt, min(args.keep_paths, args.paths), args.seed, args.record_stride)
        paths = simulate_paths(spec, _state(spec, args.z0, "z0"), cfg, threads=args.threads)
        write_trajectories(args.paths_out, paths)
        outputs.append(args.paths_out)
    return summary, outputs


def cmd_ldf(args):
    if args.hist:
        if args.epsilon is None:
            raise UsageError("--hist needs --epsilon")
        hist = read_histogram(args.hist, args.epsilon, args.n_paths)
        summary = {"source": args.hist}
    else:
        missing = [f for f in ("model", "epsilon", "paths", "t_end") if getattr(args, f) is None]
        if missing:
            raise UsageError("ldf needs --hist or the simulation flags " + ", ".join("--" + m.replace("_", "-") for m in missing))
        _, hist, summary = _sim_histogram(args)
    rate = empirical_rate_function(hist, args.min_count)
    summary.update({"bins_reported": int(rate.phi.size), "min_count": args.min_count})
    if args.compare_ou:
        a, D = args.compare_ou
        ref = a * np.sum(rate.points**2, axis=1) / (2.0 * D)
        sel = np.all(np.abs(rate.points) <= args.compare_window, axis=1)
        summary["max_abs_deviation_from_ou"] = float(np.max(np.abs(rate.phi[sel] - ref[sel]))) if sel.any() else None
    outputs = []
    if args.out:
        write_table(args.out, state_header(hist.dimension) + ["phi_hat"], rate.table())
        outputs.append(args.out)
    return summary, outputs


def cmd_ode(args):
    spec = load_model(args.model)
    traj = integrate_ode(spec, _state(spec, args.z0, "z0"), OdeConfig(args.t_end, args.dt, args.stride))
    if args.out:
        write_trajectory(args.out, traj.times, traj.states)
    return {"final_state": traj.final_state.tolist(), "t_end": float(traj.times[-1])}, [args.out] if args.out else []


def cmd_fixedpoint(args):
    spec = load_model(args.model)
    z = find_fixed_point(spec, _state(spec, args.guess, "guess"), args.tol)
    return {"fixed_point": z.tolist(), "residual": float(np.max(np.abs(vector_field(spec, z))))}, []


def _mesh(grids):
    mesh = np.meshgrid(*grids, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def cmd_hje_check(args):
    outputs = []
    if args.transient:
        if not args.grid or args.t_grid is None:
            raise UsageError("--transient needs --grid and --t-grid")
        pts = _mesh([args.grid[0], args.t_grid])
        res = np.array([transient_hje_residual(args.a, args.D, z, t) for z, t in pts])
        header = ["z1", "t", "residual"]
    else:
        if args.model is None or args.candidate is None:
            raise UsageError("hje-check needs --model and --candidate (or --transient)")
        spec = load_model(args.model)
        cand = _candidate(args, spec)
        if not args.grid or len(args.grid) not in (1, spec.dimension):
            raise UsageError(f"--grid needs one range or {spec.dimension} ranges")
        grids = args.grid * spec.dimension if len(args.grid) == 1 else args.grid
        pts = _mesh(grids)
        res = residual_scan(spec, cand, pts)
        header = state_header(spec.dimension) + ["residual"]
    if args.out:
        write_table(args.out, header, np.column_stack([pts, res]))
        outputs.append(args.out)
    return {"points": int(res.size), "max_abs_residual": float(np.max(np.abs(res)))}, outputs


def cmd_lyapunov(args):
    spec = load_model(args.model)
    cand = _candidate(args, spec)
    traj = integrate_ode(spec, _state(spec, args.z0, "z0"), OdeConfig(args.t_end, args.dt, args.stride))
    scan = lyapunov_scan(spec, cand, traj)
    if args.out:
        write_table(args.out, ["t", "phi", "dphi_dt"], np.column_stack([scan.times, scan.phi, scan.dphi_dt]))
    return {
        "max_dphi_dt": scan.max_dphi_dt,
        "phi_start": float(scan.phi[0]),
        "phi_end": float(scan.phi[-1]),
        "non_increasing": bool(scan.max_dphi_dt <= args.slack),
    }, [args.out] if args.out else []


def cmd_hamilton(args):
    spec = load_model(args.model)
    p0 = PhasePoint(_state(spec, args.z0, "z0"), _state(spec, args.y0, "y0"))
    flow = integrate_hamilton(spec, p0, args.T, args.dt, args.stride)
    if args.out:
        n = spec.dimension
        header = ["t"] + state_header(n) + state_header(n, "y") + ["H"]
        write_table(args.out, header, np.column_stack([flow.times, flow.z, flow.y, flow.energy]))
    return {
        "H0": float(flow.energy[0]),
        "max_H_drift": flow.max_energy_drift,
        "final_z": flow.z[-1].tolist(),
        "final_y": flow.y[-1].tolist(),
    }, [args.out] if args.out else []


def cmd_path(args):
    spec = load_model(args.model)
    opts = ActionOptions(gtol=args.gtol, max_iters=args.max_iters, rule=args.rule)
    res = minimize_action(spec, _state(spec, args.z_from, "from"), _state(spec, args.z_to, "to"), args.T, args.N, opts)
    outputs = []
    if args.out:
        write_trajectory(args.out, res.path.times, res.path.states)
        outputs.append(args.out)
    summary = res.summary()
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2) + "\n")
        outputs.append(args.summary)
    return summary, outputs


def cmd_entropy(args):
    spec = load_model(args.model)
    cand = _candidate(args, spec)
    traj = integrate_ode(spec, _state(spec, args.z0, "z0"), OdeConfig(args.t_end, args.dt, args.stride))
    rows = []
    for t, z in zip(traj.times, traj.states):
        terms = entropy_decomposition(spec, cand, z)
        s1, s2 = cit_sigma(spec, cand, z)
        rows.append(
            [
                t,
                terms.entropy_change,
                terms.entropy_production,
                terms.mechanical_drive,
                terms.chemical_drive,
                terms.chemomechanical_exchange,
                s1,
                s2,
            ]
        )
    rows = np.array(rows)
    if args.out:
        header = ["t", "entropy_change", "production", "mech_drive", "chem_drive", "exchange", "sigma1", "sigma2"]
        write_table(args.out, header, rows)
    identity = rows[:, 1] - (rows[:, 2] - rows[:, 3] - rows[:, 4] + rows[:, 5])
    return {
        "samples": int(rows.shape[0]),
        "max_identity_residual": float(np.max(np.abs(identity))),
        "min_entropy_production": float(rows[:, 2].min()),
        "min_sigma1": float(rows[:, 6].min()),
        "note": "phi is the rate function; entropy = -phi",
    }, [args.out] if args.out else []


def cmd_master(args):
    spec = MasterEquationSpec.from_csv(args.rates)
    pi = stationary_distribution(spec)
    n = spec.n_states
    p0 = np.full(n, 1.0 / n) if args.p0 is None else args.p0
    traj = evolve_master(spec, p0, args.t_end, args.dt)
    rel = np.array([relative_entropy(p, pi) for p in traj.p])
    p_end = traj.p[-1]
    summary = {
        "stationary": pi.tolist(),
        "detailed_balance": is_detailed_balanced(spec, pi),
        "final_p": p_end.tolist(),
        "max_normalization_drift": traj.max_normalization_drift,
        "relative_entropy_start": float(rel[0]),
        "relative_entropy_end": float(rel[-1]),
        "relative_entropy_non_increasing": bool(np.all(np.diff(rel) <= 1e-10)),
    }
    outputs = []
    if args.out:
        at = np.asarray(args.at if args.at is not None else p0, dtype=float)
        ent = entropy_balance(spec, at)
        free = free_energy_balance(spec, at, pi)
        aff = affinity_coefficients(spec, at, pi)
        rows = np.column_stack(
            [np.arange(1, n + 1), at, pi, ent.production, ent.exchange, free.production, free.exchange]
        )
        totals = np.array(
            [[0, at.sum(), pi.sum(), ent.total_production, ent.total_exchange, free.total_production, free.total_exchange]]
        )
        header = ["state", "p", "pi", "entropy_production", "entropy_exchange", "free_production", "free_exchange"]
        write_table(args.out, header, np.vstack([rows, totals]))
        outputs.append(args.out)
        summary.update(
            {
                "ledger_totals_row": "state 0",
                "entropy_production_total": ent.total_production,
                "free_energy_production_total": free.total_production,
                "M_positive": aff.M_positive,
                "M_tilde_positive": aff.M_tilde_positive,
            }
        )
    if args.traj_out:
        write_table(args.traj_out, ["t"] + [f"p{i + 1}" for i in range(n)] + ["relative_entropy"], np.column_stack([traj.times, traj.p, rel]))
        outputs.append(args.traj_out)
    return summary, outputs


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="ldpkit", description="Large-deviations and entropy toolkit for jump-diffusion generators")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
        return p

    p = add("simulate", cmd_simulate, "sample paths; write the terminal histogram")
    _add_sim_flags(p)
    p.add_argument("--out", help="histogram CSV")
    p.add_argument("--paths-out", help="trajectory CSV for the first --keep-paths paths")
    p.add_argument("--keep-paths", type=int, default=10)
    p.add_argument("--record-stride", type=int, default=1)

    p = add("ldf", cmd_ldf, "empirical rate function from a histogram or a fresh simulation")
    p.add_argument("--hist", help="histogram CSV from 'simulate'")
    p.add_argument("--n-paths", type=int, help="total paths behind --hist (default: sum of counts)")
    p.add_argument("--model")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z0", type=vec)
    p.add_argument("--time", type=float)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--range", type=grid_range, action="append", dest="ranges")
    p.add_argument("--threads", type=int)
    p.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT)
    p.add_argument("--compare-ou", type=float, nargs=2, metavar=("A", "D"), help="report max |phi_hat - a z^2/(2D)|")
    p.add_argument("--compare-window", type=float, default=1.5)
    p.add_argument("--out", help="rate-function CSV")

    p = add("ode", cmd_ode, "integrate the deterministic limit (RK4)")
    p.add_argument("--model", required=True)
    p.add_argument("--z0", type=vec)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out")

    p = add("fixedpoint", cmd_fixedpoint, "Newton search for a fixed point of F")
    p.add_argument("--model", required=True)
    p.add_argument("--guess", type=vec)
    p.add_argument("--tol", type=float, default=1e-10)

    p = add("hje-check", cmd_hje_check, "Hamilton-Jacobi residual scan")
    p.add_argument("--model")
    _add_candidate_flags(p, required=False)
    p.add_argument("--grid", type=grid, action="append", help="lo:hi:n, once per dimension (or once for all)")
    p.add_argument("--transient", action="store_true", help="check the transient OU rate function instead")
    p.add_argument("--t-grid", type=grid)
    p.add_argument("--out")

    p = add("lyapunov", cmd_lyapunov, "dphi/dt along a deterministic trajectory")
    p.add_argument("--model", required=True)
    _add_candidate_flags(p)
    p.add_argument("--z0", type=vec)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--slack", type=float, default=1e-12)
    p.add_argument("--out")

    p = add("hamilton", cmd_hamilton, "integrate Hamilton's equations; report H drift")
    p.add_argument("--model", required=True)
    p.add_argument("--z0", type=vec)
    p.add_argument("--y0", type=vec)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out")

    p = add("path", cmd_path, "least-action path between two states")
    p.add_argument("--model", required=True)
    p.add_argument("--from", dest="z_from", type=vec, required=True)
    p.add_argument("--to", dest="z_to", type=vec, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--gtol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--rule", choices=["midpoint", "left"], default="midpoint")
    p.add_argument("--out", help="path CSV")
    p.add_argument("--summary", help="JSON summary {action, iters, gnorm}")

    p = add("entropy", cmd_entropy, "entropy decomposition and sigma ledger along the ODE")
    p.add_argument("--model", required=True)
    _add_candidate_flags(p)
    p.add_argument("--z0", type=vec)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--out")

    p = add("master", cmd_master, "master-equation CIT analysis from a rate-matrix CSV")
    p.add_argument("--rates", required=True, help="n x n rate matrix CSV (diagonal ignored)")
    p.add_argument("--p0", type=vec)
    p.add_argument("--at", type=vec, help="state distribution for the ledger (default: p0)")
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--out", help="per-state ledger CSV; the last row (state 0) holds totals")
    p.add_argument("--traj-out", help="p(t) and relative entropy CSV")
    return parser


def _manifest_path(args):
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "out", None)
    if out:
        return Path(str(out) + ".manifest.json")
    return Path(f"ldpkit-{args.command}.manifest.json")


def _inputs(args):
    found = {}
    for key in ("model", "hist", "rates"):
        path = getattr(args, key, None)
        if path and Path(path).exists():
            found[path] = file_digest(path)
    return found


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    params = {k: _jsonable(v) for k, v in vars(args).items() if k not in ("func", "verbose", "manifest")}
    t0 = time.perf_counter()
    status, summary, outputs, error = EXIT_OK, {}, [], None
    try:
        summary, outputs = args.func(args)
    except NumericalError as exc:
        status, error = EXIT_NUMERICAL, str(exc)
    except (ValueError, OSError) as exc:
        status, error = EXIT_VALIDATION, str(exc)
    manifest = {
        "command": args.command,
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "inputs": _inputs(args),
        "outputs": {p: file_digest(p) for p in outputs},
        "summary": summary,
        "exit_code": status,
        "error": error,
        "wall_time_s": time.perf_counter() - t0,
        "version": __version__,
        "python": platform.python_version(),
    }
    path = _manifest_path(args)
    path.write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    if error:
        print(f"ldpkit {args.command}: error: {error}", file=sys.stderr)
    else:
        print(json.dumps(summary, indent=2, default=_jsonable))
    return status


if __name__ == "__main__":
    sys.exit(main())
