"""Command-line interface.

Subcommands: solve, kernel-check, potential-check, sweep-tau, sweep-lambda,
sweep-s, compare-local, allen-cahn.  Exit codes: 0 success/PASS, 1 a check
FAILed, 2 configuration error, 3 numerical error.

Flags: --config <path>, --seed <int>, --out <dir>, --jobs <n>, plus
per-command value lists (comma-separated floats).  Environment overrides:
NLCH_SEED, NLCH_OUT, NLCH_JOBS.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import diagnostics, plotting, traceio
from .config import build_all, parse_config
from .errors import ConfigurationError, NumericalError
from .kernels import check_integrability, check_singularity
from .potentials import make_potential, potential_certificate
from .scheme import run

ENV_PREFIX = "NLCH_"


def _env_default(name, fallback):
    return os.environ.get(ENV_PREFIX + name, fallback)


def _read_config(path):
    if path is None:
        raise ConfigurationError("a --config file is required for this command")
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _emit(report: dict, out_path=None):
    payload = json.dumps(report, indent=2, sort_keys=True, default=traceio._jsonable)
    print(payload)
    if out_path:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        with open(out_path, "w") as fh:
            fh.write(payload + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    cfg = _read_config(args.config)
    rng = np.random.default_rng(args.seed)
    grid, km, potential, opl, scheme_cfg, u0 = build_all(cfg, rng)
    traj = run(u0, scheme_cfg)
    outdir = args.out or cfg["output"]["dir"]
    traceio.dump_trajectory(traj, grid, outdir, stride=cfg["output"]["snapshot_stride"])
    summary = {
        "steps": traj.n_steps,
        "final_energy": float(traj.energies[-1]),
        "initial_energy": float(traj.energies[0]),
        "mass_drift": float(np.max(np.abs(traj.masses - traj.masses[0]))),
        "max_el_residual": float(np.max(traj.el_residuals)),
        "energy_estimate": diagnostics.energy_estimate_check(traj, scheme_cfg).as_dict(),
    }
    traceio.write_report_json(summary, os.path.join(outdir, "report.json"))
    if not args.no_plot:
        plotting.render_run_figures(traj, grid, os.path.join(outdir, "figures"))
    print(json.dumps(summary, indent=2, sort_keys=True, default=traceio._jsonable))
    return 0 if summary["energy_estimate"]["passed"] else 1


def cmd_kernel_check(args) -> int:
    cfg = _read_config(args.config)
    from .config import build_grid_from_config, kernel_spec_from_config
    from .kernels import assemble

    grid = build_grid_from_config(cfg)
    spec = kernel_spec_from_config(cfg)
    mode = cfg["kernel"]["mode"]
    variant = cfg["kernel"]["integrability"] or ("full" if mode != "periodic" else "local")
    singularity = check_singularity(spec, grid, samples=args.samples, rng=args.seed)
    integrability = check_integrability(spec, grid, variant=variant)
    km = assemble(spec, grid, mode)
    defect = float(np.max(np.abs(km.pair_weights - km.pair_weights.T)))
    report = {
        "kernel": spec.family,
        "singularity": singularity,
        "integrability": integrability,
        "symmetry_defect": defect,
        "passed": bool(singularity["passed"] and integrability["passed"]),
    }
    _emit(report, args.out and os.path.join(args.out, "kernel_check.json"))
    return 0 if report["passed"] else 1


def cmd_potential_check(args) -> int:
    lambdas = _float_list(args.lambda_sweep)
    pot = make_potential(args.potential)
    report = potential_certificate(pot, lambdas)
    _emit(report, args.out and os.path.join(args.out, "potential_check.json"))
    return 0 if report["passed"] else 1


def _member_run(cfg_sections: dict, overrides: dict, seed: int) -> dict:
    """Worker for sweep members: rebuild from plain config data and run."""
    from .config import RunConfig

    sections = {k: dict(v) for k, v in cfg_sections.items()}
    for (section, key), value in overrides.items():
        sections[section][key] = value
    cfg = RunConfig(sections=sections)
    rng = np.random.default_rng(seed)
    grid, km, potential, opl, scheme_cfg, u0 = build_all(cfg, rng)
    traj = run(u0, scheme_cfg)
    lo, hi = potential.gamma_domain()
    if np.isfinite(lo) and np.isfinite(hi):
        feasibility = float(
            np.max(np.maximum(traj.states - hi, 0.0) + np.maximum(lo - traj.states, 0.0))
        )
    else:
        feasibility = 0.0
    w = grid.weights
    zeta_l1 = traj.tau * float(
        sum(np.dot(np.abs(traj.selections[n]), w) for n in range(1, traj.n_steps + 1))
    )
    return {
        "states": traj.states.tolist(),
        "times": traj.times.tolist(),
        "energies": traj.energies.tolist(),
        "final_state": traj.states[-1].tolist(),
        "final_energy": float(traj.energies[-1]),
        "mass_drift": float(np.max(np.abs(traj.masses - traj.masses[0]))),
        "feasibility": feasibility,
        "zeta_l1": zeta_l1,
        "initial_energy": float(traj.energies[0]),
    }


def _map_members(cfg, member_overrides, seed, jobs):
    payloads = [(cfg.sections, ov, seed) for ov in member_overrides]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_member_run_star, payloads))
    return [_member_run_star(p) for p in payloads]


def _member_run_star(payload):
    return _member_run(*payload)


def cmd_sweep_tau(args) -> int:
    cfg = _read_config(args.config)
    taus = _float_list(args.taus)
    if len(taus) < 2:
        raise ConfigurationError("sweep-tau needs at least two tau values")
    t_horizon = cfg["scheme"]["T"]
    overrides = []
    for tau in taus:
        n = t_horizon / tau
        if abs(n - round(n)) > 1e-9:
            raise ConfigurationError(f"tau {tau} does not divide the horizon T={t_horizon}")
        overrides.append({("scheme", "tau"): tau, ("scheme", "n_steps"): int(round(n))})
    results = _map_members(cfg, overrides, args.seed, args.jobs)
    finals = [np.array(r["final_state"]) for r in results]
    grid, *_ = build_all(cfg, np.random.default_rng(args.seed))
    dists = [float(grid.norm_l2(finals[i] - finals[i + 1])) for i in range(len(finals) - 1)]
    decreasing = all(dists[i + 1] < dists[i] for i in range(len(dists) - 1))
    report = {
        "taus": taus,
        "terminal_gaps": dists,
        "passed": bool(decreasing or len(dists) < 2),
    }
    outdir = args.out or cfg["output"]["dir"]
    _emit(report, os.path.join(outdir, "sweep_tau.json"))
    if not args.no_plot and len(dists) >= 1:
        plotting.render_sweep_figure(
            "tau", taus[:-1], {"terminal gap": dists}, os.path.join(outdir, "figures", "sweep_tau.png")
        )
    return 0 if report["passed"] else 1


def cmd_sweep_lambda(args) -> int:
    cfg = _read_config(args.config)
    lambdas = sorted(_float_list(args.lambdas), reverse=True)
    overrides = [{("scheme", "lambda"): lam} for lam in lambdas]
    results = _map_members(cfg, overrides, args.seed, args.jobs)
    feas = [r["feasibility"] for r in results]
    zsums = [r["zeta_l1"] for r in results]
    pot_name = cfg["potential"]["name"]
    bounded_domain = pot_name in ("obstacle", "logarithmic")
    shrinks = all(feas[i + 1] <= feas[i] + 1e-12 for i in range(len(feas) - 1))
    positive = [z for z in zsums if z > 0]
    spread = max(positive) / min(positive) if positive else 1.0
    passed = (shrinks or not bounded_domain) and spread < 2.0
    report = {
        "lambdas": lambdas,
        "feasibility_violation": feas,
        "zeta_l1_sums": zsums,
        "zeta_l1_spread": spread,
        "passed": bool(passed),
    }
    outdir = args.out or cfg["output"]["dir"]
    _emit(report, os.path.join(outdir, "sweep_lambda.json"))
    if not args.no_plot:
        plotting.render_sweep_figure(
            "lambda",
            lambdas,
            {"feasibility violation": [max(f, 1e-300) for f in feas]},
            os.path.join(outdir, "figures", "sweep_lambda.png"),
        )
    return 0 if report["passed"] else 1


def cmd_sweep_s(args) -> int:
    cfg = _read_config(args.config)
    svals = sorted(_float_list(args.svalues))
    overrides = [
        {("kernel", "s"): s, ("kernel", "normalization"): 1.0 - s} for s in svals
    ]
    results = _map_members(cfg, overrides, args.seed, args.jobs)
    grid, *_ = build_all(cfg, np.random.default_rng(args.seed))
    report = {
        "s_values": svals,
        "final_energies": [r["final_energy"] for r in results],
        "gaps_between_consecutive_s": [
            float(
                max(
                    grid.norm_l2(np.array(a) - np.array(b))
                    for a, b in zip(results[i]["states"], results[i + 1]["states"])
                )
            )
            for i in range(len(results) - 1)
        ],
    }
    outdir = args.out or cfg["output"]["dir"]
    _emit(report, os.path.join(outdir, "sweep_s.json"))
    return 0


def cmd_compare_local(args) -> int:
    cfg = _read_config(args.config)
    svals = sorted(_float_list(args.svalues))
    rng = np.random.default_rng(args.seed)
    grid, km, potential, opl, scheme_cfg, u0 = build_all(cfg, rng)

    def cfg_maker(s):
        sections = {k: dict(v) for k, v in cfg.sections.items()}
        sections["kernel"]["s"] = s
        sections["kernel"]["normalization"] = 1.0 - s
        from .config import RunConfig

        _, _, _, _, member_cfg, _ = build_all(RunConfig(sections=sections), np.random.default_rng(args.seed))
        return member_cfg

    report_obj = diagnostics.local_limit_study(u0, svals, cfg_maker)
    report = report_obj.as_dict()
    outdir = args.out or cfg["output"]["dir"]
    _emit(report, os.path.join(outdir, "compare_local.json"))
    if not args.no_plot:
        dists = report_obj.value["distances"]
        plotting.render_sweep_figure(
            "s",
            list(dists.keys()),
            {"distance to local run": list(dists.values())},
            os.path.join(outdir, "figures", "compare_local.png"),
        )
    return 0 if report["passed"] else 1


def cmd_allen_cahn(args) -> int:
    cfg = _read_config(args.config)
    if cfg["operator"]["kind"] != "identity_riesz":
        raise ConfigurationError(
            "allen-cahn requires operator.kind = identity_riesz in the config"
        )
    rng = np.random.default_rng(args.seed)
    grid, km, potential, opl, scheme_cfg, u0 = build_all(cfg, rng)
    traj = diagnostics.allen_cahn_run(u0, scheme_cfg)
    outdir = args.out or cfg["output"]["dir"]
    traceio.dump_trajectory(traj, grid, outdir, stride=cfg["output"]["snapshot_stride"])
    decreasing = bool(np.all(np.diff(traj.energies) <= 1e-10))
    report = {"final_energy": float(traj.energies[-1]), "energy_decreasing": decreasing}
    traceio.write_report_json(report, os.path.join(outdir, "report.json"))
    if not args.no_plot:
        plotting.render_run_figures(traj, grid, os.path.join(outdir, "figures"))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if decreasing else 1


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=_env_default("CONFIG", None))
        p.add_argument("--seed", type=int, default=int(_env_default("SEED", "0")))
        p.add_argument("--out", default=_env_default("OUT", None))
        p.add_argument("--jobs", type=int, default=int(_env_default("JOBS", "1")))
        p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("solve", help="run one configured trajectory")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("kernel-check", help="certify kernel admissibility")
    common(p)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_kernel_check)

    p = sub.add_parser("potential-check", help="run the potential invariant suite")
    common(p)
    p.add_argument("potential")
    p.add_argument("--lambda-sweep", default="1e-1,1e-2,1e-3")
    p.set_defaults(func=cmd_potential_check)

    p = sub.add_parser("sweep-tau", help="time-step refinement study")
    common(p)
    p.add_argument("--taus", required=True)
    p.set_defaults(func=cmd_sweep_tau)

    p = sub.add_parser("sweep-lambda", help="regularization sweep study")
    common(p)
    p.add_argument("--lambdas", required=True)
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("sweep-s", help="fractional-order sweep")
    common(p)
    p.add_argument("--svalues", required=True)
    p.set_defaults(func=cmd_sweep_s)

    p = sub.add_parser("compare-local", help="distance to the classical stencil run")
    common(p)
    p.add_argument("--svalues", default="0.5,0.7,0.9,0.95")
    p.set_defaults(func=cmd_compare_local)

    p = sub.add_parser("allen-cahn", help="relaxation-mode run (L2 Riesz map)")
    common(p)
    p.set_defaults(func=cmd_allen_cahn)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        for line in exc.errors:
            print(f"configuration error: {line}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


def console_main() -> None:
    sys.exit(main(sys.argv[1:]))
