"""Command line entry point.

Verbs: simulate, compare, kinetics, identities, uncertainty, check-all.
Exit codes: 0 all checks pass, 1 a physics check failed, 2 configuration
or IO error, 3 numerical blow-up.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .config import KineticsConfig, build_config, load_config, override
from .errors import ConfigurationError, NumericalError, PathError, PreconditionError

EXIT_OK = 0
EXIT_PHYSICS = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3

VERBS = ("simulate", "compare", "kinetics", "identities", "uncertainty", "check-all")

# tolerances of the per-verb checks
COMPARE_L2 = 1e-4
FORCE_TOL = 1e-4
ENERGY_GAP = 1e-8
IDENTITY_TOL = 1e-8
RESIDUAL_TOL = 1e-6


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monadkin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output].dir)")
    common.add_argument("--seed", type=int, help="kinetics seed (overrides the config)")
    common.add_argument("--grid", type=int, metavar="INT", help="nodes per axis")
    common.add_argument("--dt", type=float)
    common.add_argument("--t-end", type=float, dest="t_end")
    common.add_argument("--solver", choices=("schrodinger_split", "schrodinger_cn", "madelung", "omega"))
    common.add_argument("--scenario")
    common.add_argument("--csv", dest="csv", action="store_true", default=None, help="write CSV files (default)")
    common.add_argument("--no-csv", dest="csv", action="store_false")
    for verb in VERBS:
        p = sub.add_parser(verb, parents=[common])
        if verb == "simulate":
            p.add_argument("--fields", action="store_true", help="also dump per-snapshot fields")
        if verb == "check-all":
            p.add_argument("--skip", type=int, nargs="*", default=[], metavar="N", help="criterion numbers to skip")
    return parser


def resolve_config(args, need_kinetics=False):
    if args.config:
        cfg = load_config(args.config)
    elif args.scenario:
        cfg = build_config({"scenario": args.scenario})
    else:
        raise ConfigurationError("give --config PATH or --scenario NAME", key="scenario")
    if args.scenario and args.scenario != cfg.scenario:
        cfg = override(cfg, scenario=args.scenario)
    cfg = override(cfg, solver=args.solver, points=args.grid, dt=args.dt, t_end=args.t_end, csv=args.csv, out_dir=args.out)
    kin = cfg.kinetics
    if kin is None and need_kinetics:
        kin = KineticsConfig()
    if kin is not None and args.seed is not None:
        kin = replace(kin, seed=args.seed)
    if kin is not cfg.kinetics:
        cfg = override(cfg, kinetics=kin)
    return cfg


def _write_json(path, doc) -> None:
    from .runner import _clean

    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_clean(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _report_checks(checks: dict) -> bool:
    for name, ok in checks.items():
        print(f"  {'pass' if ok else 'FAIL'}  {name}")
    return all(checks.values())


# ---------------------------------------------------------------------------
# verbs


def cmd_simulate(args) -> bool:
    from .runner import emit_outputs, run_scenario

    cfg = resolve_config(args)
    report = run_scenario(cfg, cfg.out_dir)
    emit_outputs(report, cfg.out_dir, csv_out=cfg.csv, fields=args.fields or cfg.fields)
    print(f"{cfg.scenario} / {cfg.solver}: {len(report.snapshots)} snapshots -> {cfg.out_dir}")
    return _report_checks(report.checks)


def cmd_compare(args) -> bool:
    from .runner import compare_solvers

    cfg = resolve_config(args)
    ref = override(cfg, solver=cfg.reference)
    cmp = compare_solvers(cfg, ref)
    cmp["checks"] = {"l2_rho_below_1e-4": cmp["final_l2_rho"] is not None and cmp["final_l2_rho"] < COMPARE_L2}
    _write_json(os.path.join(cfg.out_dir, "comparison.json"), cmp)
    print(f"{cfg.solver} vs {ref.solver}: final L2(rho) = {cmp['final_l2_rho']:.3e}, order {cmp['richardson_order']}")
    return _report_checks(cmp["checks"])


def cmd_kinetics(args) -> bool:
    from .grid import hydro_from_psi
    from .runner import kinetics_summary, setup

    cfg = resolve_config(args, need_kinetics=True)
    _, params, psi, potential = setup(cfg)
    summary, checks = kinetics_summary(cfg, hydro_from_psi(psi, params), potential, params, cfg.out_dir)
    _write_json(os.path.join(cfg.out_dir, "kinetics.json"), {"config": cfg.to_dict(), "kinetics": summary, "checks": checks})
    print(f"{cfg.scenario}: {summary['count']} monads, seed {cfg.kinetics.seed}")
    return _report_checks(checks)


def cmd_identities(args) -> bool:
    from .diagnostics import KANIADAKIS, TAKABAYASHI, conserved_quantities, stress_force, stress_tensor
    from .grid import hydro_from_psi
    from .kinetics import identity_check
    from .runner import setup
    from .schrodinger import variational_residual

    cfg = resolve_config(args, need_kinetics=True)
    grid, params, psi, potential = setup(cfg)
    h = hydro_from_psi(psi, params)
    doc = {"config": cfg.to_dict(), "force_mismatch": {}, "identity": {}}
    checks = {}
    for form in (KANIADAKIS, TAKABAYASHI):
        mism = stress_force(stress_tensor(h, params, form), h, params).max_mismatch
        doc["force_mismatch"][form] = mism
        checks[f"{form}_force_matches_grad_W"] = mism < FORCE_TOL
    e = conserved_quantities(psi, potential, params)
    doc["energy"] = e.as_dict()
    checks["energy_fields_equal_wavefunction"] = abs(e.H_total - e.H_wavefunction) <= ENERGY_GAP * max(abs(e.H_total), 1.0)
    kc = cfg.kinetics
    for a in range(grid.dim):
        for l in (1, 2):
            res = identity_check(h, params, l, kc.count, kc.seed, axis=a)
            doc["identity"][f"axis{a}_l{l}"] = res._asdict()
            scale = max(abs(res.operator_side), 1.0)
            checks[f"identity_axis{a}_l{l}_moment_operator"] = abs(res.moment_side - res.operator_side) <= IDENTITY_TOL * scale
            checks[f"identity_axis{a}_l{l}_monte_carlo"] = res.mc_z <= 3.0
    resid = variational_residual(psi, potential, params, min(cfg.dt, 1e-4))
    doc["variational_residual"] = resid
    if cfg.scenario in ("harmonic_ground", "box_eigenstate", "plane_wave"):
        checks["variational_residual_eigenstate"] = resid < RESIDUAL_TOL
    doc["checks"] = checks
    _write_json(os.path.join(cfg.out_dir, "identities.json"), doc)
    print(f"{cfg.scenario}: identities at t = 0")
    return _report_checks(checks)


def cmd_uncertainty(args) -> bool:
    from .runner import emit_outputs, run_scenario

    cfg = resolve_config(args)
    report = run_scenario(replace(cfg, kinetics=None))
    emit_outputs(report, cfg.out_dir, csv_out=cfg.csv)
    rows = [{"t": s["t"], "axes": s["uncertainty"]} for s in report.snapshots]
    checks = {k: report.checks[k] for k in ("uncertainty_bounds", "momentum_decomposition")}
    _write_json(os.path.join(cfg.out_dir, "uncertainty.json"), {"config": cfg.to_dict(), "snapshots": rows, "checks": checks})
    last = report.snapshots[-1]["uncertainty"][0]
    print(f"{cfg.scenario}: final dx = {last['delta_x']:.6g}, dp = {last['delta_p']:.6g}, dx dp = {last['product']:.6g}")
    return _report_checks(checks)


def cmd_check_all(args) -> bool:
    from .acceptance import run_all

    out = args.out or "acceptance_out"

    def show(crit):
        print(crit.line(), flush=True)
        for c in crit.clauses:
            print(f"        {'pass' if c.passed else 'FAIL'}  {c.label}  [{c.detail}]", flush=True)

    crits = run_all(out, skip=args.skip, on_result=show)
    passed = sum(c.passed for c in crits)
    print(f"{passed}/{len(crits)} criteria pass; outputs in {out}")
    return passed == len(crits)


_COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "kinetics": cmd_kinetics,
    "identities": cmd_identities,
    "uncertainty": cmd_uncertainty,
    "check-all": cmd_check_all,
}


def _timing_dir(args):
    if args.out:
        return args.out
    if args.verb == "check-all":
        return "acceptance_out"
    try:
        return resolve_config(args).out_dir
    except Exception:
        return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        ok = _COMMANDS[args.verb](args)
        code = EXIT_OK if ok else EXIT_PHYSICS
    except NumericalError as exc:
        step = getattr(exc, "step", None)
        print(f"error: numerical blow-up{'' if step is None else f' at step {step}'}: {exc}", file=sys.stderr)
        code = EXIT_BLOWUP
    except ConfigurationError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"error: configuration{key}: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except (PreconditionError, PathError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    # wall time lives apart from the reports so those stay byte-reproducible
    if code in (EXIT_OK, EXIT_PHYSICS):
        out = _timing_dir(args)
        if out:
            elapsed = time.perf_counter() - start
            _write_json(os.path.join(out, "timing.json"), {"verb": args.verb, "wall_seconds": float(np.round(elapsed, 6))})
    return code


if __name__ == "__main__":
    sys.exit(main())
