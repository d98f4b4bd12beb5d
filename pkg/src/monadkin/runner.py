"""Scenario orchestration, solver cross-comparison and report files."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from . import _kernels
from .config import WAVE_SOLVERS, ScenarioConfig
from .diagnostics import (
    KANIADAKIS,
    circulation,
    conserved_quantities,
    quantum_potential,
    rectangle_loop,
    stress_tensor,
    uncertainty_report,
)
from .errors import ConfigurationError
from .grid import (
    HydroState,
    PhysicalParams,
    _wrap_angle,
    hydro_from_omega,
    hydro_from_psi,
    integrate,
    make_grid,
    omega_from_hydro,
)
from .kinetics import (
    band_violations,
    bgk_collide,
    cell_invariants,
    estimate_moments,
    expected_moments,
    identity_check,
    push_particles,
    sample_ensemble,
    write_ensemble_csv,
)
from .madelung import MadelungState, evolve_madelung, evolve_omega
from .scenarios import initial_state
from .schrodinger import EvolutionConfig, Potential, evolve

CSV_DIGITS = 12
MC_SIGMAS = 3.0
# per-bin probability of leaving a 3-sigma band
_BAND_P = 2.0 * stats.norm.sf(MC_SIGMAS)


def params_of(cfg: ScenarioConfig) -> PhysicalParams:
    return PhysicalParams(cfg.hbar, cfg.mass, cfg.n_monads, cfg.omega)


def grid_of(cfg: ScenarioConfig):
    return make_grid(cfg.dim, cfg.points, cfg.length, cfg.boundary)


def setup(cfg: ScenarioConfig):
    """Grid, parameters, initial wavefunction and potential of a config."""
    grid = grid_of(cfg)
    params = params_of(cfg)
    psi0, potential = initial_state(cfg.scenario, grid, params, cfg.scenario_options())
    return grid, params, psi0, potential


def evolve_states(cfg: ScenarioConfig, psi0, potential: Potential, params: PhysicalParams, record_stride=None):
    """Run the configured solver; returns ``[(t, WaveField or None, HydroState or None)]``."""
    stride = cfg.record_stride if record_stride is None else record_stride
    n = cfg.n_steps
    if cfg.solver in WAVE_SOLVERS:
        scheme = "split_step" if cfg.solver == "schrodinger_split" else "crank_nicolson"
        snaps = evolve(psi0, potential, params, EvolutionConfig(cfg.dt, cfg.t_end, scheme, stride))
        return [(t, psi, None) for t, psi in snaps]
    h0 = hydro_from_psi(psi0, params)
    if cfg.solver == "madelung":
        states = evolve_madelung(MadelungState(h0), potential, params, cfg.dt, n, stride)
        return [(st.time, None, st.hydro) for st in states]
    snaps = evolve_omega(omega_from_hydro(h0, params), potential, params, cfg.dt, n, stride)
    return [(t, None, hydro_from_omega(om, params)) for t, om in snaps]


def _density(psi, hydro):
    return np.asarray(hydro.rho) if hydro is not None else np.abs(np.asarray(psi.values)) ** 2


def _phase(psi, hydro, params):
    if hydro is not None:
        return np.asarray(hydro.S) / params.hbar
    return np.angle(np.asarray(psi.values))


def _clean(x):
    """JSON-safe floats: NaN and infinities become None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class RunReport:
    config: dict
    snapshots: list
    checks: dict
    kinetics: Optional[dict] = None
    metadata: dict = field(default_factory=dict)
    # (t, WaveField or None, HydroState) per snapshot, for field dumps
    states: list = field(default_factory=list, repr=False)

    @property
    def all_pass(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return _clean(
            {
                "config": self.config,
                "snapshots": self.snapshots,
                "checks": self.checks,
                "all_pass": self.all_pass,
                "kinetics": self.kinetics,
                "metadata": self.metadata,
            }
        )


def metadata() -> dict:
    import scipy

    from . import __version__

    return {
        "monadkin": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernels": "numba" if _kernels.USE_NUMBA else "numpy",
    }


def snapshot_record(t, psi, hydro: HydroState, potential, params) -> dict:
    state = hydro if psi is None else psi
    energy = conserved_quantities(state, potential, params)
    grid = hydro.grid
    unc = [uncertainty_report(state, params, axis=a) for a in range(grid.dim)]
    rec = {
        "t": float(t),
        "energy": energy.as_dict(),
        "uncertainty": [u.as_dict() for u in unc],
        "norm": float(integrate(hydro.rho, grid)),
        "flagged_fraction": hydro.flagged_fraction,
    }
    if grid.dim == 2:
        quarter = [0.25 * L for L in grid.length]
        c = grid.center()
        loop = rectangle_loop(grid, (c[0] - quarter[0], c[1] - quarter[1]), (c[0] + quarter[0], c[1] + quarter[1]))
        circ = circulation(state, loop, params)
        rec["circulation"] = {"gamma": circ.gamma, "j_estimate": circ.j_estimate}
    return rec


def kinetics_summary(cfg: ScenarioConfig, h0: HydroState, potential, params, out_dir=None) -> tuple:
    kc = cfg.kinetics
    grid = h0.grid
    ens = sample_ensemble(h0, params, kc.count, kc.seed)
    moments = estimate_moments(ens, grid, kc.bins, params)
    summary = {"count": ens.count, "weight": ens.weight, "clipped_nodes": ens.clipped_nodes}
    checks = {}
    if all(n % kc.bins == 0 for n in grid.shape):
        exp = expected_moments(h0, params, kc.bins)
        populated = moments.counts >= 100
        bands = {}
        for name, est, ref, err in (
            ("rho", moments.rho_hat, exp.rho, moments.rho_err),
            ("u", moments.u_hat[..., 0], exp.u[..., 0], moments.u_err[..., 0]),
            ("eps", moments.eps_hat, exp.eps, moments.eps_err),
        ):
            bad, tested = band_violations(est, ref, err, MC_SIGMAS, populated)
            allowed = int(stats.binom.ppf(0.999, max(tested, 1), _BAND_P))
            bands[name] = {"violations": bad, "tested": tested, "allowed": allowed}
        summary["moment_bands"] = bands
        checks["kinetics_moment_bands"] = all(b["violations"] <= b["allowed"] for b in bands.values())
    ids = {}
    ok = True
    for l in (1, 2):
        res = identity_check(h0, params, l, kc.count, kc.seed)
        ids[f"l{l}"] = {
            "moment_side": res.moment_side,
            "operator_side": res.operator_side,
            "mc_side": res.mc_side,
            "mc_stderr": res.mc_stderr,
        }
        scale = max(abs(res.operator_side), 1.0)
        ok &= abs(res.moment_side - res.operator_side) <= 1e-8 * scale and res.mc_z <= MC_SIGMAS
    summary["identity"] = ids
    checks["kinetics_identity"] = bool(ok)
    worst = 0.0
    for _ in range(kc.steps):
        ens = push_particles(ens, potential, params, kc.dt)
        before = cell_invariants(ens)
        ens = bgk_collide(ens, kc.dt, kc.tau)
        after = cell_invariants(ens)
        if not np.array_equal(before[0], after[0]):
            worst = np.inf
        mom_scale = max(np.max(np.abs(before[1])), 1e-300)
        en_scale = max(np.max(np.abs(before[2])), 1e-300)
        worst = max(
            worst,
            float(np.max(np.abs(after[1] - before[1])) / mom_scale),
            float(np.max(np.abs(after[2] - before[2])) / en_scale),
        )
    summary["bgk_steps"] = kc.steps
    summary["bgk_max_invariant_error"] = worst
    checks["kinetics_bgk_invariants"] = worst <= 1e-12
    if out_dir is not None and cfg.csv:
        os.makedirs(out_dir, exist_ok=True)
        write_ensemble_csv(ens, os.path.join(out_dir, "ensemble.csv"))
    return summary, checks


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> RunReport:
    """Evolve the scenario, record diagnostics every ``record_stride`` steps and run the checks."""
    grid, params, psi0, potential = setup(cfg)
    runs = evolve_states(cfg, psi0, potential, params)
    records = []
    states = []
    for t, psi, hydro in runs:
        if hydro is None:
            hydro = hydro_from_psi(psi, params)
        records.append(snapshot_record(t, psi, hydro, potential, params))
        states.append((t, psi, hydro))
    checks = {}
    checks["uncertainty_bounds"] = all(u["bounds_pass"] for r in records for u in r["uncertainty"])
    checks["momentum_decomposition"] = all(u["decomposition_residual"] <= 1e-8 for r in records for u in r["uncertainty"])
    n0 = records[0]["norm"]
    checks["norm_conservation"] = all(abs(r["norm"] - n0) <= 1e-10 * n0 for r in records)
    h0 = records[0]["energy"]["H"]
    checks["energy_conservation"] = all(abs(r["energy"]["H"] - h0) <= 1e-6 * max(abs(h0), 1e-300) for r in records)
    if potential.kind in ("free",):
        p0 = np.array(records[0]["energy"]["P"])
        checks["momentum_conservation"] = all(np.max(np.abs(np.array(r["energy"]["P"]) - p0)) <= 1e-6 for r in records)
    if cfg.scenario == "harmonic_ground":
        rho0 = states[0][2].rho
        drift = max(float(np.max(np.abs(s[2].rho - rho0))) for s in states)
        records[-1]["stationarity"] = drift
        checks["stationarity"] = drift < 1e-5
    if grid.dim == 2 and cfg.scenario == "vortex_2d":
        target = cfg.j * 2.0 * np.pi * params.hbar / params.mass
        checks["circulation_quantized"] = all(abs(r["circulation"]["gamma"] - target) <= 1e-6 for r in records)
    kin = None
    if cfg.kinetics is not None:
        kin, kchecks = kinetics_summary(cfg, states[0][2], potential, params, out_dir)
        checks.update(kchecks)
    return RunReport(cfg.to_dict(), records, checks, kin, metadata(), states)


# ---------------------------------------------------------------------------
# solver comparison

_MATCH_KEYS = ("scenario", "dim", "points", "length", "boundary", "dt", "t_end", "record_stride", "hbar", "mass", "n_monads",
               "omega", "sigma0", "k", "x0", "j", "level")


def _l2(a, grid):
    return float(np.sqrt(integrate(a * a, grid)))


def _pair_metrics(run_a, run_b, grid, params):
    t_a, psi_a, h_a = run_a
    t_b, psi_b, h_b = run_b
    rho_a, rho_b = _density(psi_a, h_a), _density(psi_b, h_b)
    dphi = _wrap_angle(_phase(psi_a, h_a, params) - _phase(psi_b, h_b, params))
    return {
        "t": float(t_a),
        "l2_rho": _l2(rho_a - rho_b, grid),
        "phase_rms": float(np.sqrt(integrate(rho_b * dphi * dphi, grid) / integrate(rho_b, grid))),
    }


def compare_solvers(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig, levels: int = 3) -> dict:
    """Matched-snapshot distances between two solvers and a dt-halving table.

    The table runs both solvers at ``dt, dt/2, dt/4``; ``order_vs_reference``
    uses the distance to ``cfg_b`` at each level and ``richardson_order``
    the self-differences of ``cfg_a`` between levels.
    """
    for key in _MATCH_KEYS:
        if getattr(cfg_a, key) != getattr(cfg_b, key):
            raise ConfigurationError(f"compared runs differ in {key}", key=key)
    grid, params, psi0, potential = setup(cfg_a)
    runs_a = evolve_states(cfg_a, psi0, potential, params)
    runs_b = evolve_states(cfg_b, psi0, potential, params)
    matched = [_pair_metrics(a, b, grid, params) for a, b in zip(runs_a, runs_b)]
    table = []
    finals = []
    for lev in range(levels):
        scale = 2**lev
        ca = _rescale(cfg_a, scale)
        cb = _rescale(cfg_b, scale)
        ra = evolve_states(ca, psi0, potential, params, record_stride=ca.n_steps)[-1]
        rb = evolve_states(cb, psi0, potential, params, record_stride=cb.n_steps)[-1]
        finals.append(_density(ra[1], ra[2]))
        table.append({"dt": ca.dt, **_pair_metrics(ra, rb, grid, params)})
    orders = []
    for a, b in zip(table, table[1:]):
        orders.append(math.log2(a["l2_rho"] / b["l2_rho"]) if a["l2_rho"] > 0 and b["l2_rho"] > 0 else float("nan"))
    richardson = float("nan")
    if levels >= 3:
        d1 = _l2(finals[0] - finals[1], grid)
        d2 = _l2(finals[1] - finals[2], grid)
        if d1 > 0 and d2 > 0:
            richardson = math.log2(d1 / d2)
    return _clean(
        {
            "solver": cfg_a.solver,
            "reference": cfg_b.solver,
            "snapshots": matched,
            "final_l2_rho": matched[-1]["l2_rho"],
            "convergence": table,
            "order_vs_reference": orders,
            "richardson_order": richardson,
        }
    )


def _rescale(cfg: ScenarioConfig, factor: int) -> ScenarioConfig:
    return replace(cfg, dt=cfg.dt / factor, record_stride=cfg.record_stride * factor)


# ---------------------------------------------------------------------------
# output files


def _fmt(x) -> str:
    return f"{x:.{CSV_DIGITS}g}"


def timeseries_header(dim: int) -> list:
    cols = ["t", "N_total", "P_x"]
    if dim == 2:
        cols.append("P_y")
    return cols + ["H", "H_cl", "H_int", "dx", "dp", "dp_cl", "product", "bound_pass"]


def timeseries_rows(report: RunReport) -> list:
    dim = report.config["dim"]
    rows = []
    for r in report.snapshots:
        e = r["energy"]
        u = r["uncertainty"][0]
        row = [_fmt(r["t"]), _fmt(e["N_total"])] + [_fmt(p) for p in e["P"][:dim]]
        row += [_fmt(e["H"]), _fmt(e["H_cl"]), _fmt(e["H_int"])]
        row += [_fmt(u["delta_x"]), _fmt(u["delta_p"]), _fmt(u["delta_p_cl"]), _fmt(u["product"])]
        row.append("1" if all(v["bounds_pass"] for v in r["uncertainty"]) else "0")
        rows.append(row)
    return rows


def _field_rows(t, psi, hydro, params):
    grid = hydro.grid
    W = quantum_potential(hydro, params)
    stress = stress_tensor(hydro, params, KANIADAKIS)
    mesh = [m.ravel() for m in grid.mesh()]
    cols = ["x", "y"][: grid.dim] + ["rho", "S", "s_wrapped"]
    cols += ["u"] if grid.dim == 1 else ["ux", "uy"]
    cols += ["W"]
    comps = [(0, 0)] if grid.dim == 1 else [(0, 0), (0, 1), (1, 1)]
    cols += ["sigma_" + "xy"[a] + "xy"[b] for a, b in comps]
    cols += ["epsilon"]
    data = mesh + [hydro.rho.ravel(), hydro.S.ravel(), np.full(grid.size, 1.0 if hydro.s_wrapped else 0.0)]
    data += [hydro.u[a].ravel() for a in range(grid.dim)]
    data += [W.ravel()] + [stress.sigma[a, b].ravel() for a, b in comps] + [stress.epsilon.ravel()]
    return cols, np.stack(data, axis=1)


def emit_outputs(report: RunReport, out_dir, csv_out: bool = True, fields: bool = False, params=None) -> list:
    """Write ``report.json``, the ``timeseries.csv`` and optional per-snapshot field dumps."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, "report.json")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
        if csv_out:
            path = os.path.join(out_dir, "timeseries.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(timeseries_header(report.config["dim"]))
                w.writerows(timeseries_rows(report))
            written.append(path)
        if fields:
            if params is None:
                cfg = report.config
                params = PhysicalParams(cfg["hbar"], cfg["mass"], cfg["n_monads"], cfg["omega"])
            for i, (t, psi, hydro) in enumerate(report.states):
                cols, data = _field_rows(t, psi, hydro, params)
                path = os.path.join(out_dir, f"fields_{i:04d}.csv")
                with open(path, "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(cols)
                    w.writerows([[_fmt(v) for v in row] for row in data])
                written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return written


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
