"""Direct evolution of the fluid representation.

Two equivalent integrators: the real pair (log density, action) and the
complex log field Omega, both advanced by classical RK4 with 4th-order
finite differences.  Log fields of localised states grow without bound
towards the edges, so they are never differentiated spectrally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, PreconditionError, SolverDegeneracyError
from .grid import (
    RHO_FLOOR,
    Grid,
    HydroState,
    OmegaField,
    PhysicalParams,
    fd4_derivative,
    hydro_from_fields,
    integrate,
)
from .schrodinger import Potential

MAX_FLAGGED_FRACTION = 0.05
STABILITY_FACTOR = 0.2


@dataclass(frozen=True)
class MadelungState:
    hydro: HydroState
    time: float = 0.0
    # relative norm drift removed by the last renormalisation
    renorm_correction: float = 0.0

    @property
    def flagged_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.hydro.flagged)


def stability_limit(grid: Grid, params: PhysicalParams) -> float:
    return STABILITY_FACTOR * min(grid.spacing) ** 2 * params.mass / params.hbar


def _check_dt(dt, grid, params):
    limit = stability_limit(grid, params)
    if not 0 < abs(dt) <= limit:
        raise PreconditionError(f"|dt| = {abs(dt):.3e} exceeds the explicit stability limit {limit:.3e}")


def _check_degeneracy(flagged):
    frac = np.count_nonzero(flagged) / flagged.size
    if frac > MAX_FLAGGED_FRACTION:
        raise SolverDegeneracyError(
            f"{100 * frac:.1f}% of nodes are below the density floor (limit {100 * MAX_FLAGGED_FRACTION:.0f}%)"
        )


def _grad_lap(values, grid, period=0.0):
    grads = [fd4_derivative(values, grid.spacing[a], a, 1, period) for a in range(grid.dim)]
    lap = sum(fd4_derivative(values, grid.spacing[a], a, 2, period) for a in range(grid.dim))
    return grads, lap


def _pair_rhs(xi, S, V, grid, params):
    hbar, m = params.hbar, params.mass
    gx, lap_xi = _grad_lap(xi, grid)
    gs, lap_s = _grad_lap(S, grid, 2.0 * np.pi * hbar)
    dot = sum(a * b for a, b in zip(gx, gs))
    gx2 = sum(a * a for a in gx)
    gs2 = sum(a * a for a in gs)
    dxi = -(lap_s + dot) / m
    dS = hbar**2 / (4.0 * m) * lap_xi + hbar**2 / (8.0 * m) * gx2 - gs2 / (2.0 * m) - V
    return dxi, dS


def _omega_rhs(om, Vm, grid, params):
    # i eta dOmega/dt = -(eta^2 / 2 mu) [lap Omega + (grad Omega)^2] + V_monad
    eta, mu = params.eta, params.mu
    re_g, re_lap = _grad_lap(om.real, grid)
    im_g, im_lap = _grad_lap(om.imag, grid, 2.0 * np.pi)
    grad_sq = sum((a + 1j * b) ** 2 for a, b in zip(re_g, im_g))
    lap = re_lap + 1j * im_lap
    return 1j * eta / (2.0 * mu) * (lap + grad_sq) - 1j * Vm / eta


def _first_bad(*arrays):
    for arr in arrays:
        bad = ~np.isfinite(arr)
        if bad.any():
            return tuple(int(i) for i in np.unravel_index(int(np.argmax(bad)), arr.shape))
    return None


def madelung_rhs(state: MadelungState, potential: Potential, params: PhysicalParams):
    """Time derivatives ``(dxi/dt, dS/dt)`` of the log density and total action."""
    h = state.hydro
    _check_degeneracy(h.flagged)
    return _pair_rhs(np.asarray(h.xi), np.asarray(h.S), potential.values(h.grid, params), h.grid, params)


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class PairIntegrator:
    """RK4 stepper for the (xi, S) pair operating on raw arrays."""

    def __init__(self, grid: Grid, potential: Potential, params: PhysicalParams, dt: float, renormalize=True):
        _check_dt(dt, grid, params)
        self.grid = grid
        self.params = params
        self.dt = dt
        self.renormalize = renormalize
        self.V = potential.values(grid, params)

    def _f(self, y):
        dxi, dS = _pair_rhs(y[0], y[1], self.V, self.grid, self.params)
        return np.stack([dxi, dS])

    def step(self, xi, S, norm_target=1.0, step_index=None):
        y = _rk4(self._f, np.stack([xi, S]), self.dt)
        bad = _first_bad(y[0], y[1])
        if bad is not None:
            raise BlowUpError(f"non-finite Madelung field at node {bad}", node=bad, step=step_index)
        xi_new, S_new = y
        drift = 0.0
        if self.renormalize:
            total = integrate(np.exp(xi_new), self.grid)
            drift = total / norm_target - 1.0
            xi_new = xi_new - np.log1p(drift)
        return xi_new, S_new, drift


class OmegaIntegrator:
    """RK4 stepper for the complex log field."""

    def __init__(self, grid: Grid, potential: Potential, params: PhysicalParams, dt: float, renormalize=True):
        _check_dt(dt, grid, params)
        self.grid = grid
        self.params = params
        self.dt = dt
        self.renormalize = renormalize
        self.Vm = potential.per_monad(grid, params)

    def step(self, om, norm_target=1.0, step_index=None):
        om = _rk4(lambda y: _omega_rhs(y, self.Vm, self.grid, self.params), om, self.dt)
        bad = _first_bad(om)
        if bad is not None:
            raise BlowUpError(f"non-finite Omega field at node {bad}", node=bad, step=step_index)
        drift = 0.0
        if self.renormalize:
            total = integrate(np.exp(2.0 * om.real), self.grid)
            drift = total / norm_target - 1.0
            om = om - 0.5 * np.log1p(drift)
        return om, drift


def step_rk4(state: MadelungState, potential: Potential, params: PhysicalParams, dt: float, renormalize=True):
    h = state.hydro
    _check_degeneracy(h.flagged)
    integ = PairIntegrator(h.grid, potential, params, dt, renormalize)
    xi, S, drift = integ.step(np.asarray(h.xi), np.asarray(h.S), h.norm_target)
    hydro = hydro_from_fields(h.grid, xi, S, params, h.norm_target, h.s_wrapped)
    return MadelungState(hydro, state.time + dt, drift)


def omega_step(omega: OmegaField, potential: Potential, params: PhysicalParams, dt: float, renormalize=True):
    _check_degeneracy(np.exp(2.0 * np.asarray(omega.values).real) <= RHO_FLOOR)
    integ = OmegaIntegrator(omega.grid, potential, params, dt, renormalize)
    om, _ = integ.step(np.asarray(omega.values), omega.norm_target)
    return OmegaField(omega.grid, om, omega.norm_target)


def evolve_madelung(state: MadelungState, potential, params, dt, n_steps, record_stride=1, renormalize=True):
    """RK4 run of the pair; returns ``[MadelungState, ...]`` every ``record_stride`` steps."""
    h = state.hydro
    _check_degeneracy(h.flagged)
    integ = PairIntegrator(h.grid, potential, params, dt, renormalize)
    xi, S = np.array(h.xi), np.array(h.S)
    out = [state]
    for step in range(1, n_steps + 1):
        xi, S, drift = integ.step(xi, S, h.norm_target, step)
        if step % record_stride == 0 or step == n_steps:
            hydro = hydro_from_fields(h.grid, xi, S, params, h.norm_target, h.s_wrapped)
            _check_degeneracy(hydro.flagged)
            out.append(MadelungState(hydro, state.time + step * dt, drift))
    return out


def evolve_omega(omega: OmegaField, potential, params, dt, n_steps, record_stride=1, renormalize=True):
    """RK4 run of the complex log field; returns ``[(t, OmegaField), ...]``."""
    integ = OmegaIntegrator(omega.grid, potential, params, dt, renormalize)
    om = np.array(omega.values)
    out = [(0.0, omega)]
    for step in range(1, n_steps + 1):
        om, _ = integ.step(om, omega.norm_target, step)
        if step % record_stride == 0 or step == n_steps:
            _check_degeneracy(np.exp(2.0 * om.real) <= RHO_FLOOR)
            out.append((step * dt, OmegaField(omega.grid, om, omega.norm_target)))
    return out
