"""Derived fields and scalar diagnostics of a fluid state.

Quantum potential, the two stress closures and their force, the
electromagnetic analogy, the energy partition, the uncertainty chain and
the circulation quantum.  Everything is in the total convention; per-monad
values follow by dividing by ``N``.

Energy-type integrals are assembled from the flux products
``g = Re(psi* grad psi)`` and ``c = Im(psi* grad psi)`` so that
``|grad psi|^2 rho = g^2 + c^2`` holds node by node.  That makes the
momentum-spread decomposition exact at quadrature precision instead of
exact only up to the discretisation error of the log fields.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import PathError, PreconditionError
from .grid import (
    Grid,
    HydroState,
    PhysicalParams,
    WaveField,
    _wrap_angle,
    fd4_derivative,
    hydro_from_psi,
    integrate,
    log_gradient,
    log_hessian,
    psi_from_hydro,
    spectral_derivative,
)
from .schrodinger import Potential, energy_functional

KANIADAKIS = "kaniadakis"
TAKABAYASHI = "takabayashi"

# slack allowed on the equality side of the uncertainty inequalities
INEQUALITY_TOL = 1e-9


def _fd4_grad(values, grid: Grid) -> np.ndarray:
    return np.stack([fd4_derivative(values, grid.spacing[a], a, 1) for a in range(grid.dim)])


def _fd4_div(vec, grid: Grid) -> np.ndarray:
    return sum(fd4_derivative(vec[a], grid.spacing[a], a, 1) for a in range(grid.dim))


def curl_2d(vec, grid: Grid) -> np.ndarray:
    """Scalar curl ``d_x v_y - d_y v_x`` of a 2-D vector field (FD4)."""
    if grid.dim != 2:
        raise PreconditionError("curl is defined for 2-D fields")
    return fd4_derivative(vec[1], grid.spacing[0], 0, 1) - fd4_derivative(vec[0], grid.spacing[1], 1, 1)


# ---------------------------------------------------------------------------
# quantum potential and stress


def quantum_potential(h: HydroState, params: PhysicalParams) -> np.ndarray:
    """``W = -(hbar^2/4m) [ |grad xi|^2 / 2 + lap xi ]``.

    Flagged nodes carry the value computed from the interpolated log
    density; consult ``h.flagged`` before trusting them.
    """
    g = log_gradient(h.xi, h.grid)
    lap = sum(fd4_derivative(h.xi, h.grid.spacing[a], a, 2) for a in range(h.grid.dim))
    return -params.hbar**2 / (4.0 * params.mass) * (0.5 * np.sum(g * g, axis=0) + lap)


@dataclass(frozen=True)
class StressField:
    """Symmetric stress ``sigma[j, k]`` per node with its energy density and pressure."""

    form: str
    sigma: np.ndarray
    epsilon: np.ndarray
    pressure: np.ndarray


def stress_tensor(h: HydroState, params: PhysicalParams, form: str = KANIADAKIS) -> StressField:
    """Internal stress in either closure.

    ``kaniadakis``: ``-(hbar^2/4m) d_j d_k xi``.
    ``takabayashi``: ``-(hbar^2/4m) [(lap rho / rho) delta_jk - d_j rho d_k rho / rho^2]``,
    evaluated through ``lap rho / rho = lap xi + |grad xi|^2`` and
    ``d_j rho / rho = d_j xi`` so that the tails never divide by a tiny density.
    The energy density is ``tr(sigma) / 2`` and the pressure ``2 rho eps / n``.
    """
    grid = h.grid
    d = grid.dim
    c = params.hbar**2 / (4.0 * params.mass)
    hess = log_hessian(h.xi, grid)
    if form == KANIADAKIS:
        sigma = -c * hess
    elif form == TAKABAYASHI:
        g = log_gradient(h.xi, grid)
        lap_over = np.trace(hess) + np.sum(g * g, axis=0)
        sigma = np.empty_like(hess)
        for j in range(d):
            for k in range(d):
                sigma[j, k] = -c * ((lap_over if j == k else 0.0) - g[j] * g[k])
    else:
        raise PreconditionError(f"unknown stress form {form!r}")
    eps = 0.5 * np.trace(sigma)
    pressure = 2.0 * h.rho * eps / d
    return StressField(form, sigma, eps, pressure)


def trusted_nodes(flagged, reach: int = 6) -> np.ndarray:
    """Nodes whose derivative stencils (up to ``reach`` nodes away) avoid flagged nodes."""
    bad = np.asarray(flagged, dtype=bool).copy()
    if not bad.any():
        return ~bad
    for axis in range(bad.ndim):
        grown = bad.copy()
        n = bad.shape[axis]
        for s in range(1, reach + 1):
            lo = [slice(None)] * bad.ndim
            hi = [slice(None)] * bad.ndim
            lo[axis], hi[axis] = slice(0, n - s), slice(s, n)
            grown[tuple(lo)] |= bad[tuple(hi)]
            grown[tuple(hi)] |= bad[tuple(lo)]
        bad = grown
    return ~bad


class StressForce(NamedTuple):
    force: np.ndarray
    minus_grad_w: np.ndarray
    trusted: np.ndarray

    @property
    def max_mismatch(self) -> float:
        """Largest component mismatch over trusted nodes."""
        return float(np.max(np.abs(self.force - self.minus_grad_w)[:, self.trusted], initial=0.0))


def stress_force(stress: StressField, h: HydroState, params: PhysicalParams) -> StressForce:
    """``F_j = -sigma_jk d_k xi - d_k sigma_jk`` alongside ``-grad W`` for comparison."""
    grid = h.grid
    g = log_gradient(h.xi, grid)
    sig = stress.sigma
    force = np.stack([-np.sum(sig[j] * g, axis=0) - _fd4_div(sig[j], grid) for j in range(grid.dim)])
    # two chained FD4 stencils reach six nodes
    return StressForce(force, -_fd4_grad(quantum_potential(h, params), grid), trusted_nodes(h.flagged))


# ---------------------------------------------------------------------------
# electromagnetic analogy


@dataclass(frozen=True)
class EMAnalogy:
    A0: np.ndarray
    A: np.ndarray
    E_field: np.ndarray
    B_field: Optional[np.ndarray]
    lorentz_lhs: np.ndarray
    lorentz_rhs: np.ndarray

    @property
    def relative_mismatch(self) -> float:
        lhs = np.linalg.norm(self.lorentz_lhs)
        return float(np.linalg.norm(self.lorentz_lhs - self.lorentz_rhs) / lhs) if lhs > 0 else float(
            np.linalg.norm(self.lorentz_rhs)
        )


def em_analogy(snapshots: Sequence, params: PhysicalParams) -> EMAnalogy:
    """Fields of the Lorentz-like form of the Euler equation.

    ``snapshots`` is a sequence of ``(t, HydroState)``.  With two entries
    the fields refer to the midpoint in time; with three, to the middle
    snapshot with a centred time derivative.
    """
    if len(snapshots) not in (2, 3):
        raise PreconditionError("em_analogy needs two or three consecutive (t, HydroState) snapshots")
    times = [float(t) for t, _ in snapshots]
    states = [s for _, s in snapshots]
    if not all(b > a for a, b in zip(times, times[1:])):
        raise PreconditionError("snapshot times must increase")
    grid = states[0].grid
    if len(states) == 2:
        u = 0.5 * (states[0].u + states[1].u)
        du_dt = (states[1].u - states[0].u) / (times[1] - times[0])
    else:
        u = states[1].u
        du_dt = (states[2].u - states[0].u) / (times[2] - times[0])
    m = params.mass
    A0 = 0.5 * np.sum(u * u, axis=0)
    E = -_fd4_grad(A0, grid) - du_dt
    jac = np.stack([_fd4_grad(u[j], grid) for j in range(grid.dim)])  # jac[j, k] = d_k u_j
    advect = np.einsum("k...,jk...->j...", u, jac)
    lhs = -m * (du_dt + advect)
    rhs = m * E
    B = None
    if grid.dim == 2:
        B = curl_2d(u, grid)
        rhs = rhs + m * np.stack([u[1] * B, -u[0] * B])
    return EMAnalogy(A0, u.copy(), E, B, lhs, rhs)


# ---------------------------------------------------------------------------
# energies


def _as_psi(state, params) -> WaveField:
    if isinstance(state, WaveField):
        return state
    if isinstance(state, HydroState):
        return psi_from_hydro(state, params)
    raise TypeError(f"expected WaveField or HydroState, got {type(state).__name__}")


def _as_hydro(state, params) -> HydroState:
    if isinstance(state, HydroState):
        return state
    if isinstance(state, WaveField):
        return hydro_from_psi(state, params)
    raise TypeError(f"expected WaveField or HydroState, got {type(state).__name__}")


class _Flux(NamedTuple):
    rho: np.ndarray
    valid: np.ndarray
    grad_sq: np.ndarray  # |d_a psi|^2 per axis
    g: np.ndarray  # Re(psi* d_a psi) = d_a rho / 2
    c: np.ndarray  # Im(psi* d_a psi) = rho d_a S / hbar


def _flux(psi: WaveField, flagged) -> _Flux:
    grid = psi.grid
    vals = np.asarray(psi.values)
    grads = np.stack([spectral_derivative(vals, grid, a, 1) for a in range(grid.dim)])
    prod = np.conj(vals) * grads
    return _Flux(np.abs(vals) ** 2, ~np.asarray(flagged), np.abs(grads) ** 2, prod.real, prod.imag)


def _over_rho(num, fx: _Flux):
    out = np.zeros_like(num)
    out[..., fx.valid] = num[..., fx.valid] / fx.rho[fx.valid]
    return out


@dataclass(frozen=True)
class EnergyReport:
    H_total: float
    H_classical: float
    H_internal: float
    potential_part: float
    kinetic_classical_part: float
    P_total: np.ndarray
    N_total: float
    # the same energy from the wavefunction functional
    H_wavefunction: float
    # int eps rho and int W_I rho, equal after integration by parts
    epsilon_moment: float
    internal_w_moment: float
    # kinetic energy on zero-density nodes, where the split is 0/0
    nodal_part: float = 0.0

    def as_dict(self) -> dict:
        return {
            "H": self.H_total,
            "H_cl": self.H_classical,
            "H_int": self.H_internal,
            "potential_part": self.potential_part,
            "kinetic_classical_part": self.kinetic_classical_part,
            "P": [float(p) for p in self.P_total],
            "N_total": self.N_total,
            "H_wavefunction": self.H_wavefunction,
            "epsilon_moment": self.epsilon_moment,
            "internal_w_moment": self.internal_w_moment,
            "nodal_part": self.nodal_part,
        }


def conserved_quantities(state: Union[HydroState, WaveField], potential: Potential, params: PhysicalParams) -> EnergyReport:
    """Number, momentum and the classical/internal split of the energy."""
    h = _as_hydro(state, params)
    psi = _as_psi(state, params)
    grid = h.grid
    hbar, m = params.hbar, params.mass
    fx = _flux(psi, h.flagged)
    internal = hbar**2 / (8.0 * m) * integrate(np.sum(_over_rho(4.0 * fx.g**2, fx), axis=0), grid)
    kin_cl = hbar**2 / (2.0 * m) * integrate(np.sum(_over_rho(fx.c**2, fx), axis=0), grid)
    pot = integrate(potential.values(grid, params) * h.rho, grid)
    momentum = np.array([hbar * integrate(fx.c[a], grid) for a in range(grid.dim)])
    nodal = hbar**2 / (2.0 * m) * integrate(np.sum(np.where(fx.valid, 0.0, fx.grad_sq), axis=0), grid)
    h_cl = kin_cl + pot
    eps = stress_tensor(h, params, KANIADAKIS).epsilon
    gx = log_gradient(h.xi, grid)
    w_int = hbar**2 / (8.0 * m) * np.sum(gx * gx, axis=0)
    valid = fx.valid
    return EnergyReport(
        H_total=float(h_cl + internal + nodal),
        H_classical=float(h_cl),
        H_internal=float(internal),
        potential_part=float(pot),
        kinetic_classical_part=float(kin_cl),
        P_total=momentum,
        N_total=float(integrate(h.rho, grid)),
        H_wavefunction=energy_functional(psi, potential, params).H,
        epsilon_moment=float(integrate(np.where(valid, eps * h.rho, 0.0), grid)),
        internal_w_moment=float(integrate(np.where(valid, w_int * h.rho, 0.0), grid)),
        nodal_part=float(nodal),
    )


# ---------------------------------------------------------------------------
# uncertainty chain


@dataclass(frozen=True)
class UncertaintyReport:
    """Position and momentum spreads along one axis and the inequality chain.

    ``internal_energy`` is the part of the internal energy carried by that
    axis (the whole of it in 1-D).  Each ``*_slack`` is lhs minus rhs of an
    inequality, which must be >= ``-INEQUALITY_TOL``.
    """

    delta_x: float
    delta_p: float
    delta_p_cl: float
    internal_energy: float
    product: float
    bound: float
    mean_x: float
    mean_p: float
    decomposition_residual: float
    # hbar^2 <|d psi|^2> from zero-density nodes, outside both parts
    nodal_p2: float
    gradient_bound_slack: float  # int |(<x> - x) rho'| >= N
    log_gradient_bound_slack: float  # dx^2 <xi'^2> >= 1
    internal_bound_slack: float  # dx sqrt(2 m H_int) >= hbar / 2
    momentum_bound_slack: float  # dp >= sqrt(2 m H_int)
    product_bound_slack: float  # dx dp >= hbar / 2

    @property
    def bounds_pass(self) -> bool:
        return all(
            s >= -INEQUALITY_TOL
            for s in (
                self.gradient_bound_slack,
                self.log_gradient_bound_slack,
                self.internal_bound_slack,
                self.momentum_bound_slack,
                self.product_bound_slack,
            )
        )

    def as_dict(self) -> dict:
        out = {k: float(getattr(self, k)) for k in self.__dataclass_fields__}
        out["bounds_pass"] = self.bounds_pass
        return out


def uncertainty_report(state: Union[HydroState, WaveField], params: PhysicalParams, axis: int = 0) -> UncertaintyReport:
    """Spreads from quadrature and the spectral momentum moment.

    The momentum second moment is ``hbar^2 int |d psi|^2`` with the grid's
    native derivative (spectral on periodic grids, so this is Parseval's
    form of the spectral moment).
    """
    psi = _as_psi(state, params)
    flagged = state.flagged if isinstance(state, HydroState) else np.abs(np.asarray(psi.values)) ** 2 <= 1e-30
    grid = psi.grid
    hbar, m = params.hbar, params.mass
    fx = _flux(psi, flagged)
    rho = fx.rho
    norm = integrate(rho, grid)
    x = grid.mesh()[axis]
    mean_x = integrate(x * rho, grid) / norm
    var_x = integrate((x - mean_x) ** 2 * rho, grid) / norm
    g, c = fx.g[axis], fx.c[axis]
    mean_p = hbar * integrate(c, grid) / norm
    p2 = hbar**2 * integrate(fx.grad_sq[axis], grid) / norm
    nodal_p2 = hbar**2 * integrate(np.where(fx.valid, 0.0, fx.grad_sq[axis]), grid) / norm
    p2_cl = hbar**2 * integrate(_over_rho(c**2, fx), grid) / norm
    xi_sq = integrate(_over_rho(4.0 * g**2, fx), grid) / norm  # <(d xi)^2>
    internal = hbar**2 / (8.0 * m) * xi_sq
    var_p = p2 - mean_p**2
    var_p_cl = p2_cl - mean_p**2
    dx = float(np.sqrt(max(var_x, 0.0)))
    dp = float(np.sqrt(max(var_p, 0.0)))
    dp_cl = float(np.sqrt(max(var_p_cl, 0.0)))
    two_m_h = 2.0 * m * internal
    rest = var_p - nodal_p2
    residual = abs(rest - var_p_cl - two_m_h) / var_p if var_p > 0 else abs(var_p_cl + two_m_h)
    grad_lhs = integrate(np.abs((mean_x - x) * 2.0 * g), grid) / norm
    bound = 0.5 * hbar
    return UncertaintyReport(
        delta_x=dx,
        delta_p=dp,
        delta_p_cl=dp_cl,
        internal_energy=float(internal),
        product=dx * dp,
        bound=bound,
        mean_x=float(mean_x),
        mean_p=float(mean_p),
        decomposition_residual=float(residual),
        nodal_p2=float(nodal_p2),
        gradient_bound_slack=float(grad_lhs - 1.0),
        log_gradient_bound_slack=float(var_x * xi_sq - 1.0),
        internal_bound_slack=float(dx * np.sqrt(two_m_h) - bound),
        momentum_bound_slack=float(dp - np.sqrt(two_m_h)),
        product_bound_slack=float(dx * dp - bound),
    )


# ---------------------------------------------------------------------------
# circulation


class Circulation(NamedTuple):
    gamma: float
    j_estimate: float

    @property
    def winding(self) -> int:
        return int(round(self.j_estimate))


def rectangle_loop(grid: Grid, lower, upper) -> list:
    """Counter-clockwise closed node path along the rectangle spanned by two corners.

    Corners are physical coordinates and are snapped to the nearest nodes.
    """
    if grid.dim != 2:
        raise PreconditionError("loops live on 2-D grids")
    idx = []
    for a in range(2):
        ax = grid.axis(a)
        lo = int(np.argmin(np.abs(ax - lower[a])))
        hi = int(np.argmin(np.abs(ax - upper[a])))
        if hi <= lo:
            raise PathError("loop rectangle is degenerate on this grid")
        idx.append((lo, hi))
    (i0, i1), (j0, j1) = idx
    path = [(i, j0) for i in range(i0, i1)]
    path += [(i1, j) for j in range(j0, j1)]
    path += [(i, j1) for i in range(i1, i0, -1)]
    path += [(i0, j) for j in range(j1, j0, -1)]
    path.append((i0, j0))
    return path


def circulation(state: Union[HydroState, WaveField], loop, params: PhysicalParams) -> Circulation:
    """``gamma = (hbar/m) sum of wrapped phase increments`` around a closed node path."""
    grid = state.grid
    if grid.dim != 2:
        raise PreconditionError("circulation needs a 2-D state")
    nodes = [tuple(int(v) for v in p) for p in loop]
    if len(nodes) < 4 or nodes[0] != nodes[-1]:
        raise PathError("loop must be closed (first node == last node) and enclose at least one cell")
    if isinstance(state, WaveField):
        phase = np.angle(np.asarray(state.values))
        flagged = np.abs(np.asarray(state.values)) ** 2 <= 1e-30
    else:
        phase = np.asarray(state.S) / params.hbar
        flagged = state.flagged
    n0, n1 = grid.shape
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        if flagged[a] or flagged[b]:
            raise PathError(f"loop crosses low-density node {a if flagged[a] else b}")
        if grid.periodic:
            di, dj = (b[0] - a[0]) % n0, (b[1] - a[1]) % n1
            hop = min(di, n0 - di) + min(dj, n1 - dj)
        else:
            hop = abs(b[0] - a[0]) + abs(b[1] - a[1])
        if hop != 1:
            raise PathError(f"loop nodes {a} and {b} are not grid neighbours")
        total += _wrap_angle(phase[b] - phase[a])
    gamma = params.hbar / params.mass * total
    return Circulation(float(gamma), float(gamma * params.mass / (2.0 * np.pi * params.hbar)))
