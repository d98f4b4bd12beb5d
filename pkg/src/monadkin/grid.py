"""Grids, fields, derivatives and the exact maps between the wavefunction,
fluid (rho, S) and complex-log (Omega) representations.

Conventions
-----------
Fields are stored in the probabilistic convention: ``psi`` is normalised to
``norm_target`` (1 by default), actions and potentials are totals carrying
``hbar`` and ``mass``.  The per-monad constants ``eta = hbar / N`` and
``mu = mass / N`` are derived on demand by :class:`PhysicalParams`.

Nodes whose density is at or below :data:`RHO_FLOOR` are *flagged*: the log
density and the phase are not evaluated there but filled in from valid
neighbours, and every consumer treats them as low-confidence.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .errors import ConfigurationError

RHO_FLOOR = 1e-30

PERIODIC = "periodic"
BOX = "box"
_BOUNDARIES = (PERIODIC, BOX)


def _frozen(a, dtype=None):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PhysicalParams:
    """Particle constants in the total convention plus the monad count."""

    hbar: float = 1.0
    mass: float = 1.0
    n_monads: float = 1.0
    omega: Optional[float] = None

    def __post_init__(self):
        if not self.hbar > 0:
            raise ConfigurationError(f"hbar must be positive, got {self.hbar}", key="hbar")
        if not self.mass > 0:
            raise ConfigurationError(f"mass must be positive, got {self.mass}", key="mass")
        if not self.n_monads >= 1:
            raise ConfigurationError(f"n_monads must be >= 1, got {self.n_monads}", key="n_monads")
        if self.omega is not None and not self.omega > 0:
            raise ConfigurationError(f"omega must be positive, got {self.omega}", key="omega")

    @property
    def eta(self) -> float:
        """Per-monad action constant, hbar / N."""
        return self.hbar / self.n_monads

    @property
    def mu(self) -> float:
        """Monad mass, mass / N."""
        return self.mass / self.n_monads

    def with_n(self, n_monads: float) -> "PhysicalParams":
        return PhysicalParams(self.hbar, self.mass, n_monads, self.omega)


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D or 2-D mesh.

    Periodic grids are node-indexed from ``origin`` (default ``-L/2``); box
    grids are cell-centred on ``[origin, origin + L]`` (default origin 0) with
    the walls half a cell outside the outermost nodes.
    """

    points: tuple
    length: tuple
    boundary: str = PERIODIC
    origin: tuple = None

    def __post_init__(self):
        if self.boundary not in _BOUNDARIES:
            raise ConfigurationError(f"unknown boundary {self.boundary!r}", key="boundary")
        if len(self.points) != len(self.length) or len(self.points) not in (1, 2):
            raise ConfigurationError("grid must be 1-D or 2-D with one length per axis", key="dim")
        for n in self.points:
            if int(n) != n or n < 8:
                raise ConfigurationError(f"points per axis must be an integer >= 8, got {n}", key="points")
        for L in self.length:
            if not L > 0:
                raise ConfigurationError(f"length per axis must be positive, got {L}", key="length")
        if self.origin is None:
            if self.boundary == PERIODIC:
                object.__setattr__(self, "origin", tuple(-0.5 * L for L in self.length))
            else:
                object.__setattr__(self, "origin", tuple(0.0 for _ in self.length))
        object.__setattr__(self, "points", tuple(int(n) for n in self.points))
        object.__setattr__(self, "length", tuple(float(L) for L in self.length))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.length, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    def axis(self, a: int) -> np.ndarray:
        h = self.spacing[a]
        shift = 0.0 if self.periodic else 0.5
        return self.origin[a] + (np.arange(self.points[a]) + shift) * h

    def mesh(self) -> tuple:
        return tuple(np.meshgrid(*[self.axis(a) for a in range(self.dim)], indexing="ij"))

    def bounds(self, a: int) -> tuple:
        return self.origin[a], self.origin[a] + self.length[a]

    def wavenumbers(self, a: int) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points[a], d=self.spacing[a])

    def center(self) -> tuple:
        return tuple(self.origin[a] + 0.5 * self.length[a] for a in range(self.dim))


def make_grid(dim, points_per_axis, length_per_axis, boundary=PERIODIC, origin=None) -> Grid:
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}", key="dim")
    pts = tuple(np.broadcast_to(np.atleast_1d(points_per_axis), (dim,)).tolist())
    lens = tuple(np.broadcast_to(np.atleast_1d(length_per_axis).astype(float), (dim,)).tolist())
    if origin is not None:
        origin = tuple(np.broadcast_to(np.atleast_1d(origin).astype(float), (dim,)).tolist())
    return Grid(pts, lens, boundary, origin)


# ---------------------------------------------------------------------------
# field containers


@dataclass(frozen=True)
class WaveField:
    grid: Grid
    values: np.ndarray
    norm_target: float = 1.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ConfigurationError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def normalized(self, target: Optional[float] = None) -> "WaveField":
        target = self.norm_target if target is None else target
        norm = check_normalization(self)
        return WaveField(self.grid, self.values * np.sqrt(target / norm), target)


@dataclass(frozen=True)
class HydroState:
    """Fluid representation: density, action, log density and velocity.

    ``S`` is the total action (hbar times phase).  In 1-D, and in 2-D states
    without vorticity, it is unwrapped; otherwise ``s_wrapped`` is set and the
    integer winding of every elementary plaquette is kept in ``windings``.
    """

    grid: Grid
    rho: np.ndarray
    S: np.ndarray
    xi: np.ndarray
    u: np.ndarray
    flagged: np.ndarray
    norm_target: float = 1.0
    s_wrapped: bool = False
    windings: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("rho", "S", "xi", "flagged"):
            arr = getattr(self, name)
            if np.shape(arr) != self.grid.shape:
                raise ConfigurationError(f"{name} shape {np.shape(arr)} does not match grid")
        object.__setattr__(self, "rho", _frozen(self.rho, float))
        object.__setattr__(self, "S", _frozen(self.S, float))
        object.__setattr__(self, "xi", _frozen(self.xi, float))
        object.__setattr__(self, "u", _frozen(self.u, float))
        object.__setattr__(self, "flagged", _frozen(self.flagged, bool))
        if self.windings is not None:
            object.__setattr__(self, "windings", _frozen(self.windings, int))

    @property
    def flagged_fraction(self) -> float:
        return float(np.count_nonzero(self.flagged)) / self.grid.size


@dataclass(frozen=True)
class OmegaField:
    """Complex log field ``xi/2 + i S_monad/eta``."""

    grid: Grid
    values: np.ndarray
    norm_target: float = 1.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ConfigurationError("omega shape does not match grid")
        object.__setattr__(self, "values", _frozen(vals))


Field = Union[WaveField, HydroState, OmegaField]


# ---------------------------------------------------------------------------
# differentiation and quadrature


def fd4_derivative(values, spacing: float, axis: int, order: int, period: float = 0.0) -> np.ndarray:
    """4th-order centred differences with one-sided 4th-order closures.

    With ``period > 0`` neighbour differences are wrapped into
    ``(-period/2, period/2]`` first, which differentiates a multivalued
    phase without unwrapping it.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    values = np.asarray(values)
    if np.iscomplexobj(values):
        re = fd4_derivative(values.real, spacing, axis, order, period)
        im = fd4_derivative(values.imag, spacing, axis, order, period)
        return re + 1j * im
    moved = np.moveaxis(values, axis, -1)
    lines = moved.reshape(-1, moved.shape[-1])
    out = _kernels.fd4_lines(lines, spacing, order, period)
    return np.moveaxis(out.reshape(moved.shape), -1, axis)


def spectral_derivative(values, grid: Grid, axis: int = 0, order: int = 1) -> np.ndarray:
    """Derivative along ``axis``: FFT on periodic grids, 4th-order FD on box grids."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    values = np.asarray(values)
    if not grid.periodic:
        return fd4_derivative(values, grid.spacing[axis], axis, order)
    n = grid.points[axis]
    k = grid.wavenumbers(axis)
    if order % 2 and n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0
    mult = (1j * k) ** order
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def gradient(values, grid: Grid) -> np.ndarray:
    return np.stack([spectral_derivative(values, grid, a, 1) for a in range(grid.dim)])


def laplacian(values, grid: Grid) -> np.ndarray:
    return sum(spectral_derivative(values, grid, a, 2) for a in range(grid.dim))


def log_gradient(values, grid: Grid, period: float = 0.0) -> np.ndarray:
    """FD4 gradient for log-type fields (xi, S) that are not periodic functions."""
    return np.stack([fd4_derivative(values, grid.spacing[a], a, 1, period) for a in range(grid.dim)])


def log_hessian(values, grid: Grid, period: float = 0.0) -> np.ndarray:
    d = grid.dim
    hess = np.empty((d, d) + grid.shape)
    first = log_gradient(values, grid, period)
    for a in range(d):
        hess[a, a] = fd4_derivative(values, grid.spacing[a], a, 2, period)
        for b in range(a + 1, d):
            hess[a, b] = hess[b, a] = fd4_derivative(first[a], grid.spacing[b], b, 1)
    return hess


def integrate(values, grid: Grid):
    """Rectangle (midpoint) rule over the grid cells."""
    return np.sum(values) * grid.cell_volume


def check_normalization(field_: Field) -> float:
    """Quadrature of the density carried by ``field_``."""
    if isinstance(field_, WaveField):
        dens = np.abs(field_.values) ** 2
    elif isinstance(field_, HydroState):
        dens = field_.rho
    elif isinstance(field_, OmegaField):
        dens = np.abs(np.exp(field_.values)) ** 2
    else:
        raise TypeError(f"cannot normalise {type(field_).__name__}")
    return float(integrate(dens, field_.grid))


# ---------------------------------------------------------------------------
# flagged-node filling and phase unwrapping


def _fill_line(values, valid):
    if valid.all() or not valid.any():
        return values
    idx = np.arange(values.size)
    good = idx[valid]
    out = values.copy()
    bad = ~valid
    out[bad] = np.interp(idx[bad], good, values[valid])
    if good.size >= 2:
        lo, hi = good[0], good[-1]
        left = idx < lo
        slope = values[good[1]] - values[lo]
        out[left] = values[lo] + slope * (idx[left] - lo) / (good[1] - lo)
        right = idx > hi
        slope = values[hi] - values[good[-2]]
        out[right] = values[hi] + slope * (idx[right] - hi) / (hi - good[-2])
    return out


def fill_flagged(values, flagged) -> np.ndarray:
    """Replace flagged entries by linear interpolation/extrapolation along grid lines."""
    values = np.array(values, dtype=float)
    valid = ~np.asarray(flagged, dtype=bool)
    if valid.all():
        return values
    if values.ndim == 1:
        return _fill_line(values, valid)
    done = valid.copy()
    for axis in (1, 0):
        v = np.moveaxis(values, axis, -1)
        ok = np.moveaxis(done, axis, -1)
        for line in np.ndindex(v.shape[:-1]):
            if ok[line].any() and not ok[line].all():
                v[line] = _fill_line(v[line], ok[line])
                ok[line] = True
    return values


def _wrap_angle(d):
    return d - 2.0 * np.pi * np.round(d / (2.0 * np.pi))


def plaquette_windings(phase) -> np.ndarray:
    """Integer winding of the phase around every elementary 2-D plaquette."""
    p = np.asarray(phase)
    d1 = _wrap_angle(p[1:, :-1] - p[:-1, :-1])
    d2 = _wrap_angle(p[1:, 1:] - p[1:, :-1])
    d3 = _wrap_angle(p[:-1, 1:] - p[1:, 1:])
    d4 = _wrap_angle(p[:-1, :-1] - p[:-1, 1:])
    return np.rint((d1 + d2 + d3 + d4) / (2.0 * np.pi)).astype(int)


def _unwrap_line(raw, valid, anchor=None):
    """Unwrap ``raw`` over valid nodes, fill the rest, keep ``raw[anchor]`` on its branch."""
    out = raw.astype(float).copy()
    if valid.any():
        out[valid] = np.unwrap(raw[valid])
        out = _fill_line(out, valid)
    if anchor is not None:
        out -= 2.0 * np.pi * np.round((out[anchor] - raw[anchor]) / (2.0 * np.pi))
    return out


def unwrap_phase(raw, flagged, anchor):
    """Axis-sweep unwrapping anchored at ``anchor`` (a node index tuple)."""
    raw = np.asarray(raw, dtype=float)
    valid = ~np.asarray(flagged, dtype=bool)
    if raw.ndim == 1:
        return _unwrap_line(raw, valid, anchor[0])
    i0, j0 = anchor
    out = np.empty_like(raw)
    col = _unwrap_line(raw[:, j0], valid[:, j0], i0)
    for i in range(raw.shape[0]):
        row = _unwrap_line(raw[i], valid[i])
        out[i] = row - 2.0 * np.pi * np.round((row[j0] - col[i]) / (2.0 * np.pi))
    return out


# ---------------------------------------------------------------------------
# representation maps


def _phase_velocity(S, grid: Grid, params: PhysicalParams) -> np.ndarray:
    period = 2.0 * np.pi * params.hbar
    return log_gradient(S, grid, period) / params.mass


def hydro_from_psi(psi: WaveField, params: PhysicalParams) -> HydroState:
    grid = psi.grid
    vals = np.asarray(psi.values)
    rho = np.abs(vals) ** 2
    flagged = rho <= RHO_FLOOR
    raw = np.angle(vals)
    anchor = np.unravel_index(int(np.argmax(rho)), grid.shape)
    windings = None
    s_wrapped = False
    if grid.dim == 2:
        windings = plaquette_windings(raw)
        s_wrapped = bool(np.any(windings != 0))
    if s_wrapped:
        phase = raw
    else:
        phase = unwrap_phase(raw, flagged, anchor)
    xi = np.full(grid.shape, np.nan)
    xi[~flagged] = np.log(rho[~flagged])
    xi = fill_flagged(xi, flagged)
    S = params.hbar * phase
    u = _phase_velocity(S, grid, params)
    return HydroState(grid, rho, S, xi, u, flagged, psi.norm_target, s_wrapped, windings)


def hydro_from_fields(grid: Grid, xi, S, params: PhysicalParams, norm_target=1.0, s_wrapped=None) -> HydroState:
    """Build a fluid state from log density and action (the dynamical pair)."""
    xi = np.asarray(xi, dtype=float)
    S = np.asarray(S, dtype=float)
    rho = np.exp(xi)
    flagged = ~(rho > RHO_FLOOR)
    windings = None
    if grid.dim == 2:
        windings = plaquette_windings(S / params.hbar)
        if s_wrapped is None:
            s_wrapped = bool(np.any(windings != 0))
    u = _phase_velocity(S, grid, params)
    return HydroState(grid, rho, S, xi, u, flagged, norm_target, bool(s_wrapped), windings)


def psi_from_hydro(h: HydroState, params: PhysicalParams) -> WaveField:
    values = np.sqrt(h.rho) * np.exp(1j * h.S / params.hbar)
    return WaveField(h.grid, values, h.norm_target)


def omega_values(xi, action, eta):
    """Complex log field from log density and a per-monad action."""
    return np.asarray(xi) / 2.0 + 1j * np.asarray(action) / eta


def omega_from_hydro(h: HydroState, params: PhysicalParams) -> OmegaField:
    # the stored S is the total action; each monad carries S / N
    return OmegaField(h.grid, omega_values(h.xi, h.S / params.n_monads, params.eta), h.norm_target)


def hydro_from_omega(omega: OmegaField, params: PhysicalParams) -> HydroState:
    vals = np.asarray(omega.values)
    xi = 2.0 * vals.real
    S = params.n_monads * (params.eta * vals.imag)
    return hydro_from_fields(omega.grid, xi, S, params, omega.norm_target)
