"""Reference wavefunction evolution: Strang split-step on periodic grids,
Crank-Nicolson on box grids, the energy functional and the variational check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, NumericalError, UnsupportedSchemeError
from .grid import Grid, PhysicalParams, WaveField, check_normalization, gradient, integrate, laplacian

FREE = "free"
HARMONIC = "harmonic"
BOX = "box"
TABULATED = "tabulated"


@dataclass(frozen=True)
class Potential:
    """External potential, stored in the total convention ``V = N * V_monad``."""

    kind: str = FREE
    omega: Optional[float] = None
    center: Optional[tuple] = None
    table: Optional[np.ndarray] = None
    time_dependent: bool = False

    def __post_init__(self):
        if self.kind not in (FREE, HARMONIC, BOX, TABULATED):
            raise ConfigurationError(f"unknown potential kind {self.kind!r}", key="potential")
        if self.kind == HARMONIC and not (self.omega is not None and self.omega > 0):
            raise ConfigurationError("harmonic potential requires omega > 0", key="omega")
        if self.kind == TABULATED:
            if self.table is None or not np.all(np.isfinite(self.table)):
                raise ConfigurationError("tabulated potential needs finite values", key="potential")
            tab = np.array(self.table, dtype=float)
            tab.flags.writeable = False
            object.__setattr__(self, "table", tab)

    @classmethod
    def free(cls):
        return cls(FREE)

    @classmethod
    def harmonic(cls, omega, center=None):
        return cls(HARMONIC, omega=float(omega), center=None if center is None else tuple(center))

    @classmethod
    def box(cls):
        return cls(BOX)

    @classmethod
    def tabulated(cls, values):
        return cls(TABULATED, table=np.asarray(values, dtype=float))

    def _center(self, dim):
        return np.zeros(dim) if self.center is None else np.broadcast_to(np.asarray(self.center, float), (dim,))

    def values(self, grid: Grid, params: PhysicalParams) -> np.ndarray:
        if self.kind in (FREE, BOX):
            return np.zeros(grid.shape)
        if self.kind == HARMONIC:
            c = self._center(grid.dim)
            r2 = sum((x - c[a]) ** 2 for a, x in enumerate(grid.mesh()))
            return 0.5 * params.mass * self.omega**2 * r2
        if self.table.shape != grid.shape:
            raise ConfigurationError("tabulated potential does not match grid", key="potential")
        return np.array(self.table)

    def per_monad(self, grid: Grid, params: PhysicalParams) -> np.ndarray:
        return self.values(grid, params) / params.n_monads

    def force(self, positions, grid: Grid, params: PhysicalParams) -> np.ndarray:
        """Total force ``-grad V`` at arbitrary positions, shape ``(count, dim)``."""
        positions = np.atleast_2d(positions)
        if self.kind in (FREE, BOX):
            return np.zeros_like(positions)
        if self.kind == HARMONIC:
            return -params.mass * self.omega**2 * (positions - self._center(positions.shape[1]))
        grads = [np.gradient(self.values(grid, params), grid.spacing[a], axis=a) for a in range(grid.dim)]
        if grid.dim == 1:
            return -np.interp(positions[:, 0], grid.axis(0), grads[0])[:, None]
        from scipy.interpolate import RegularGridInterpolator

        axes = [grid.axis(a) for a in range(grid.dim)]
        out = np.empty_like(positions)
        for a in range(grid.dim):
            interp = RegularGridInterpolator(axes, grads[a], bounds_error=False, fill_value=None)
            out[:, a] = -interp(positions)
        return out


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_end: float
    scheme: str = "split_step"
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive", key="dt")
        if not self.t_end >= 0:
            raise ConfigurationError("t_end must be non-negative", key="t_end")
        if self.scheme not in ("split_step", "crank_nicolson"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}", key="scheme")
        if int(self.record_stride) < 1:
            raise ConfigurationError("record_stride must be >= 1", key="record_stride")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


class SplitStepPropagator:
    """Strang splitting: half potential kick, exact kinetic drift in k-space, half kick."""

    def __init__(self, grid: Grid, potential: Potential, params: PhysicalParams, dt: float, imaginary=False):
        if not grid.periodic:
            raise UnsupportedSchemeError("split-step needs a periodic grid; use step_cn on box grids", key="solver")
        ks = np.meshgrid(*[grid.wavenumbers(a) for a in range(grid.dim)], indexing="ij")
        k2 = sum(k * k for k in ks)
        V = potential.values(grid, params)
        hbar, m = params.hbar, params.mass
        if imaginary:
            self.kinetic = np.exp(-hbar * k2 * dt / (2.0 * m))
            self.half_kick = np.exp(-V * dt / (2.0 * hbar))
        else:
            self.kinetic = np.exp(-1j * hbar * k2 * dt / (2.0 * m))
            self.half_kick = np.exp(-1j * V * dt / (2.0 * hbar))
        self.axes = tuple(range(grid.dim))

    def __call__(self, values):
        out = self.half_kick * values
        out = np.fft.ifftn(self.kinetic * np.fft.fftn(out, axes=self.axes), axes=self.axes)
        return self.half_kick * out


def _dirichlet_bands(n, h, hbar, mass, V, coef):
    """Banded form of ``I + coef * H`` for the cell-centred wall Laplacian."""
    k = hbar**2 / (2.0 * mass * h * h)
    diag = np.full(n, 2.0 * k, dtype=complex) + V
    diag[0] += k
    diag[-1] += k
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = -coef * k
    ab[1] = 1.0 + coef * diag
    ab[2, :-1] = -coef * k
    return ab


def _banded_matvec(ab, x):
    """Apply the tridiagonal matrix stored in LAPACK banded form along axis 0."""
    out = ab[1].reshape((-1,) + (1,) * (x.ndim - 1)) * x
    out[:-1] += ab[0, 1:].reshape((-1,) + (1,) * (x.ndim - 1)) * x[1:]
    out[1:] += ab[2, :-1].reshape((-1,) + (1,) * (x.ndim - 1)) * x[:-1]
    return out


def _solve(ab, rhs):
    try:
        out = linalg.solve_banded((1, 1), ab, rhs, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Crank-Nicolson solve failed: {exc} (max |diag| = {np.max(np.abs(ab[1])):.3e})") from exc
    return out


class CrankNicolsonPropagator:
    """Crank-Nicolson on box grids.

    1-D: one tridiagonal Cayley step with the potential inside.  2-D: a
    symmetric composition of directional Cayley steps around an exact
    potential phase, each factor unitary.
    """

    def __init__(self, grid: Grid, potential: Potential, params: PhysicalParams, dt: float, imaginary=False):
        if grid.periodic:
            raise UnsupportedSchemeError("Crank-Nicolson is implemented for box grids; use step_split", key="solver")
        self.grid = grid
        self.dim = grid.dim
        V = potential.values(grid, params)
        hbar, m = params.hbar, params.mass
        # imaginary time: (1 + tau H / 2 hbar) psi' = (1 - tau H / 2 hbar) psi
        unit = 1.0 if imaginary else 1j
        if self.dim == 1:
            c = unit * dt / (2.0 * hbar)
            self.lhs = _dirichlet_bands(grid.points[0], grid.spacing[0], hbar, m, V, c)
            self.rhs = _dirichlet_bands(grid.points[0], grid.spacing[0], hbar, m, V, -c)
            return
        c = unit * dt / (4.0 * hbar)
        self.lhs = [_dirichlet_bands(grid.points[a], grid.spacing[a], hbar, m, 0.0, c) for a in range(2)]
        self.rhs = [_dirichlet_bands(grid.points[a], grid.spacing[a], hbar, m, 0.0, -c) for a in range(2)]
        if imaginary:
            self.kick = np.exp(-V * dt / hbar)
        else:
            self.kick = np.exp(-1j * V * dt / hbar)

    def _directional(self, values, a):
        moved = np.moveaxis(values, a, 0)
        out = _solve(self.lhs[a], _banded_matvec(self.rhs[a], moved))
        return np.moveaxis(out, 0, a)

    def __call__(self, values):
        if self.dim == 1:
            return _solve(self.lhs, _banded_matvec(self.rhs, values))
        out = self._directional(values, 0)
        out = self._directional(out, 1)
        out = self.kick * out
        out = self._directional(out, 1)
        return self._directional(out, 0)


def propagator(grid, potential, params, dt, imaginary=False):
    if grid.periodic:
        return SplitStepPropagator(grid, potential, params, dt, imaginary)
    return CrankNicolsonPropagator(grid, potential, params, dt, imaginary)


def step_split(psi: WaveField, potential: Potential, params: PhysicalParams, dt: float) -> WaveField:
    prop = SplitStepPropagator(psi.grid, potential, params, dt)
    return WaveField(psi.grid, prop(psi.values), psi.norm_target)


def step_cn(psi: WaveField, potential: Potential, params: PhysicalParams, dt: float) -> WaveField:
    prop = CrankNicolsonPropagator(psi.grid, potential, params, dt)
    return WaveField(psi.grid, prop(psi.values), psi.norm_target)


def evolve(
    psi: WaveField,
    potential: Potential,
    params: PhysicalParams,
    config: EvolutionConfig,
    callback: Optional[Callable[[int, float, WaveField], None]] = None,
):
    """Run ``config.n_steps`` steps, returning ``[(t, WaveField), ...]`` every ``record_stride`` steps.

    The initial state and the final state are always recorded.
    """
    if config.scheme == "split_step":
        prop = SplitStepPropagator(psi.grid, potential, params, config.dt)
    else:
        prop = CrankNicolsonPropagator(psi.grid, potential, params, config.dt)
    values = np.array(psi.values)
    snaps = [(0.0, psi)]
    n = config.n_steps
    for step in range(1, n + 1):
        values = prop(values)
        if step % config.record_stride == 0 or step == n:
            if not np.all(np.isfinite(values)):
                raise NumericalError(f"non-finite wavefunction at step {step}")
            snap = WaveField(psi.grid, values, psi.norm_target)
            snaps.append((step * config.dt, snap))
            if callback is not None:
                callback(step, step * config.dt, snap)
    return snaps


# ---------------------------------------------------------------------------
# energy functional and the variational principle


class EnergyParts(NamedTuple):
    H: float
    kinetic_part: float
    potential_part: float


def _monad_field(psi: WaveField, params: PhysicalParams):
    """The wavefunction normalised to the monad count."""
    return np.asarray(psi.values) * np.sqrt(params.n_monads / psi.norm_target)


def energy_functional(psi: WaveField, potential: Potential, params: PhysicalParams) -> EnergyParts:
    """``H = int (eta^2 / 2 mu) |grad Psi|^2 + V_monad |Psi|^2`` with ``Psi`` normalised to N."""
    grid = psi.grid
    big = _monad_field(psi, params)
    grads = gradient(big, grid)
    kinetic = params.eta**2 / (2.0 * params.mu) * integrate(np.sum(np.abs(grads) ** 2, axis=0), grid)
    pot = integrate(potential.per_monad(grid, params) * np.abs(big) ** 2, grid)
    return EnergyParts(float(kinetic + pot), float(kinetic), float(pot))


def solver_laplacian(values, grid: Grid) -> np.ndarray:
    """The Laplacian inside the propagators.

    Periodic grids: spectral, every mode including Nyquist (what the
    split-step kinetic factor exponentiates).  Box grids: the 3-point stencil
    with odd ghost nodes across the walls (the Crank-Nicolson matrix).
    """
    values = np.asarray(values)
    if grid.periodic:
        return laplacian(values, grid)
    out = np.zeros(values.shape, dtype=np.result_type(values, float))
    for a in range(grid.dim):
        v = np.moveaxis(values, a, 0)
        padded = np.concatenate([-v[:1], v, -v[-1:]], axis=0)
        lap = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / grid.spacing[a] ** 2
        out += np.moveaxis(lap, 0, a)
    return out


def hamiltonian_gradient(psi: WaveField, potential: Potential, params: PhysicalParams) -> np.ndarray:
    """``dH/dPsi* = -(eta^2 / 2 mu) lap Psi + V_monad Psi`` on the monad-normalised field.

    ``lap`` is :func:`solver_laplacian`, so this is the exact Wirtinger
    gradient of :func:`discrete_energy` and the generator of the propagators.
    """
    big = _monad_field(psi, params)
    lap = solver_laplacian(big, psi.grid)
    return -params.eta**2 / (2.0 * params.mu) * lap + potential.per_monad(psi.grid, params) * big


def variational_residual(psi: WaveField, potential: Potential, params: PhysicalParams, dt_probe: float) -> float:
    """Relative L2 mismatch between ``i eta dPsi/dt`` and ``dH/dPsi*``.

    The time derivative is the centred difference of one solver step forward
    and one backward, so the residual of a smooth state falls as dt_probe**2.
    """
    prop_f = propagator(psi.grid, potential, params, dt_probe)
    prop_b = propagator(psi.grid, potential, params, -dt_probe)
    big = _monad_field(psi, params)
    dpsi_dt = (prop_f(big) - prop_b(big)) / (2.0 * dt_probe)
    lhs = 1j * params.eta * dpsi_dt
    rhs = hamiltonian_gradient(psi, potential, params)
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


def discrete_energy(values, grid: Grid, potential: Potential, params: PhysicalParams) -> float:
    """``<Psi, H Psi>`` with the propagators' discrete Hamiltonian, for any monad-scaled field."""
    values = np.asarray(values)
    kin = -params.eta**2 / (2.0 * params.mu) * np.real(integrate(np.conj(values) * solver_laplacian(values, grid), grid))
    return float(kin + integrate(potential.per_monad(grid, params) * np.abs(values) ** 2, grid))


def functional_gradient_check(
    psi: WaveField, potential: Potential, params: PhysicalParams, perturbation=1e-6, nodes=None
) -> float:
    """Largest relative mismatch between ``dH/dPsi*`` and a finite-difference
    Wirtinger gradient of :func:`discrete_energy` at the sampled nodes.
    """
    grid = psi.grid
    big = _monad_field(psi, params)
    flat = big.ravel()
    if nodes is None:
        nodes = np.linspace(0, flat.size - 1, 16).astype(int)
    analytic = hamiltonian_gradient(psi, potential, params).ravel() * grid.cell_volume
    scale = np.max(np.abs(analytic))
    worst = 0.0
    for j in nodes:
        parts = []
        for direction in (1.0, 1j):
            plus = flat.copy()
            minus = flat.copy()
            plus[j] += direction * perturbation
            minus[j] -= direction * perturbation
            e_p = discrete_energy(plus.reshape(grid.shape), grid, potential, params)
            e_m = discrete_energy(minus.reshape(grid.shape), grid, potential, params)
            parts.append((e_p - e_m) / (2.0 * perturbation))
        numeric = 0.5 * (parts[0] + 1j * parts[1])
        worst = max(worst, abs(numeric - analytic[j]) / scale)
    return float(worst)


def ground_state(
    grid: Grid,
    potential: Potential,
    params: PhysicalParams,
    psi0: Optional[WaveField] = None,
    dtau: float = 1e-2,
    tol: float = 1e-10,
    refinements: int = 4,
    max_steps: int = 200_000,
    check_every: int = 10,
) -> WaveField:
    """Lowest eigenstate by imaginary-time propagation with renormalisation.

    Each stage runs until the Rayleigh quotient moves by less than ``tol``
    between checks; ``dtau`` is then halved ``refinements`` times to shrink
    the splitting bias of the periodic propagator.
    """
    if psi0 is None:
        c = grid.center()
        width = min(1.0, min(grid.length) / 8.0)
        r2 = sum((x - c[a]) ** 2 for a, x in enumerate(grid.mesh()))
        psi0 = WaveField(grid, np.exp(-r2 / (2.0 * width**2)))
    values = WaveField(grid, psi0.values, 1.0).normalized().values
    steps = 0
    for stage in range(refinements + 1):
        prop = propagator(grid, potential, params, dtau * 0.5**stage, imaginary=True)
        last = np.inf
        while steps < max_steps:
            for _ in range(check_every):
                values = prop(values)
                values = values / np.sqrt(integrate(np.abs(values) ** 2, grid))
                steps += 1
            energy = energy_functional(WaveField(grid, values), potential, params).H
            if abs(energy - last) < tol:
                break
            last = energy
    out = WaveField(grid, values, 1.0)
    if abs(check_normalization(out) - 1.0) > 1e-12:
        out = out.normalized()
    return out
