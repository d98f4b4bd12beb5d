"""Phase-space ensemble of monads.

A state ``(rho, u, eps)`` is turned into ``count`` sample monads whose
positions follow ``rho`` and whose velocities are Gaussian with mean ``u``
and per-axis variance ``2 eps / (n m)``.  Each sample stands for
``N / count`` monads.  Sampling uses a piecewise-constant density on the
grid cells and every monad takes the fields of its own cell, so binned
estimates on cell-aligned bins have exactly known expectations
(:func:`expected_moments`).

Random numbers come from Philox generators keyed by the run seed and an
operation tag, so results are bit-for-bit reproducible.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from . import _kernels
from .diagnostics import KANIADAKIS, stress_tensor
from .errors import PreconditionError
from .grid import Grid, HydroState, PhysicalParams, WaveField, hydro_from_psi, integrate, spectral_derivative
from .schrodinger import Potential

MIN_COUNT = 1000
MIN_BINS = 16

_TAG_SAMPLE = 1
_TAG_COLLIDE = 2


def _generator(seed: int, *tags: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *tags])))


def cell_lower(grid: Grid) -> np.ndarray:
    """Lower edge of the first cell on every axis (cells are centred on nodes)."""
    return np.array([grid.axis(a)[0] - 0.5 * grid.spacing[a] for a in range(grid.dim)])


def cell_index(positions, grid: Grid) -> np.ndarray:
    """Flat index of the grid cell containing each position."""
    lo = cell_lower(grid)
    idx = []
    for a in range(grid.dim):
        i = np.floor((positions[:, a] - lo[a]) / grid.spacing[a]).astype(np.int64)
        idx.append(np.clip(i, 0, grid.points[a] - 1))
    return np.ravel_multi_index(tuple(idx), grid.shape)


@dataclass(frozen=True)
class MonadEnsemble:
    """Sample monads: ``positions`` and ``velocities`` have shape ``(count, dim)``."""

    grid: Grid
    positions: np.ndarray
    velocities: np.ndarray
    seed: int
    n_monads: float = 1.0
    norm_target: float = 1.0
    # nodes whose negative internal energy was clipped to zero when sampling
    clipped_nodes: int = 0
    collisions: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, ndmin=2)
        vel = np.array(self.velocities, dtype=float, ndmin=2)
        if pos.shape != vel.shape or pos.shape[1] != self.grid.dim:
            raise PreconditionError(f"positions {pos.shape} and velocities {vel.shape} must be (count, {self.grid.dim})")
        pos.flags.writeable = False
        vel.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def weight(self) -> float:
        """Monads represented by each sample, ``N / count``."""
        return self.n_monads / self.count


def _sample_cells_1d(rho, count, rng):
    cdf = np.cumsum(rho)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    return np.minimum(idx, rho.size - 1)


def _sample_cells_rejection(rho, count, rng):
    flat = rho.ravel()
    peak = flat.max()
    out = np.empty(count, dtype=np.int64)
    filled = 0
    accept_rate = max(flat.mean() / peak, 1e-6)
    while filled < count:
        batch = int(min(max(2 * (count - filled) / accept_rate, 1024), 1 << 24))
        cand = rng.integers(0, flat.size, batch)
        keep = cand[rng.random(batch) * peak < flat[cand]]
        take = min(keep.size, count - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def sample_ensemble(h: HydroState, params: PhysicalParams, count: int, seed: int) -> MonadEnsemble:
    """Draw ``count`` monads consistent with the fluid state ``h``.

    Positions: inverse CDF of the cell density in 1-D, rejection in 2-D,
    uniform inside the chosen cell.  Velocities: Gaussian, mean ``u`` and
    per-axis variance ``2 eps / (n m)`` of the chosen cell's node.  Negative
    ``eps`` (positive log-curvature) has no Gaussian realisation and is
    clipped to zero; the number of such nodes is kept on the ensemble.
    """
    count = int(count)
    if count < MIN_COUNT:
        raise PreconditionError(f"count must be >= {MIN_COUNT} for statistical use, got {count}")
    grid = h.grid
    rng = _generator(seed, _TAG_SAMPLE)
    rho = np.where(h.flagged, 0.0, np.asarray(h.rho))
    if grid.dim == 1:
        cells = _sample_cells_1d(rho, count, rng)
    else:
        cells = _sample_cells_rejection(rho, count, rng)
    multi = np.unravel_index(cells, grid.shape)
    lo = cell_lower(grid)
    pos = np.empty((count, grid.dim))
    for a in range(grid.dim):
        pos[:, a] = lo[a] + (multi[a] + rng.random(count)) * grid.spacing[a]
    eps = stress_tensor(h, params, KANIADAKIS).epsilon
    negative = (eps < 0.0) & ~np.asarray(h.flagged)
    var = 2.0 * np.maximum(eps, 0.0) / (grid.dim * params.mass)
    sd = np.sqrt(var.ravel()[cells])
    vel = np.empty((count, grid.dim))
    z = rng.standard_normal((count, grid.dim))
    for a in range(grid.dim):
        vel[:, a] = np.asarray(h.u[a]).ravel()[cells] + sd * z[:, a]
    return MonadEnsemble(grid, pos, vel, int(seed), params.n_monads, h.norm_target, int(np.count_nonzero(negative)))


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentFields:
    """Binned estimates with their standard errors.

    Arrays are indexed by bin (shape ``bins``), with trailing component
    axes for vectors and tensors.  ``rho_hat`` is in the probabilistic
    normalisation of the generating state.  Empty bins hold NaN and are
    listed in ``empty``; nothing is imputed.
    """

    edges: tuple
    counts: np.ndarray
    rho_hat: np.ndarray
    u_hat: np.ndarray
    sigma_hat: np.ndarray
    eps_hat: np.ndarray
    heat_hat: np.ndarray
    energy_hat: np.ndarray
    rho_err: np.ndarray
    u_err: np.ndarray
    eps_err: np.ndarray
    heat_err: np.ndarray

    @property
    def centers(self) -> tuple:
        return tuple(0.5 * (e[1:] + e[:-1]) for e in self.edges)

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0


def _bin_layout(grid: Grid, bins):
    nb = tuple(int(b) for b in np.broadcast_to(np.atleast_1d(bins), (grid.dim,)))
    if min(nb) < MIN_BINS:
        raise PreconditionError(f"need at least {MIN_BINS} bins per axis, got {nb}")
    lo = cell_lower(grid)
    edges = tuple(np.linspace(lo[a], lo[a] + grid.length[a], nb[a] + 1) for a in range(grid.dim))
    return nb, edges


def _bin_index(positions, edges, nb):
    idx = []
    for a, e in enumerate(edges):
        width = (e[-1] - e[0]) / nb[a]
        i = np.floor((positions[:, a] - e[0]) / width).astype(np.int64)
        idx.append(np.clip(i, 0, nb[a] - 1))
    return np.ravel_multi_index(tuple(idx), nb)


def estimate_moments(ens: MonadEnsemble, grid: Grid, bins, params: Optional[PhysicalParams] = None) -> MomentFields:
    """Per-bin density, mean velocity, stress, internal energy, heat flux and kinetic energy."""
    mass = 1.0 if params is None else params.mass
    nb, edges = _bin_layout(grid, bins)
    dim = grid.dim
    nbins = int(np.prod(nb))
    idx = _bin_index(ens.positions, edges, nb)
    counts, mean, c2, c3, c4, c6 = _kernels.bin_moments(idx, ens.velocities, nbins)
    vol = float(np.prod([(e[-1] - e[0]) / n for e, n in zip(edges, nb)]))
    n = counts.astype(float)
    frac = n / ens.count
    rho = frac / vol * ens.norm_target
    rho_err = np.sqrt(frac * (1.0 - frac) / ens.count) / vol * ens.norm_target
    with np.errstate(invalid="ignore", divide="ignore"):
        empty = counts == 0
        safe = np.where(empty, np.nan, n)
        u = np.where(empty[:, None], np.nan, mean)
        sigma = mass * c2 / safe[:, None, None]
        eps = 0.5 * np.trace(sigma, axis1=1, axis2=2)
        heat = 0.5 * mass * c3 / safe[:, None]
        kin = 0.5 * mass * np.sum(u * u, axis=1) + eps
        var_axis = np.diagonal(c2, axis1=1, axis2=2) / safe[:, None]
        u_err = np.sqrt(var_axis / safe[:, None])
        mean_sq = np.trace(c2, axis1=1, axis2=2) / safe
        eps_err = 0.5 * mass * np.sqrt(np.maximum(c4 / safe - mean_sq**2, 0.0) / safe)
        heat_err = 0.5 * mass * np.sqrt(np.maximum(c6 / safe[:, None] - (c3 / safe[:, None]) ** 2, 0.0) / safe[:, None])
    shape = nb
    return MomentFields(
        edges=edges,
        counts=counts.reshape(shape),
        rho_hat=rho.reshape(shape),
        u_hat=u.reshape(shape + (dim,)),
        sigma_hat=sigma.reshape(shape + (dim, dim)),
        eps_hat=eps.reshape(shape),
        heat_hat=heat.reshape(shape + (dim,)),
        energy_hat=kin.reshape(shape),
        rho_err=rho_err.reshape(shape),
        u_err=u_err.reshape(shape + (dim,)),
        eps_err=eps_err.reshape(shape),
        heat_err=heat_err.reshape(shape + (dim,)),
    )


class ExpectedMoments(NamedTuple):
    rho: np.ndarray
    u: np.ndarray
    eps: np.ndarray


def expected_moments(h: HydroState, params: PhysicalParams, bins) -> ExpectedMoments:
    """Exact expectations of the binned estimators for an ensemble sampled from ``h``.

    Each bin is a mixture of the cells it covers, so its internal energy
    includes the spread of the cell mean velocities.  Bins must tile whole
    cells (``points`` divisible by ``bins`` on every axis).
    """
    grid = h.grid
    nb, _ = _bin_layout(grid, bins)
    for a in range(grid.dim):
        if grid.points[a] % nb[a]:
            raise PreconditionError("bins must tile whole cells for exact expectations")
    rho = np.where(h.flagged, 0.0, np.asarray(h.rho))
    eps = np.maximum(stress_tensor(h, params, KANIADAKIS).epsilon, 0.0)
    u = np.asarray(h.u)
    total = rho.sum()
    block = tuple(grid.points[a] // nb[a] for a in range(grid.dim))

    def pool(field_):
        shape = []
        for a in range(grid.dim):
            shape += [nb[a], block[a]]
        return field_.reshape(shape).sum(axis=tuple(range(1, 2 * grid.dim, 2)))

    w = pool(rho)
    mean_u = np.stack([pool(rho * u[a]) / w for a in range(grid.dim)], axis=-1)
    second = pool(rho * (2.0 * eps / params.mass + np.sum(u * u, axis=0))) / w
    eps_bin = 0.5 * params.mass * (second - np.sum(mean_u**2, axis=-1))
    vol = np.prod([grid.length[a] / nb[a] for a in range(grid.dim)])
    return ExpectedMoments(w / total / vol * h.norm_target, mean_u, eps_bin)


def band_violations(estimate, expected, stderr, sigmas: float = 3.0, mask=None) -> tuple:
    """Number of bins outside ``sigmas`` standard errors and the number tested."""
    est = np.asarray(estimate, dtype=float)
    exp = np.asarray(expected, dtype=float)
    err = np.asarray(stderr, dtype=float)
    ok = np.isfinite(est) & np.isfinite(err) & (err > 0)
    if mask is not None:
        ok &= np.broadcast_to(mask, ok.shape)
    z = np.abs(est[ok] - exp[ok]) / err[ok]
    return int(np.count_nonzero(z > sigmas)), int(z.size)


# ---------------------------------------------------------------------------
# transport and collisions


def push_particles(ens: MonadEnsemble, potential: Potential, params: PhysicalParams, dt: float) -> MonadEnsemble:
    """Velocity-Verlet step under the external force ``-grad V / m``.

    Positions are wrapped on periodic grids and folded at elastic walls on
    box grids.  Free monads move by exactly ``v dt``.
    """
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    grid = ens.grid
    m = params.mass
    x = np.array(ens.positions)
    v = np.array(ens.velocities)
    if potential.kind in ("free", "box"):
        x = x + v * dt
    else:
        v = v + 0.5 * dt * potential.force(x, grid, params) / m
        x = x + v * dt
    lo = cell_lower(grid)
    x, v = _kernels.reflect(x, v, lo, np.array(grid.length), np.array([grid.periodic] * grid.dim))
    if potential.kind not in ("free", "box"):
        v = v + 0.5 * dt * potential.force(x, grid, params) / m
    return replace(ens, positions=x, velocities=v)


def bgk_collide(ens: MonadEnsemble, dt: float, tau: float) -> MonadEnsemble:
    """Relaxation towards the local Gaussian with exact per-cell invariants.

    Every monad is selected with probability ``min(dt / tau, 1)`` and its
    velocity redrawn from the Gaussian with its cell's current mean and
    temperature.  A shift and a common scale per cell then restore the
    cell's momentum and kinetic energy; the count never changes.  Cells
    holding fewer than two monads are left alone.
    """
    if not tau > 0:
        raise PreconditionError("tau must be positive")
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    grid = ens.grid
    prob = min(dt / tau, 1.0)
    step = ens.collisions + 1
    if prob == 0.0:
        return replace(ens, collisions=step)
    rng = _generator(ens.seed, _TAG_COLLIDE, step)
    cells = cell_index(ens.positions, grid)
    v_old = np.array(ens.velocities)
    ncell = grid.size
    counts = np.bincount(cells, minlength=ncell)
    dim = grid.dim
    mean = np.stack([np.bincount(cells, weights=v_old[:, a], minlength=ncell) for a in range(dim)], axis=1)
    mean /= np.maximum(counts, 1)[:, None]
    dev = v_old - mean[cells]
    temp = np.bincount(cells, weights=np.sum(dev * dev, axis=1), minlength=ncell) / (np.maximum(counts, 1) * dim)
    chosen = rng.random(ens.count) < prob
    z = rng.standard_normal((ens.count, dim))
    v_new = v_old.copy()
    redraw = mean[cells] + np.sqrt(temp[cells])[:, None] * z
    v_new[chosen] = redraw[chosen]
    touched = np.bincount(cells, weights=chosen.astype(float), minlength=ncell) > 0
    fixed = _kernels.cell_affine(cells, v_old, v_new, ncell)
    out = np.where(touched[cells][:, None], fixed, v_old)
    return replace(ens, velocities=out, collisions=step)


def cell_invariants(ens: MonadEnsemble) -> tuple:
    """Per-cell ``(count, momentum sum, kinetic sum)`` (velocity units, unit mass)."""
    cells = cell_index(ens.positions, ens.grid)
    n = ens.grid.size
    v = ens.velocities
    counts = np.bincount(cells, minlength=n)
    mom = np.stack([np.bincount(cells, weights=v[:, a], minlength=n) for a in range(v.shape[1])], axis=1)
    energy = np.bincount(cells, weights=np.sum(v * v, axis=1), minlength=n)
    return counts, mom, energy


def position_mean(ens: MonadEnsemble, observable: Callable[[np.ndarray], np.ndarray]) -> tuple:
    """Ensemble mean of a position-only observable and its standard error."""
    vals = np.asarray(observable(ens.positions), dtype=float)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size))


# ---------------------------------------------------------------------------
# velocity-moment identity


class IdentityResult(NamedTuple):
    moment_side: float
    operator_side: float
    mc_side: float
    mc_stderr: float
    # rounding floor of the sample mean; matters only for near-deterministic velocities
    mc_resolution: float = 0.0

    @property
    def relative_gap(self) -> float:
        scale = max(abs(self.operator_side), 1e-300)
        return abs(self.moment_side - self.operator_side) / scale

    @property
    def mc_z(self) -> float:
        spread = float(np.hypot(self.mc_stderr, self.mc_resolution))
        if spread == 0.0:
            return 0.0 if self.mc_side == self.operator_side else np.inf
        return abs(self.mc_side - self.operator_side) / spread


def identity_check(
    state: Union[HydroState, WaveField],
    params: PhysicalParams,
    l: int,
    mc_count: int = 100_000,
    seed: int = 0,
    axis: int = 0,
) -> IdentityResult:
    """``int rho <v_i^l>`` three ways, for velocity component ``axis``.

    moment side: from the fields, ``int rho u`` (l=1) or
    ``int rho (u^2 + Sigma_ii / m)`` (l=2);
    operator side: ``int psi* (-i hbar/m d_i)^l psi`` with the grid's native derivative;
    Monte Carlo side: sample mean of ``v_i^l`` over a sampled ensemble.
    All three are normalised by ``int rho``.
    """
    if l not in (1, 2):
        raise PreconditionError("l must be 1 or 2")
    if isinstance(state, WaveField):
        h = hydro_from_psi(state, params)
        vals = np.asarray(state.values)
    else:
        h = state
        vals = np.sqrt(np.asarray(h.rho)) * np.exp(1j * np.asarray(h.S) / params.hbar)
    grid = h.grid
    m, hbar = params.mass, params.hbar
    valid = ~np.asarray(h.flagged)
    rho = np.asarray(h.rho)
    norm = integrate(rho, grid)
    u = np.asarray(h.u[axis])
    if l == 1:
        moment = integrate(np.where(valid, rho * u, 0.0), grid)
        op = (-1j * hbar / m) * integrate(np.conj(vals) * spectral_derivative(vals, grid, axis, 1), grid)
    else:
        # rho * Sigma_ii from rho'' - rho'^2 / rho: same field as -(hbar^2/4m) rho xi'',
        # but free of the log singularity at hard walls
        d_rho = 2.0 * np.real(np.conj(vals) * spectral_derivative(vals, grid, axis, 1))
        dd_rho = spectral_derivative(rho, grid, axis, 2)
        ratio = np.zeros_like(rho)
        ratio[valid] = d_rho[valid] ** 2 / rho[valid]
        rho_sigma = -(hbar**2) / (4.0 * m) * (dd_rho - ratio)
        moment = integrate(np.where(valid, rho * u * u + rho_sigma / m, 0.0), grid)
        op = -((hbar / m) ** 2) * integrate(np.conj(vals) * spectral_derivative(vals, grid, axis, 2), grid)
    ens = sample_ensemble(h, params, mc_count, seed)
    samples = ens.velocities[:, axis] ** l
    return IdentityResult(
        float(moment / norm),
        float(np.real(op) / norm),
        float(samples.mean()),
        float(samples.std(ddof=1) / np.sqrt(samples.size)),
        float(np.log2(samples.size) * np.finfo(float).eps * np.mean(np.abs(samples))),
    )


# ---------------------------------------------------------------------------
# CSV snapshots


def _columns(dim):
    axes = ["x", "y"][:dim]
    return ["id"] + axes + ["v" + a for a in axes]


def write_ensemble_csv(ens: MonadEnsemble, path) -> None:
    """Write ``id, x[, y], vx[, vy]`` with round-trip precision."""
    dim = ens.grid.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_columns(dim))
        for i in range(ens.count):
            w.writerow([i] + [repr(float(v)) for v in ens.positions[i]] + [repr(float(v)) for v in ens.velocities[i]])


def read_ensemble_csv(path, grid: Grid, seed: int = 0, n_monads: float = 1.0, norm_target: float = 1.0) -> MonadEnsemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header != _columns(grid.dim):
        raise PreconditionError(f"unexpected ensemble CSV header {header}")
    dim = grid.dim
    return MonadEnsemble(grid, data[:, 1 : 1 + dim], data[:, 1 + dim : 1 + 2 * dim], seed, n_monads, norm_target)


def relaxation_kurtosis(ens: MonadEnsemble) -> np.ndarray:
    """Per-cell kurtosis of the first velocity component (NaN where undefined)."""
    cells = cell_index(ens.positions, ens.grid)
    n = ens.grid.size
    v = ens.velocities[:, 0]
    counts = np.bincount(cells, minlength=n).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.bincount(cells, weights=v, minlength=n) / counts
        d = v - mean[cells]
        m2 = np.bincount(cells, weights=d**2, minlength=n) / counts
        m4 = np.bincount(cells, weights=d**4, minlength=n) / counts
        return m4 / m2**2
