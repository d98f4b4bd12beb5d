"""Built-in initial states and their potentials."""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, PhysicalParams, WaveField
from .schrodinger import Potential

SCENARIOS = ("free_gaussian", "harmonic_ground", "harmonic_coherent", "box_eigenstate", "plane_wave", "vortex_2d")


def gaussian(grid: Grid, sigma: float, center=None, k=None, hbar=1.0) -> WaveField:
    """Normalised Gaussian with position spread ``sigma`` per axis and mean wavenumber ``k``."""
    center = grid.center() if center is None else center
    k = np.zeros(grid.dim) if k is None else np.broadcast_to(np.asarray(k, float), (grid.dim,))
    mesh = grid.mesh()
    arg = np.zeros(grid.shape, dtype=complex)
    for a, x in enumerate(mesh):
        arg += -((x - center[a]) ** 2) / (4.0 * sigma**2) + 1j * k[a] * x
    return WaveField(grid, np.exp(arg)).normalized()


def box_mode(grid: Grid, level: int = 1) -> WaveField:
    vals = np.ones(grid.shape)
    for a, x in enumerate(grid.mesh()):
        lo, _ = grid.bounds(a)
        vals = vals * np.sin(level * np.pi * (x - lo) / grid.length[a])
    return WaveField(grid, vals + 0j).normalized()


def plane_wave(grid: Grid, k: float) -> WaveField:
    if grid.periodic:
        turns = k * grid.length[0] / (2.0 * np.pi)
        if abs(turns - round(turns)) > 1e-9:
            raise ConfigurationError(
                f"plane wave k={k} is not commensurate with periodic length {grid.length[0]} (k L / 2 pi must be an integer)",
                key="params.k",
            )
    x = grid.mesh()[0]
    return WaveField(grid, np.exp(1j * k * x)).normalized()


def vortex(grid: Grid, winding: int, sigma: float) -> WaveField:
    """``(r/sigma)^|j| exp(-r^2 / 2 sigma^2) exp(i j theta)`` about the grid centre."""
    if grid.dim != 2:
        raise ConfigurationError("vortex_2d requires dim = 2", key="grid.dim")
    cx, cy = grid.center()
    X, Y = grid.mesh()
    r = np.hypot(X - cx, Y - cy)
    theta = np.arctan2(Y - cy, X - cx)
    amp = (r / sigma) ** abs(winding) * np.exp(-(r**2) / (2.0 * sigma**2))
    return WaveField(grid, amp * np.exp(1j * winding * theta)).normalized()


def initial_state(name: str, grid: Grid, params: PhysicalParams, opts: dict) -> tuple:
    """``(WaveField, Potential)`` for a named scenario.

    ``opts`` carries ``sigma0``, ``k``, ``x0``, ``j`` and ``level``.
    """
    hbar, m = params.hbar, params.mass
    if name == "free_gaussian":
        return gaussian(grid, opts["sigma0"], k=opts["k"] * np.eye(grid.dim)[0]), Potential.free()
    if name in ("harmonic_ground", "harmonic_coherent"):
        omega = params.omega
        sigma = np.sqrt(hbar / (2.0 * m * omega))
        center = np.array(grid.center(), float)
        if name == "harmonic_coherent":
            center[0] += opts["x0"]
            k = opts["k"] * np.eye(grid.dim)[0]
        else:
            k = None
        return gaussian(grid, sigma, center=center, k=k), Potential.harmonic(omega, grid.center())
    if name == "box_eigenstate":
        return box_mode(grid, opts["level"]), Potential.box()
    if name == "plane_wave":
        return plane_wave(grid, opts["k"]), Potential.free()
    if name == "vortex_2d":
        return vortex(grid, opts["j"], opts["sigma0"]), Potential.free()
    raise ConfigurationError(f"unknown scenario {name!r}", key="scenario")
