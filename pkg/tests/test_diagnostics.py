import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monadkin.diagnostics import (
    INEQUALITY_TOL,
    KANIADAKIS,
    TAKABAYASHI,
    circulation,
    conserved_quantities,
    curl_2d,
    em_analogy,
    quantum_potential,
    rectangle_loop,
    stress_force,
    stress_tensor,
    trusted_nodes,
    uncertainty_report,
)
from monadkin.errors import PathError, PreconditionError
from monadkin.grid import PhysicalParams, WaveField, hydro_from_fields, hydro_from_psi, make_grid
from monadkin.scenarios import box_mode, gaussian, vortex
from monadkin.schrodinger import EvolutionConfig, Potential, evolve


@pytest.fixture
def fine():
    return make_grid(1, 1024, 16.0)


def _at(grid, x):
    i = int(np.argmin(np.abs(grid.axis(0) - x)))
    assert abs(grid.axis(0)[i] - x) < 1e-12
    return i


def test_quantum_potential_of_unit_gaussian(fine, params):
    h = hydro_from_psi(gaussian(fine, 1.0), params)
    W = quantum_potential(h, params)
    x = fine.axis(0)
    # W = -(1/4)(x^2/2 - 1)
    assert W[_at(fine, 0.0)] == pytest.approx(0.25, abs=1e-9)
    assert W[_at(fine, 2.0)] == pytest.approx(-0.25, abs=1e-9)
    valid = np.abs(x) < 6
    np.testing.assert_allclose(W[valid], -0.25 * (x[valid] ** 2 / 2 - 1), atol=1e-8)


@given(st.floats(0.5, 2.0), st.floats(0.5, 3.0), st.floats(0.5, 2.0))
def test_gaussian_internal_energy_density_is_uniform(sigma, hbar, mass):
    g = make_grid(1, 512, 20.0 * sigma)
    p = PhysicalParams(hbar=hbar, mass=mass)
    h = hydro_from_psi(gaussian(g, sigma), p)
    eps = stress_tensor(h, p).epsilon
    # xi'' = -1 / sigma^2, so eps = hbar^2 / (8 m sigma^2)
    assert not h.flagged.any()
    np.testing.assert_allclose(eps, hbar**2 / (8 * mass * sigma**2), rtol=1e-8)


def test_stress_forms_coincide_in_one_dimension(fine, params):
    h = hydro_from_psi(gaussian(fine, 1.0, k=[0.3]), params)
    sk = stress_tensor(h, params, KANIADAKIS)
    st_ = stress_tensor(h, params, TAKABAYASHI)
    np.testing.assert_allclose(sk.sigma, st_.sigma, atol=1e-10)


def test_stress_forms_differ_in_two_dimensions_but_share_the_force(params):
    g = make_grid(2, 128, 16.0)
    h = hydro_from_psi(gaussian(g, 1.0), params)
    sk = stress_tensor(h, params, KANIADAKIS)
    st_ = stress_tensor(h, params, TAKABAYASHI)
    i, j = int(np.argmin(np.abs(g.axis(0) - 1.0))), int(np.argmin(np.abs(g.axis(1))))
    # Sigma_K,xx = 1/4 everywhere; Sigma_T,xx = -(1/4)(y^2 - 2)
    assert sk.sigma[0, 0][i, j] == pytest.approx(0.25, abs=1e-8)
    assert st_.sigma[0, 0][i, j] == pytest.approx(0.5, abs=1e-8)
    fk = stress_force(sk, h, params)
    ft = stress_force(st_, h, params)
    assert fk.max_mismatch < 1e-4 and ft.max_mismatch < 1e-4
    assert np.max(np.abs(fk.force - ft.force)[:, fk.trusted]) < 1e-4


def test_pressure_is_two_rho_eps_over_dimension(fine, params):
    h = hydro_from_psi(gaussian(fine, 1.0), params)
    s = stress_tensor(h, params)
    np.testing.assert_allclose(s.pressure, 2 * h.rho * s.epsilon)
    with pytest.raises(PreconditionError):
        stress_tensor(h, params, "bohm")


def test_trusted_nodes_grow_around_flags():
    flags = np.zeros(20, bool)
    flags[10] = True
    ok = trusted_nodes(flags, reach=2)
    assert not ok[8:13].any() and ok[:8].all() and ok[13:].all()


def _em(points, params):
    g = make_grid(2, points, 12.0)
    X, Y = g.mesh()
    xi = -(X**2 + Y**2) / 2
    snaps = [(t, hydro_from_fields(g, xi, 0.3 * X + 0.1 * np.sin(Y) * (1 + t), params)) for t in (0.0, 0.01, 0.02)]
    return snaps, em_analogy(snaps, params)


def test_em_analogy_fields(params):
    snaps, em = _em(64, params)
    # a gradient flow has no magnetic part; the Lorentz form holds up to FD4 error
    assert np.max(np.abs(em.B_field)) < 1e-6
    _, fine = _em(128, params)
    assert fine.relative_mismatch < 1e-5
    assert em.relative_mismatch / fine.relative_mismatch > 8.0
    np.testing.assert_allclose(em.A0, 0.5 * np.sum(snaps[1][1].u ** 2, axis=0))
    with pytest.raises(PreconditionError):
        em_analogy(snaps[:1], params)
    with pytest.raises(PreconditionError):
        em_analogy(snaps[::-1], params)


def test_curl_of_rigid_rotation():
    g = make_grid(2, 32, 4.0)
    X, Y = g.mesh()
    np.testing.assert_allclose(curl_2d(np.stack([-Y, X]), g)[4:-4, 4:-4], 2.0, atol=1e-10)


def test_energy_partition_of_coherent_state(params):
    g = make_grid(1, 512, 14.0)
    pot = Potential.harmonic(1.0)
    psi = gaussian(g, np.sqrt(0.5), center=[1.2], k=[0.5])
    e = conserved_quantities(psi, pot, params)
    assert e.H_total == pytest.approx(0.5 * (1 + 1.2**2 + 0.5**2), abs=1e-9)
    assert e.H_internal == pytest.approx(0.25, abs=1e-9)
    assert e.kinetic_classical_part == pytest.approx(0.125, abs=1e-9)
    assert e.P_total[0] == pytest.approx(0.5, abs=1e-12)
    assert e.H_total == pytest.approx(e.H_wavefunction, abs=1e-10)
    assert e.epsilon_moment == pytest.approx(e.internal_w_moment, abs=1e-8)


def test_nodal_kinetic_energy_is_kept_separately(params):
    g = make_grid(2, 64, 12.0)
    psi = vortex(g, 1, 1.5)
    e = conserved_quantities(psi, Potential.free(), params)
    assert e.nodal_part > 0
    assert e.H_total == pytest.approx(e.H_wavefunction, rel=1e-12)


def test_real_gaussian_saturates_every_inequality(params):
    g = make_grid(1, 512, 20.0)
    for k in (0.0, 1.3):
        u = uncertainty_report(gaussian(g, 1.3, k=[k]), params)
        assert u.product == pytest.approx(0.5, abs=1e-9)
        assert u.mean_p == pytest.approx(k, abs=1e-12)
        for s in (u.gradient_bound_slack, u.log_gradient_bound_slack, u.internal_bound_slack, u.product_bound_slack):
            assert abs(s) < 1e-8
        assert u.bounds_pass


def _random_state(grid, amps, phases, centers):
    x = grid.axis(0)
    vals = sum(a * np.exp(-((x - c) ** 2) / 2 + 1j * p * x) for a, p, c in zip(amps, phases, centers))
    return WaveField(grid, vals).normalized()


@given(
    st.lists(st.floats(0.1, 1.0), min_size=3, max_size=3),
    st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3),
    st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3),
)
def test_inequality_chain_and_decomposition_hold_on_random_states(amps, phases, centers):
    g = make_grid(1, 512, 30.0)
    p = PhysicalParams()
    u = uncertainty_report(_random_state(g, amps, phases, centers), p)
    assert u.bounds_pass
    assert u.decomposition_residual < 1e-10
    assert u.product >= 0.5 - INEQUALITY_TOL


def test_box_mode_uncertainty(params):
    g = make_grid(1, 512, 1.0, "box")
    u = uncertainty_report(box_mode(g, 1), params)
    # dx^2 = 1/12 - 1/(2 pi^2), dp = pi for L = 1
    assert u.delta_x == pytest.approx(np.sqrt(1 / 12 - 1 / (2 * np.pi**2)), rel=1e-5)
    assert u.delta_p == pytest.approx(np.pi, rel=1e-5)
    assert u.bounds_pass


@pytest.mark.parametrize("j", [-2, -1, 0, 1, 2, 3])
def test_circulation_counts_the_winding(j, params):
    g = make_grid(2, 64, 12.0)
    psi = vortex(g, j, 1.5)
    loop = rectangle_loop(g, (-3.0, -3.0), (3.0, 3.0))
    c = circulation(psi, loop, params)
    assert c.gamma == pytest.approx(2 * np.pi * j, abs=1e-10)
    assert c.winding == j
    assert circulation(hydro_from_psi(psi, params), loop, params).gamma == pytest.approx(2 * np.pi * j, abs=1e-10)


def test_circulation_is_preserved_by_evolution(params):
    g = make_grid(2, 64, 12.0)
    psi = vortex(g, 1, 1.5)
    loop = rectangle_loop(g, (-3.0, -3.0), (3.0, 3.0))
    for _, s in evolve(psi, Potential.free(), params, EvolutionConfig(1e-3, 0.05, "split_step", 25)):
        assert circulation(s, loop, params).gamma == pytest.approx(2 * np.pi, abs=1e-9)


def test_circulation_rejects_bad_paths(params):
    g = make_grid(2, 64, 12.0)
    psi = vortex(g, 1, 1.5)
    with pytest.raises(PathError):
        circulation(psi, [(1, 1), (1, 2), (2, 2), (2, 1)], params)  # not closed
    with pytest.raises(PathError):
        circulation(psi, [(1, 1), (1, 3), (3, 3), (3, 1), (1, 1)], params)  # skips nodes
    with pytest.raises(PathError):
        circulation(psi, [(32, 32), (33, 32), (33, 33), (32, 33), (32, 32)], params)  # through the core
    with pytest.raises(PathError):
        rectangle_loop(g, (1.0, 1.0), (1.0, 3.0))
