import numpy as np
import pytest

from monadkin.errors import BlowUpError, PreconditionError, SolverDegeneracyError
from monadkin.grid import (
    PhysicalParams,
    WaveField,
    hydro_from_fields,
    hydro_from_omega,
    hydro_from_psi,
    make_grid,
    omega_from_hydro,
)
from monadkin.madelung import (
    MadelungState,
    PairIntegrator,
    evolve_madelung,
    evolve_omega,
    madelung_rhs,
    stability_limit,
    step_rk4,
)
from monadkin.scenarios import gaussian
from monadkin.schrodinger import EvolutionConfig, Potential, evolve


def test_free_gaussian_matches_closed_form(params):
    g = make_grid(1, 512, 20.0)
    h0 = hydro_from_psi(gaussian(g, 1.0, k=[0.4]), params)
    t = 0.5
    states = evolve_madelung(MadelungState(h0), Potential.free(), params, 1e-4, 5000, 5000)
    sigma_t = np.sqrt(1.0 + (t / 2.0) ** 2)
    x = g.axis(0)
    exact = np.exp(-((x - 0.4 * t) ** 2) / (2 * sigma_t**2)) / np.sqrt(2 * np.pi * sigma_t**2)
    assert states[-1].time == pytest.approx(t)
    np.testing.assert_allclose(states[-1].hydro.rho, exact, atol=1e-10)


def test_rhs_of_free_gaussian_is_analytic(params):
    # xi = -x^2/2 + c, S = 0: d xi/dt = 0 at t=0 and dS/dt = hbar^2/(4m) xi'' + hbar^2/(8m) xi'^2
    g = make_grid(1, 128, 20.0)
    x = g.axis(0)
    h = hydro_from_fields(g, -(x**2) / 2, np.zeros_like(x), params)
    dxi, dS = madelung_rhs(MadelungState(h), Potential.free(), params)
    np.testing.assert_allclose(dxi, 0.0, atol=1e-10)
    np.testing.assert_allclose(dS, -0.25 + x**2 / 8, atol=1e-9)


def test_sech_state_converges_at_fourth_order(params):
    """Simultaneous dx, dt refinement against the split-step reference.

    The Gaussian is reproduced to round-off (its log fields are quadratics),
    so a sech profile is used to expose the discretisation order.
    """
    t_end = 0.5
    errs = []
    for n in (128, 256, 512):
        g = make_grid(1, n, 40.0)
        x = g.axis(0)
        psi = WaveField(g, 1.0 / np.cosh(x) * np.exp(0.3j * x)).normalized()
        dt = stability_limit(g, params)
        steps = int(np.ceil(t_end / dt))
        dt = t_end / steps
        ref = evolve(psi, Potential.free(), params, EvolutionConfig(dt, t_end, "split_step", steps))[-1][1]
        out = evolve_madelung(MadelungState(hydro_from_psi(psi, params)), Potential.free(), params, dt, steps, steps)[-1]
        errs.append(np.sqrt(np.sum((out.hydro.rho - ref.density) ** 2) * g.spacing[0]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() > 3.5, (errs, orders)


def test_omega_and_pair_integrators_agree(params):
    g = make_grid(1, 256, 14.0)
    pot = Potential.harmonic(1.0)
    h0 = hydro_from_psi(gaussian(g, np.sqrt(0.5), center=[1.0], k=[0.5]), params)
    n, dt = 500, 2e-4
    pair = evolve_madelung(MadelungState(h0), pot, params, dt, n, n)[-1].hydro
    om = hydro_from_omega(evolve_omega(omega_from_hydro(h0, params), pot, params, dt, n, n)[-1][1], params)
    np.testing.assert_allclose(om.rho, pair.rho, atol=1e-11)


@pytest.mark.parametrize("n_monads", [1.0, 10.0, 1000.0])
def test_omega_run_is_independent_of_monad_count(n_monads):
    g = make_grid(1, 256, 14.0)
    base = PhysicalParams()
    p = PhysicalParams(n_monads=n_monads)
    h0 = hydro_from_psi(gaussian(g, 1.0, k=[0.5]), base)
    ref = hydro_from_omega(evolve_omega(omega_from_hydro(h0, base), Potential.harmonic(1.0), base, 2e-4, 200, 200)[-1][1], base)
    out = hydro_from_omega(evolve_omega(omega_from_hydro(h0, p), Potential.harmonic(1.0), p, 2e-4, 200, 200)[-1][1], p)
    np.testing.assert_allclose(out.rho, ref.rho, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(out.S, ref.S, atol=1e-11)


def test_norm_is_held_by_renormalisation(params):
    g = make_grid(1, 256, 20.0)
    h0 = hydro_from_psi(gaussian(g, 1.0, k=[1.0]), params)
    st = step_rk4(MadelungState(h0), Potential.free(), params, 1e-4)
    assert np.sum(st.hydro.rho) * g.spacing[0] == pytest.approx(1.0, abs=1e-14)
    assert abs(st.renorm_correction) < 1e-10


def test_time_step_above_stability_limit_is_rejected(params):
    g = make_grid(1, 256, 20.0)
    h0 = hydro_from_psi(gaussian(g, 1.0), params)
    dt = 1.01 * stability_limit(g, params)
    with pytest.raises(PreconditionError):
        step_rk4(MadelungState(h0), Potential.free(), params, dt)


def test_too_many_floor_nodes_is_degenerate(params):
    g = make_grid(1, 256, 200.0)
    h0 = hydro_from_psi(gaussian(g, 1.0), params)
    assert h0.flagged_fraction > 0.05
    with pytest.raises(SolverDegeneracyError):
        step_rk4(MadelungState(h0), Potential.free(), params, 1e-4)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_fields_raise_blow_up_with_node(params):
    g = make_grid(1, 64, 10.0)
    integ = PairIntegrator(g, Potential.free(), params, 1e-4)
    xi = np.zeros(64)
    xi[17] = 1e200
    with pytest.raises(BlowUpError) as err:
        integ.step(xi, np.zeros(64), step_index=3)
    assert err.value.step == 3 and err.value.node is not None
