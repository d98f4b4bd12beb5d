import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monadkin.errors import ConfigurationError
from monadkin.grid import (
    RHO_FLOOR,
    PhysicalParams,
    WaveField,
    check_normalization,
    fd4_derivative,
    fill_flagged,
    hydro_from_fields,
    hydro_from_omega,
    hydro_from_psi,
    integrate,
    make_grid,
    omega_from_hydro,
    plaquette_windings,
    psi_from_hydro,
    spectral_derivative,
)


def test_periodic_axis_is_centred_and_excludes_endpoint():
    g = make_grid(1, 8, 4.0)
    np.testing.assert_allclose(g.axis(0), np.arange(-2.0, 2.0, 0.5))
    assert g.spacing == (0.5,)
    assert g.center() == (0.0,)


def test_box_axis_is_cell_centred():
    g = make_grid(1, 10, 1.0, "box")
    np.testing.assert_allclose(g.axis(0), (np.arange(10) + 0.5) / 10)


@pytest.mark.parametrize(
    "kwargs, key",
    [
        (dict(dim=3, points_per_axis=16, length_per_axis=1.0), "dim"),
        (dict(dim=1, points_per_axis=4, length_per_axis=1.0), "points"),
        (dict(dim=1, points_per_axis=16, length_per_axis=-1.0), "length"),
        (dict(dim=1, points_per_axis=16, length_per_axis=1.0, boundary="torus"), "boundary"),
    ],
)
def test_bad_grids_name_the_key(kwargs, key):
    with pytest.raises(ConfigurationError) as err:
        make_grid(**kwargs)
    assert err.value.key == key


def test_params_per_monad_constants():
    p = PhysicalParams(hbar=2.0, mass=3.0, n_monads=10.0)
    assert p.eta == pytest.approx(0.2)
    assert p.mu == pytest.approx(0.3)
    with pytest.raises(ConfigurationError):
        PhysicalParams(n_monads=0.5)


@given(st.integers(1, 6))
def test_spectral_derivative_of_fourier_mode(k):
    g = make_grid(1, 64, 2 * np.pi)
    x = g.axis(0)
    np.testing.assert_allclose(spectral_derivative(np.sin(k * x), g, 0, 1), k * np.cos(k * x), atol=1e-11)
    np.testing.assert_allclose(spectral_derivative(np.sin(k * x), g, 0, 2), -k * k * np.sin(k * x), atol=1e-10)


@pytest.mark.parametrize("order", [1, 2])
def test_fd4_converges_at_fourth_order_including_closures(order):
    errs = []
    for n in (64, 128, 256):
        x = np.linspace(0.0, 1.0, n)
        h = x[1] - x[0]
        f = np.exp(np.sin(3 * x))
        exact = 3 * np.cos(3 * x) * f if order == 1 else (9 * np.cos(3 * x) ** 2 - 9 * np.sin(3 * x)) * f
        errs.append(np.max(np.abs(fd4_derivative(f, h, 0, order) - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    # the second-derivative closure is 4th order in the interior, 3rd at the wall rows
    assert orders.min() > (3.8 if order == 1 else 2.8)


def test_fd4_is_exact_on_quartics():
    x = np.linspace(-1, 1, 41)
    f = x**4 - 2 * x**3 + x
    np.testing.assert_allclose(fd4_derivative(f, x[1] - x[0], 0, 1), 4 * x**3 - 6 * x**2 + 1, atol=1e-9)


def test_wrapped_differences_differentiate_a_multivalued_phase():
    g = make_grid(1, 128, 2 * np.pi)
    x = g.axis(0)
    raw = np.angle(np.exp(3j * x))
    np.testing.assert_allclose(fd4_derivative(raw, g.spacing[0], 0, 1, 2 * np.pi), 3.0, atol=1e-10)


@given(
    st.floats(0.6, 2.0),
    st.floats(-2.0, 2.0),
    st.floats(-2.0, 2.0),
    st.floats(1.0, 1000.0),
)
def test_representation_round_trips(sigma, x0, k, n):
    g = make_grid(1, 256, 20.0)
    p = PhysicalParams(n_monads=n)
    x = g.axis(0)
    psi = WaveField(g, np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * k * x)).normalized()
    h = hydro_from_psi(psi, p)
    back = psi_from_hydro(h, p)
    np.testing.assert_allclose(back.values, psi.values, atol=1e-12)
    h2 = hydro_from_omega(omega_from_hydro(h, p), p)
    # below the density floor xi is extrapolated, so compare the valid nodes
    valid = ~h.flagged
    np.testing.assert_allclose(h2.rho[valid], h.rho[valid], rtol=1e-12)
    np.testing.assert_allclose(h2.S[valid], h.S[valid], atol=1e-10)


def test_normalization_and_integrate(line):
    x = line.axis(0)
    psi = WaveField(line, np.exp(-(x**2) / 4)).normalized(3.0)
    assert check_normalization(psi) == pytest.approx(3.0, rel=1e-14)
    assert integrate(np.ones(line.shape), line) == pytest.approx(20.0)


def test_hydro_velocity_of_boosted_gaussian(line, params):
    x = line.axis(0)
    psi = WaveField(line, np.exp(-(x**2) / 4 + 0.7j * x)).normalized()
    h = hydro_from_psi(psi, params)
    valid = h.rho > 1e-12
    np.testing.assert_allclose(h.u[0][valid], 0.7, atol=1e-9)


def test_zero_density_nodes_are_flagged_and_filled(params):
    g = make_grid(1, 64, 1.0, "box")
    vals = np.sin(np.pi * g.axis(0)) + 0j
    vals[10] = 0.0
    h = hydro_from_psi(WaveField(g, vals), params)
    assert h.flagged[10] and h.flagged.sum() == 1
    assert np.isfinite(h.xi).all() and np.isfinite(h.S).all()
    assert h.rho[10] <= RHO_FLOOR


def test_fill_flagged_interpolates_lines():
    vals = np.arange(10.0)
    flagged = np.zeros(10, bool)
    flagged[[0, 4, 9]] = True
    np.testing.assert_allclose(fill_flagged(vals * 0 + np.where(flagged, 99, vals), flagged), vals)


@given(st.integers(-3, 3))
def test_plaquette_windings_locate_a_vortex(j):
    g = make_grid(2, 32, 8.0)
    X, Y = g.mesh()
    phase = j * np.arctan2(Y + 0.1, X + 0.1)
    w = plaquette_windings(phase)
    # net winding is exact; a multiply wound core may split over neighbouring plaquettes
    assert w.sum() == j
    if abs(j) <= 1:
        assert np.count_nonzero(w) == abs(j)


def test_hydro_from_fields_marks_wrapped_action(params):
    g = make_grid(2, 32, 8.0)
    X, Y = g.mesh()
    S = np.arctan2(Y + 0.1, X + 0.1)
    h = hydro_from_fields(g, -(X**2 + Y**2), S, params)
    assert h.s_wrapped and h.windings.sum() == 1


def test_fields_are_read_only(line, params):
    psi = WaveField(line, np.ones(line.shape))
    with pytest.raises(ValueError):
        psi.values[0] = 2.0
