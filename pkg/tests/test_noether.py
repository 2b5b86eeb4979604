import math

import numpy as np
import pytest
import sympy as sp
from sympy.calculus.euler import euler_equations

from qforce.errors import ParameterError
from qforce.fields import Grid, PhysicalConstants, ScalarField
from qforce.noether import (
    MAX_ORDER, LagrangianSpec, check_partials, conservation_report, direct_variation, dpi_spin0,
    energy_drift, euler_lagrange_residual, first_order_variation, kg_box_squared, kg_phi_box2_phi,
    kg_phi_box_phi, klein_gordon, noether_current, odd_partials_vanish, stress_tensor_closed_form,
    stress_tensor_spin0, textbook_current, with_total_derivative, _divergence_first, _state_fields,
)
from qforce.rel import kg_superposition

EDGE = 10
INTERIOR = (slice(EDGE, -EDGE),)


def lattice(nt=128, ny=64):
    return Grid.lattice(1.0, nt, 2 * math.pi, ny)


def kg_solution(grid, mass_sq=1.0):
    t, y = grid.mesh()
    w1, w2 = math.sqrt(1 + mass_sq), math.sqrt(4 + mass_sq)
    return ScalarField(grid, np.cos(y - w1 * t) + 0.5 * np.cos(2 * y + w2 * t))


def single_mode(grid, k=1.0, w=math.sqrt(2.0)):
    t, y = grid.mesh()
    return ScalarField(grid, np.cos(k * y - w * t))


def interior_max(values):
    return float(np.max(np.abs(values[INTERIOR])))


# ---------------------------------------------------------------- partials and field equations

@pytest.mark.parametrize("spec", [
    klein_gordon(1.3), kg_phi_box_phi(1.0, 0.2), kg_box_squared(1.0, 0.3), kg_phi_box2_phi(1.0, 0.1),
    with_total_derivative(klein_gordon(1.0), 2, 0.4), with_total_derivative(klein_gordon(1.0), 3, 0.4),
], ids=lambda s: s.name)
def test_analytic_partials_match_finite_differences(spec):
    grid = lattice(32, 32)
    t, y = grid.mesh()
    phi = ScalarField(grid, np.sin(y) * np.exp(-t) + 0.3 * np.cos(2 * y))
    assert check_partials(spec, phi, rng=1) < 1e-7


def test_kernel_lagrangian_partials_match_finite_differences():
    grid = lattice(32, 32)
    state = kg_superposition(grid)
    spec = dpi_spin0(2.0, 1.0, -4.0)
    assert check_partials(spec, _state_fields(state), rng=2) < 1e-7


def test_spec_order_is_bounded():
    with pytest.raises(ParameterError):
        LagrangianSpec("bad", ("phi",), MAX_ORDER + 1, (), lambda j: 0, lambda j: {})
    with pytest.raises(ParameterError):
        with_total_derivative(klein_gordon(), 4, 1.0)


def sympy_el_residual(coeff, mass_sq, c, field_expr, t, y):
    """Euler-Lagrange expression of L = 1/2 (phi_t^2/c^2 - phi_y^2) - m^2 phi^2/2 + a phi box phi."""
    f = sp.Function("f")(t, y)
    box = f.diff(t, 2) / c ** 2 - f.diff(y, 2)
    lag = sp.Rational(1, 2) * (f.diff(t) ** 2 / c ** 2 - f.diff(y) ** 2) - mass_sq * f ** 2 / 2 + coeff * f * box
    (eq,) = euler_equations(lag, f, (t, y))
    return sp.lambdify((t, y), eq.lhs.subs(f, field_expr).doit(), "numpy")


def test_euler_lagrange_matches_symbolic_oracle_off_shell():
    c, coeff, mass_sq = 0.7, 0.3, 1.4
    grid = lattice()
    t, y = grid.mesh()
    ts, ys = sp.symbols("t y")
    expr = sp.cos(ys) * sp.cos(sp.Rational(7, 10) * ts) + sp.Rational(3, 10) * sp.sin(2 * ys) * ts
    oracle = sympy_el_residual(coeff, mass_sq, c, expr, ts, ys)(t, y)
    phi = ScalarField(grid, np.cos(y) * np.cos(0.7 * t) + 0.3 * np.sin(2 * y) * t)
    res = euler_lagrange_residual(kg_phi_box_phi(mass_sq, coeff), phi, c=c)["phi"].values
    assert interior_max(res - oracle) < 1e-8
    assert interior_max(oracle) > 0.1


@pytest.mark.parametrize("spec", [
    klein_gordon(1.0),
    kg_phi_box_phi(1.0 - 2 * 0.2, 0.2),
    kg_box_squared(1.0 + 2 * 0.3, 0.3),
    kg_phi_box2_phi(1.0 + 2 * 0.1, 0.1),
], ids=lambda s: s.name)
def test_single_mode_is_on_shell(spec):
    # cos(y - sqrt(2) t) has box phi = -phi; each mass is tuned so the mode solves the field equation
    res = euler_lagrange_residual(spec, single_mode(lattice()))["phi"].values
    assert interior_max(res) < 1e-6


# ---------------------------------------------------------------- currents

@pytest.mark.parametrize("xi", [(1.0, 0.0), (0.0, 1.0), (0.3, -0.8)])
def test_first_order_current_is_the_textbook_current(xi):
    spec = klein_gordon(1.0)
    phi = kg_solution(lattice())
    cur = noether_current(spec, phi, xi)
    assert np.max(np.abs(cur.J - textbook_current(spec, phi, xi))) < 1e-12


def test_textbook_current_needs_first_order_spec():
    with pytest.raises(ParameterError):
        textbook_current(kg_phi_box_phi(1.0, 0.1), kg_solution(lattice()), (1.0, 0.0))


def test_klein_gordon_current_is_conserved():
    phi = kg_solution(lattice())
    for xi in ((1.0, 0.0), (0.0, 1.0)):
        assert interior_max(noether_current(klein_gordon(1.0), phi, xi).divergence) < 1e-6


@pytest.mark.parametrize("order", [2, 3])
def test_total_derivative_terms_keep_current_conserved(order):
    phi = kg_solution(lattice())
    spec = with_total_derivative(klein_gordon(1.0), order, 0.4)
    for xi in ((1.0, 0.0), (0.0, 1.0)):
        assert interior_max(noether_current(spec, phi, xi).divergence) < 1e-6


@pytest.mark.parametrize("spec", [
    kg_phi_box_phi(1.0 - 2 * 0.2, 0.2),
    kg_box_squared(1.0 + 2 * 0.3, 0.3),
    kg_phi_box2_phi(1.0 + 2 * 0.1, 0.1),
], ids=lambda s: s.name)
def test_higher_order_currents_are_conserved_on_shell(spec):
    phi = single_mode(lattice())
    for xi in ((1.0, 0.0), (0.0, 1.0)):
        assert interior_max(noether_current(spec, phi, xi).divergence) < 1e-6


def test_third_order_block_needs_alternating_signs():
    phi = kg_solution(lattice())
    spec = with_total_derivative(klein_gordon(1.0), 3, 0.4)

    def non_alternating(k, j):
        return (1, 1, -1)[j] if k == 3 else (-1) ** j

    good = noether_current(spec, phi, (1.0, 0.0))
    bad = noether_current(spec, phi, (1.0, 0.0), _signs=non_alternating)
    assert interior_max(good.divergence) < 1e-6
    assert interior_max(bad.divergence) > 1.0


def test_xi_accepts_full_four_vectors():
    phi = kg_solution(lattice())
    a = noether_current(klein_gordon(1.0), phi, (1.0, 0.0, 0.5, 0.0))
    b = noether_current(klein_gordon(1.0), phi, (1.0, 0.5))
    assert np.array_equal(a.J, b.J)
    with pytest.raises(ParameterError):
        noether_current(klein_gordon(1.0), phi, (1.0, 0.0, 0.0))


def test_missing_fields_are_reported():
    grid = lattice(16, 16)
    with pytest.raises(ParameterError):
        noether_current(dpi_spin0(1.0, 1.0, -4.0), {"S": ScalarField(grid, np.zeros(grid.shape))}, (1.0, 0.0))


def test_conservation_report_fields():
    cur = noether_current(klein_gordon(1.0), kg_solution(lattice()), (1.0, 0.0))
    rep = conservation_report(cur, "translation", drift=0.0)
    assert rep["generator"] == "translation"
    assert rep["xi"] == [1.0, 0.0]
    assert rep["truncation_order"] == 1
    assert rep["max_div_J"] == cur.max_divergence()


# ---------------------------------------------------------------- transformation rules

@pytest.mark.parametrize("order", [1, 2])
def test_linearised_variation_error_is_second_order(order):
    grid = lattice(64, 64)
    t, y = grid.mesh()
    phi = np.sin(y) * np.exp(0.5 * t)
    base_xi = np.stack([0.3 * np.cos(y) * t, 0.2 * np.sin(2 * y)])
    base_delta = np.cos(y) * t
    errors = []
    for s in (0.02, 0.01):
        exact = direct_variation(phi, grid, s * base_xi, s * base_delta, order)
        linear = first_order_variation(phi, grid, s * base_xi, s * base_delta, order)
        errors.append(float(np.max(np.abs((exact - linear)[(slice(None),) * order + INTERIOR]))))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)


def test_variation_order_is_checked():
    grid = lattice(16, 16)
    zero = np.zeros(grid.shape)
    with pytest.raises(ParameterError):
        direct_variation(zero, grid, np.zeros((2,) + grid.shape), zero, 3)
    with pytest.raises(ParameterError):
        first_order_variation(zero, grid, np.zeros((2,) + grid.shape), zero, 3)


# ---------------------------------------------------------------- spin-0 stress tensor

@pytest.fixture(scope="module")
def spin0_state():
    beta, kappa = 1.0, 1.0
    grid = lattice()
    local = kg_superposition(grid, PhysicalConstants(m=kappa))
    dpi = PhysicalConstants(m=math.sqrt(kappa ** 2 + 4 * beta ** 2))
    return kg_superposition(grid, dpi, kappa=kappa, mass_sq=local.mass_sq), beta, -4 * beta ** 2


def test_stress_tensor_matches_closed_form_and_is_symmetric(spin0_state):
    state, beta, om = spin0_state
    T = stress_tensor_spin0(state, beta, om)
    assert T.shape == (2, 2) + state.grid.shape
    assert np.max(np.abs(T - stress_tensor_closed_form(state, beta, om))) < 1e-10
    assert np.max(np.abs(T[0, 1] - T[1, 0])) < 1e-8


def test_stress_tensor_is_conserved(spin0_state):
    state, beta, om = spin0_state
    T = stress_tensor_spin0(state, beta, om)
    for n in range(2):
        assert interior_max(_divergence_first(T[:, n], state.grid, 1.0, 6)) < 1e-6
    assert energy_drift(T, state.grid) < 1e-6


def test_kernel_state_is_on_shell(spin0_state):
    state, beta, om = spin0_state
    spec = dpi_spin0(state.constants.m, beta, om, state.constants)
    res = euler_lagrange_residual(spec, _state_fields(state))
    for name in ("S", "Lambda", "rho", "M"):
        assert interior_max(res[name].values) < 1e-6, name


def test_odd_lambda_partials_vanish(spin0_state):
    state, beta, om = spin0_state
    spec = dpi_spin0(state.constants.m, beta, om)
    assert odd_partials_vanish(spec, _state_fields(state))
    assert not odd_partials_vanish(with_total_derivative(klein_gordon(), 2, 1.0),
                                   kg_solution(lattice()), field_name="phi")
