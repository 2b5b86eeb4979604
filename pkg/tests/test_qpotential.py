import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from qforce.errors import DegenerateInputError, GridMismatchError, ParameterError
from qforce.fields import Grid, PhysicalConstants, Role, ScalarField, Species
from qforce.qpotential import (
    two_constant_coefficients, force_field, gaussian_convolve, gaussian_moment, kernel_compare,
    kernel_params, kernel_q_convolution, kernel_q_series, local_q, matched_kernel, mollify,
    q_from_amplitude, rel_mass_sq_kernel, rel_mass_sq_local, steady_q_general, variation_scale,
)


def gaussian_density(grid, length):
    return ScalarField(grid, np.exp(-(grid.coords() / length) ** 2), Role.DENSITY)


# ---------------------------------------------------------------- local forms

def test_local_q_of_gaussian_matches_closed_form():
    grid = Grid.line(40.0, 512)
    x = grid.coords()
    q = local_q(gaussian_density(grid, 2.0))
    # sqrt(rho) = exp(-x^2/8): lap/f = x^2/16 - 1/4
    exact = -0.5 * (x ** 2 / 16 - 0.25)
    m = q.mask & (np.abs(x) < 6)
    assert np.max(np.abs(q.values - exact)[m]) < 1e-9


@given(st.floats(0.7, 3.0), st.floats(-2.0, 2.0), st.floats(0.1, 1.0))
def test_two_constant_form_equals_local_form(width, shift, weight):
    # the box must hold the widest component (length 2 * width) with negligible wrap-around
    grid = Grid.line(120.0, 2048)
    x = grid.coords()
    rho = ScalarField(grid, np.exp(-(x / width) ** 2) + weight * np.exp(-((x - shift) / (2 * width)) ** 2),
                      Role.DENSITY)
    q, a = two_constant_coefficients()
    local = local_q(rho)
    general = steady_q_general(rho, q, a)
    sel = rho.values > 1e-4 * rho.values.max()
    assert np.max(np.abs(local.values - general.values)[sel]) < 1e-6


def test_q_from_amplitude_handles_nodes_and_sign():
    grid = Grid.line(24.0, 512)
    x = grid.coords()
    amp = ScalarField(grid, x * np.exp(-0.5 * x ** 2), Role.AUXILIARY)
    q = q_from_amplitude(amp)
    # -1/2 (x^2 - 3) for the first excited oscillator state
    exact = -0.5 * (x ** 2 - 3)
    sel = q.mask & (np.abs(x) < 4)
    assert np.max(np.abs(q.values - exact)[sel]) < 1e-9
    flipped = q_from_amplitude(ScalarField(grid, -amp.values, Role.AUXILIARY))
    assert np.array_equal(flipped.values, q.values)
    with pytest.raises(DegenerateInputError):
        q_from_amplitude(ScalarField(grid, np.zeros(512)))


def test_force_field_flips_with_species():
    grid = Grid.line(2 * math.pi, 64)
    pot = ScalarField(grid, np.sin(grid.coords()))
    fp = force_field(pot, Species.PARTICLE).values
    fa = force_field(pot, Species.ANTIPARTICLE).values
    assert np.allclose(fp, -np.cos(grid.coords()), atol=1e-12)
    assert np.array_equal(fa, -fp)


def test_steady_form_rejects_lattice():
    grid = Grid.lattice(1.0, 16, 1.0, 16)
    with pytest.raises(GridMismatchError):
        steady_q_general(ScalarField(grid, np.ones((16, 16)), Role.DENSITY), -0.25, -0.5)


# ---------------------------------------------------------------- kernel constants

def _beta_sq_mp(alpha_s, alpha_l):
    mpmath.mp.dps = 50
    s, l = mpmath.mpf(alpha_s), mpmath.mpf(alpha_l)
    return (1 - mpmath.sqrt(1 - 4 * s ** 2 / l ** 2)) / (2 * s ** 2)


@pytest.mark.parametrize("alpha_s, alpha_l", [(0.5, 1.0), (0.3, 2.0), (1.0, 1e4), (1e-3, 1e5)])
def test_kernel_beta_matches_high_precision(alpha_s, alpha_l):
    spec = kernel_params(-1.0, alpha_s, alpha_l)
    assert spec.beta_sq == pytest.approx(float(_beta_sq_mp(alpha_s, alpha_l)), rel=1e-13)


def test_kernel_constants_closed_forms():
    spec = kernel_params(-2.0, 0.5, 1.0)
    # disc = 0 when alpha_l = 2 alpha_s
    assert spec.beta_sq == pytest.approx(2.0)
    assert spec.Omega0 == pytest.approx(-2.0 * 2.0 ** -0.75)
    assert spec.species is Species.PARTICLE
    assert kernel_params(2.0, 0.5, 1.0).species is Species.ANTIPARTICLE
    with pytest.raises(ParameterError):
        kernel_params(-1.0, 1.0, 1.5)
    with pytest.raises(ParameterError):
        kernel_params(0.0, 0.5, 1.0)


@pytest.mark.parametrize("dimension", [1, 3])
def test_matched_kernel_reproduces_local_coefficient(dimension):
    k = PhysicalConstants(hbar=1.3, m=0.7)
    for species in Species:
        spec = matched_kernel(2.5, dimension, k, species)
        coeff = spec.Omega0 * spec.norm_integral(dimension) / (4 * spec.beta_sq)
        assert coeff == pytest.approx(-species.sign * k.hbar ** 2 / (2 * k.m), rel=1e-12)
        assert spec.beta == pytest.approx(2.5)


# ---------------------------------------------------------------- moments

@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_moments_match_quadrature_1d(beta):
    for n in range(0, 7):
        exact, _ = integrate.quad(lambda x: x ** n * math.exp(-beta ** 2 * x ** 2), -np.inf, np.inf,
                                  epsabs=1e-14, epsrel=1e-12)
        value = float(gaussian_moment(n, beta, 1).value[(0,) * n])
        if n % 2:
            assert abs(value) < 1e-12
        else:
            assert value == pytest.approx(exact, rel=1e-8)


def test_moments_match_quadrature_2d_tensor():
    beta = 1.3
    res = gaussian_moment(2, beta, 2).value
    for i in range(2):
        for j in range(2):
            num, _ = integrate.dblquad(
                lambda y, x: (x, y)[i] * (x, y)[j] * math.exp(-beta ** 2 * (x * x + y * y)),
                -10, 10, -10, 10, epsabs=1e-13)
            assert res[i, j] == pytest.approx(num, abs=1e-8)
    assert gaussian_moment(0, beta, 3).value == pytest.approx((math.pi / beta ** 2) ** 1.5)


def test_fourth_moment_pairings_and_lorentzian_structure():
    beta = 0.8
    j4 = gaussian_moment(4, beta, 3)
    f = (1 / (2 * beta ** 2)) ** 2
    assert j4.scale[0, 0, 0, 0] == pytest.approx(3 * f)
    assert j4.scale[0, 0, 1, 1] == pytest.approx(f)
    assert j4.scale[0, 1, 0, 1] == pytest.approx(f)
    lor = gaussian_moment(2, beta, 4)
    assert lor.base_integral is None and lor.value is None
    assert np.allclose(lor.scale, -np.diag([1, -1, -1, -1]) / (2 * beta ** 2))
    assert np.all(gaussian_moment(3, beta, 4).scale == 0)
    with pytest.raises(ParameterError):
        gaussian_moment(7, beta)
    with pytest.raises(ParameterError):
        gaussian_moment(2, beta, 4, "euclidean")


# ---------------------------------------------------------------- convolution

@pytest.mark.parametrize("method", ["direct", "spectral"])
@pytest.mark.parametrize("boundary", ["periodic", "dirichlet"])
def test_convolution_matches_gaussian_oracle(method, boundary):
    grid = Grid.line(60.0, 1024, boundary)
    x = grid.coords()
    a, beta = 0.2, 1.5
    out = gaussian_convolve(np.exp(-a * x ** 2), grid, beta, method)
    exact = math.sqrt(math.pi / (beta ** 2 + a)) * np.exp(-beta ** 2 * a * x ** 2 / (beta ** 2 + a))
    assert np.max(np.abs(out - exact)) < 1e-12


@pytest.mark.parametrize("method", ["direct", "spectral"])
def test_radial_convolution_matches_3d_oracle(method):
    grid = Grid.radial(20.0, 1024)
    r = grid.coords()
    a, beta = 0.3, 1.2
    out = gaussian_convolve(np.exp(-a * r ** 2), grid, beta, method)
    exact = (math.pi / (beta ** 2 + a)) ** 1.5 * np.exp(-beta ** 2 * a * r ** 2 / (beta ** 2 + a))
    assert np.max(np.abs(out - exact)) < 1e-10


@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4), st.floats(0.5, 3.0))
def test_direct_and_spectral_paths_agree(coeffs, beta):
    grid = Grid.line(40.0, 256, "dirichlet")
    x = grid.coords()
    f = sum(c * np.exp(-((x - 3 * i) / 2.0) ** 2) for i, c in enumerate(coeffs))
    d = gaussian_convolve(f, grid, beta, "direct")
    s = gaussian_convolve(f, grid, beta, "spectral")
    assert np.max(np.abs(d - s)) <= 1e-12 * max(1.0, np.max(np.abs(d)))


def test_kernel_potential_of_gaussian_matches_oracle():
    grid = Grid.line(200.0, 4096, "dirichlet")
    length = 10.0
    spec = matched_kernel(1.0)
    diag = {}
    q = kernel_q_convolution(gaussian_density(grid, length), spec, diagnostics=diag)
    a = 1 / (2 * length ** 2)
    x = grid.coords()
    exact = spec.Omega0 * math.sqrt(math.pi / (1 + a)) * np.exp(a * a * x ** 2 / (1 + a))
    sel = q.mask & (np.abs(x) < 40)
    assert np.max(np.abs(q.values - exact)[sel] / np.abs(exact[sel])) < 1e-10
    assert diag["beta_scale"] == pytest.approx(10.0, rel=1e-6)
    assert diag["smoothed"] is False


def test_series_converges_monotonically_to_kernel():
    grid = Grid.line(200.0, 4096, "dirichlet")
    result = kernel_compare(gaussian_density(grid, 10.0), matched_kernel(1.0))
    dev = result["series_deviation"]
    assert dev[1] < 1e-2
    assert result["monotone"]
    assert result["path_deviation"] < 1e-10


def test_order_one_series_is_local_potential_plus_constant():
    grid = Grid.line(200.0, 4096, "dirichlet")
    rho = gaussian_density(grid, 10.0)
    spec = matched_kernel(1.0)
    series = kernel_q_series(rho, spec, 1)
    local = local_q(rho)
    const = spec.Omega0 * spec.norm_integral(1)
    sel = local.mask & (np.abs(grid.coords()) < 50)
    assert np.max(np.abs(series.values - const - local.values)[sel]) < 1e-8


def test_mollify_and_variation_scale():
    grid = Grid.line(100.0, 2048)
    rho = gaussian_density(grid, 4.0)
    assert variation_scale(rho) == pytest.approx(4.0, rel=1e-8)
    smooth = mollify(rho, 1.0)
    # exp(-x^2/L^2) convolved with a unit-variance normal widens L^2 -> L^2 + 2
    assert variation_scale(smooth) == pytest.approx(math.sqrt(18.0), rel=1e-6)
    diag = {}
    kernel_q_convolution(rho, matched_kernel(1.0), enforce_smoothing=True, diagnostics=diag)
    assert diag["smoothed"] is True


# ---------------------------------------------------------------- relativistic mass

@given(st.integers(0, 2 ** 31 - 1))
def test_kernel_mass_never_negative_for_attractive_kernel(seed):
    rng = np.random.default_rng(seed)
    grid = Grid.line(40.0, 256, "dirichlet")
    x = grid.coords()
    rho = sum(w * np.exp(-((x - c) / s) ** 2)
              for w, c, s in zip(rng.uniform(0.1, 1, 3), rng.uniform(-8, 8, 3), rng.uniform(0.5, 3, 3)))
    spec = matched_kernel(rng.uniform(0.5, 3.0))
    assert spec.Omega0 < 0
    m2 = rel_mass_sq_kernel(ScalarField(grid, rho, Role.DENSITY), spec, order=None)
    assert m2.values.min() >= -1e-10


def test_local_mass_function_of_plane_wave_superposition():
    grid = Grid.lattice(1.0, 64, 2 * math.pi, 32)
    t, y = grid.mesh()
    amp = 1.0 + 0.2 * np.cos(y - 2 * t)
    m2 = rel_mass_sq_local(ScalarField(grid, amp, Role.AUXILIARY))
    box = 0.2 * (-4 + 1) * np.cos(y - 2 * t)
    assert np.max(np.abs(m2.values - (1 + box / amp))[6:-6]) < 1e-5
