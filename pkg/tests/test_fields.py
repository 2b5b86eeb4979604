import json
import math

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from qforce.errors import GridMismatchError, NumericError, ParameterError
from qforce.fieldio import atomic_write_text, load_field, save_field, sha256_file, write_rows
from qforce.fields import (
    Boundary, Dimension, Grid, PhysicalConstants, Role, ScalarField, Species, check_finite,
    derivative, diff_array, fd_weights, integrate, laplacian, laplacian_array, max_workers,
    quadrature_weights,
)


def test_grid_constructors_and_metadata_roundtrip():
    for grid in (Grid.line(10.0, 64), Grid.radial(5.0, 32), Grid.lattice(1.0, 16, 2.0, 32)):
        assert Grid.from_metadata(json.loads(json.dumps(grid.metadata()))) == grid
    lat = Grid.lattice(1.0, 16, 2.0, 32)
    assert lat.shape == (16, 32)
    assert lat.axis_names == ("t", "y")
    assert lat.boundary == (Boundary.DIRICHLET, Boundary.PERIODIC)


@pytest.mark.parametrize("kwargs", [dict(extent=-1.0, points=32), dict(extent=1.0, points=4),
                                    dict(extent=float("inf"), points=32)])
def test_grid_rejects_bad_parameters(kwargs):
    with pytest.raises(ParameterError):
        Grid.line(**kwargs)


def test_grid_coordinates_periodic_and_cell_centred():
    g = Grid.line(4.0, 8)
    assert np.allclose(g.coords(), np.arange(-4, 4) * 0.5)
    r = Grid.radial(1.0, 8).coords()
    assert np.allclose(r, (np.arange(8) + 0.5) / 8)


def test_scalar_field_validation():
    g = Grid.line(1.0, 16)
    with pytest.raises(GridMismatchError):
        ScalarField(g, np.zeros(8))
    with pytest.raises(ParameterError):
        ScalarField(g, -np.ones(16), Role.DENSITY)
    with pytest.raises(ParameterError):
        ScalarField(g, np.ones(16), parity=2)
    f = ScalarField(g, np.ones(16))
    with pytest.raises(ValueError):
        f.values[0] = 3.0


def test_species_sign():
    assert Species.PARTICLE.sign == 1
    assert Species.ANTIPARTICLE.sign == -1
    assert Species.PARTICLE.flipped() is Species.ANTIPARTICLE


def test_constants_must_be_positive():
    with pytest.raises(ParameterError):
        PhysicalConstants(hbar=0.0)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_fd_weights_match_sympy(order):
    offsets = tuple(range(-3, 4))
    expected = sympy.finite_diff_weights(order, list(offsets), 0)[order][-1]
    assert np.allclose(fd_weights(offsets, order), [float(v) for v in expected], atol=1e-12)


def test_spectral_derivative_exact_for_band_limited():
    g = Grid.line(2 * math.pi, 64)
    x = g.coords()
    f = np.sin(3 * x) + 0.5 * np.cos(5 * x)
    assert np.max(np.abs(diff_array(f, g, 1) - (3 * np.cos(3 * x) - 2.5 * np.sin(5 * x)))) < 1e-12
    assert np.max(np.abs(diff_array(f, g, 2) + 9 * np.sin(3 * x) + 12.5 * np.cos(5 * x))) < 1e-11


def test_fd_convergence_rate_on_dirichlet_axis():
    errors = []
    for n in (64, 128):
        g = Grid.line(2.0, n, "dirichlet")
        x = g.coords()
        errors.append(np.max(np.abs(diff_array(np.exp(x), g, 1, accuracy=4) - np.exp(x))))
    assert errors[0] / errors[1] > 12.0  # fourth order: ideal ratio 16


def test_spectral_on_dirichlet_axis_is_rejected():
    g = Grid.line(1.0, 16, "dirichlet")
    with pytest.raises(GridMismatchError):
        diff_array(np.zeros(16), g, 1, method="spectral")


def test_radial_laplacian_with_parity():
    g = Grid.radial(8.0, 400)
    r = g.coords()
    f = np.exp(-r ** 2)
    exact = (4 * r ** 2 - 6) * np.exp(-r ** 2)
    lap = laplacian_array(f, g, parity=1, accuracy=6)
    assert np.max(np.abs(lap - exact)) < 1e-6


def test_lattice_box_of_plane_wave():
    g = Grid.lattice(1.0, 64, 2 * math.pi, 32)
    t, y = g.mesh()
    f = np.cos(2 * y - 3 * t)
    box = laplacian(ScalarField(g, f), PhysicalConstants(c=1.0), accuracy=6).values
    assert np.max(np.abs(box - (-9 + 4) * f)[4:-4]) < 1e-6


def test_derivative_tracks_parity():
    g = Grid.radial(4.0, 64)
    f = ScalarField(g, np.exp(-g.coords() ** 2), parity=1)
    assert derivative(f).parity == -1
    assert derivative(f, 2).parity == 1


@given(st.floats(0.5, 3.0))
def test_quadrature_integrates_gaussian(width):
    line = Grid.line(40.0 * width, 512)
    f = ScalarField(line, np.exp(-(line.coords() / width) ** 2))
    assert integrate(f) == pytest.approx(width * math.sqrt(math.pi), rel=1e-10)
    radial = Grid.radial(10.0 * width, 2048)
    g = ScalarField(radial, np.exp(-(radial.coords() / width) ** 2))
    assert integrate(g) == pytest.approx((width * math.sqrt(math.pi)) ** 3, rel=1e-5)


def test_lattice_integration_per_slice():
    g = Grid.lattice(1.0, 8, 2 * math.pi, 32)
    f = ScalarField(g, np.ones(g.shape))
    assert np.allclose(integrate(f, axis=1), 2 * math.pi)
    assert quadrature_weights(g, 1).sum() == pytest.approx(2 * math.pi)


def test_check_finite_and_threads(monkeypatch):
    with pytest.raises(NumericError):
        check_finite("x", np.array([1.0, np.nan]))
    monkeypatch.setenv("QFORCE_THREADS", "3")
    assert max_workers() == 3


def test_field_io_roundtrip(tmp_path):
    g = Grid.lattice(1.0, 8, 2.0, 16)
    t, y = g.mesh()
    f = ScalarField(g, np.sin(y) * np.exp(-t) / 3.0, Role.GENERIC,
                    mask=y > 0)
    save_field(f, tmp_path / "field")
    back = load_field(tmp_path / "field")
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    assert np.array_equal(back.mask, f.mask)


def test_atomic_write_and_digest(tmp_path):
    path = atomic_write_text(tmp_path / "a" / "b.txt", "hello\n")
    assert path.read_text() == "hello\n"
    assert sha256_file(path) == "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03"
    assert not [p for p in path.parent.iterdir() if p.name.endswith(".tmp")]
    rows = write_rows(tmp_path / "r.csv", ["a", "b"], [[0.1, 2], [1 / 3, 4]])
    assert rows.read_text().splitlines()[2] == "0.33333333333333331,4"
