import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qforce.errors import DegenerateInputError, GridMismatchError, ParameterError
from qforce.fields import Grid, Role, ScalarField, Species
from qforce.nonrel import (
    Ensemble, StabilityWarning, Wavefunction, advance_ensemble, compose, decompose,
    equivariance_run, evolve, hj_residuals, hj_residuals_from_series, ks_distance,
    psi_velocity, sample_ensemble, stationary_validate, velocity_field, write_trajectories,
)


def oscillator(grid):
    return 0.5 * grid.coords() ** 2


def coherent(grid, shift=1.0):
    x = grid.coords()
    return Wavefunction(grid, np.exp(-0.5 * (x - shift) ** 2)).normalized()


# ---------------------------------------------------------------- stationary states

@pytest.mark.parametrize("case, expected", [
    ("hydrogen", -0.5), ("oscillator-ground", 0.5), ("oscillator-second", 1.5),
])
def test_stationary_states_have_flat_energy(case, expected):
    report = stationary_validate(case)
    assert report.verdict
    assert report.mean == pytest.approx(expected, rel=1e-6)
    assert report.spread < 1e-6 * abs(expected)


def test_oscillator_gap_is_hbar_omega():
    ground = stationary_validate("oscillator-ground")
    second = stationary_validate("oscillator-second")
    assert second.mean - ground.mean == pytest.approx(1.0, rel=1e-8)


def test_stationary_rejects_unknown_case():
    with pytest.raises(ValueError):
        stationary_validate("helium")


# ---------------------------------------------------------------- evolution

def test_coherent_state_norm_and_centroid():
    grid = Grid.line(16.0, 64)
    psi0 = coherent(grid)
    steps = 1000
    dt = 2 * math.pi / steps
    series = evolve(psi0, oscillator(grid), dt, steps, store_every=250)
    norms = np.array([f.norm() for f in series.frames])
    assert np.max(np.abs(norms - norms[0])) < 1e-10
    x = grid.coords()
    h = grid.spacing[0]
    for t, frame in zip(series.times, series.frames):
        centroid = float(np.sum(x * frame.density()) * h)
        assert centroid == pytest.approx(math.cos(t), abs=1e-5)


def test_free_gaussian_spreads_at_the_textbook_rate():
    grid = Grid.line(80.0, 1024)
    psi0 = Wavefunction(grid, np.exp(-grid.coords() ** 2 / 4.0)).normalized()  # sigma0 = 1
    # with V = 0 the split-step update is exact, so a coarse step is fine here
    with pytest.warns(StabilityWarning):
        series = evolve(psi0, 0.0, 0.01, 300, store_every=300)
    x = grid.coords()
    rho = series.frames[-1].density()
    width = math.sqrt(np.sum(x ** 2 * rho) / np.sum(rho))
    t = series.times[-1]
    assert width == pytest.approx(math.sqrt(1 + (t / 2) ** 2), rel=1e-8)


def test_large_time_step_warns():
    grid = Grid.line(16.0, 64)
    with pytest.warns(StabilityWarning):
        evolve(coherent(grid), oscillator(grid), 0.5, 1)


def test_small_time_step_is_silent():
    grid = Grid.line(16.0, 64)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evolve(coherent(grid), oscillator(grid), 0.001, 2)


def test_evolve_requires_periodic_line():
    grid = Grid.line(16.0, 64, boundary="dirichlet")
    with pytest.raises(GridMismatchError):
        evolve(coherent(grid), 0.0, 0.01, 1)
    with pytest.raises(ParameterError):
        evolve(coherent(Grid.line(16.0, 64)), 0.0, 0.01, -1)


def test_wavefunction_shape_is_checked():
    with pytest.raises(GridMismatchError):
        Wavefunction(Grid.line(1.0, 8), np.ones(9))
    with pytest.raises(DegenerateInputError):
        Wavefunction(Grid.line(1.0, 8), np.zeros(8)).normalized()


# ---------------------------------------------------------------- Madelung variables

@given(st.floats(-3, 3), st.integers(-3, 3))
def test_decompose_compose_round_trip(shift, winding):
    grid = Grid.line(16.0, 128)
    x = grid.coords()
    amp = np.exp(-0.5 * (x - shift) ** 2 + 1j * (2 * math.pi * winding / 16.0) * x + 0.3j)
    psi = Wavefunction(grid, amp)
    rho, S = decompose(psi)
    back = compose(rho, S)
    sel = rho.mask
    assert np.max(np.abs(back.amplitude[sel] - amp[sel])) < 1e-12


def test_decompose_rejects_zero():
    with pytest.raises(DegenerateInputError):
        decompose(Wavefunction(Grid.line(1.0, 8), np.zeros(8)))


def test_velocity_of_plane_wave_ignores_winding():
    grid = Grid.line(2 * math.pi, 64)
    x = grid.coords()
    psi = Wavefunction(grid, np.exp(3j * x))
    rho, S = decompose(psi)
    v = velocity_field(S, rho=rho)
    assert np.allclose(v.values, 3.0, atol=1e-10)
    anti = velocity_field(S, Species.ANTIPARTICLE, rho=rho)
    assert np.allclose(anti.values, -3.0, atol=1e-10)
    assert np.allclose(psi_velocity(psi), 3.0, atol=1e-10)


# ---------------------------------------------------------------- ensembles

def test_sampling_matches_density():
    grid = Grid.line(20.0, 512)
    rho = ScalarField(grid, np.exp(-grid.coords() ** 2), Role.DENSITY)
    ens = sample_ensemble(rho, 20000, seed=3)
    assert ks_distance(ens.positions, rho) < 0.015
    assert ens.count == 20000
    assert np.allclose(ens.weights.sum(), 1.0)


def test_radial_sampling_matches_r2_density():
    grid = Grid.radial(20.0, 800)
    r = grid.coords()
    ens = sample_ensemble(ScalarField(grid, np.exp(-2 * r), Role.DENSITY), 20000, seed=1)
    # r^2 exp(-2r) is a Gamma(3, 1/2) density with mean 3/2
    assert ens.positions.mean() == pytest.approx(1.5, abs=0.03)


def test_sampling_is_seeded():
    grid = Grid.line(20.0, 256)
    rho = ScalarField(grid, np.exp(-grid.coords() ** 2), Role.DENSITY)
    a = sample_ensemble(rho, 100, seed=5).positions
    b = sample_ensemble(rho, 100, seed=5).positions
    assert np.array_equal(a, b)


def test_ensemble_validation():
    grid = Grid.line(1.0, 8)
    with pytest.raises(ParameterError):
        Ensemble(grid, [], 1)
    with pytest.raises(ParameterError):
        Ensemble(grid, [0.0], 2)
    with pytest.raises(ParameterError):
        sample_ensemble(ScalarField(grid, np.ones(8), Role.DENSITY), 0)
    with pytest.raises(DegenerateInputError):
        sample_ensemble(ScalarField(grid, np.zeros(8), Role.DENSITY), 5)


def test_antiparticle_with_reversed_time_retraces_particle_paths():
    grid = Grid.line(16.0, 64)
    x = grid.coords()
    fields = [np.sin(x + 0.1 * k) for k in range(20)]
    ens = Ensemble(grid, np.linspace(-3, 3, 7), 1)
    forward = advance_ensemble(ens, fields, 0.01)
    mirror = advance_ensemble(ens.with_species(Species.ANTIPARTICLE), fields, -0.01)
    for a, b in zip(forward.frames, mirror.frames):
        assert np.array_equal(a.positions, b.positions)
    assert mirror.frames[0].species(0) is Species.ANTIPARTICLE


def test_uniform_velocity_moves_particles_rigidly():
    grid = Grid.line(10.0, 32)
    ens = Ensemble(grid, [0.0, 1.0], [1, -1])
    series = advance_ensemble(ens, [np.full(32, 2.0)] * 11, 0.1)
    assert np.allclose(series.frames[-1].positions, [2.0, -1.0])


def test_particles_leaving_bounded_grid_freeze():
    grid = Grid.line(4.0, 33, boundary="dirichlet")
    ens = Ensemble(grid, [1.5], 1)
    series = advance_ensemble(ens, [np.full(33, 1.0)] * 20, 0.1)
    last = series.frames[-1]
    assert last.frozen[0]
    assert last.positions[0] <= grid.coords()[-1] + grid.spacing[0]


def test_velocity_shape_is_checked():
    grid = Grid.line(4.0, 16)
    with pytest.raises(GridMismatchError):
        advance_ensemble(Ensemble(grid, [0.0], 1), [np.zeros(15)], 0.1)


def test_short_equivariance_run_tracks_density():
    grid = Grid.line(16.0, 64)
    report = equivariance_run(coherent(grid), oscillator(grid), 2 * math.pi / 2000, 100, 4000,
                              seed=2, sample_every=25)
    assert report["norm_drift"] < 1e-12
    assert np.max(report["ks"]) < 0.03


def test_write_trajectories(tmp_path):
    grid = Grid.line(10.0, 32)
    series = advance_ensemble(Ensemble(grid, [0.0, 1.0, 2.0], [1, -1, 1]), [np.ones(32)] * 3, 0.1)
    path = write_trajectories(series, tmp_path / "traj.csv", stride=2)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "particle_id", "position", "species"]
    assert len(rows) == 1 + 3 * 2
    assert rows[2][1] == "2" and rows[2][3] == "particle"


# ---------------------------------------------------------------- hydrodynamic residuals

def ground_state_slices(grid, dt, count=5):
    x = grid.coords()
    rho = ScalarField(grid, np.exp(-x ** 2), Role.DENSITY)
    slices = [ScalarField(grid, np.full(grid.shape, -0.5 * k * dt), Role.PHASE) for k in range(count)]
    return [rho] * count, slices


def test_stationary_state_satisfies_hydrodynamic_equations():
    grid = Grid.line(16.0, 128)
    rho, S = ground_state_slices(grid, 0.01)
    res = hj_residuals(rho, S, oscillator(grid), 0.01)
    assert res.max_hj < 1e-6
    assert res.max_continuity < 1e-6


def test_wrong_phase_is_detected():
    grid = Grid.line(16.0, 128)
    rho, S = ground_state_slices(grid, 0.01)
    S = [s.with_values(s.values + 0.3 * k * grid.coords() ** 2) for k, s in enumerate(S)]
    res = hj_residuals(rho, S, oscillator(grid), 0.01)
    assert res.max_hj > 1e-2


def test_evolved_series_satisfies_hydrodynamic_equations():
    grid = Grid.line(16.0, 128)
    series = evolve(coherent(grid), oscillator(grid), 1e-3, 4)
    res = hj_residuals_from_series(series, oscillator(grid))
    assert res.max_continuity < 1e-3
    assert res.max_hj < 1e-3


def test_hj_needs_three_slices():
    grid = Grid.line(16.0, 32)
    rho, S = ground_state_slices(grid, 0.01, count=2)
    with pytest.raises(ParameterError):
        hj_residuals(rho, S, 0.0, 0.01)
