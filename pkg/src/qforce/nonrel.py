"""Nonrelativistic dynamics: split-step evolution, Madelung variables, guided ensembles.

The Schrodinger equation is solved for psi = sqrt(rho) exp(iS/hbar); the
hydrodynamic pair (rho, S) is read back out of it.  Trajectories follow the
guidance law v = +grad(S)/m for particles and -grad(S)/m for antiparticles.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from .errors import DegenerateInputError, GridMismatchError, ParameterError
from .fieldio import fmt, write_json, write_rows
from .fields import (
    NATURAL,
    Dimension,
    Grid,
    PhysicalConstants,
    Role,
    ScalarField,
    Species,
    check_finite,
    diff_array,
    quadrature_weights,
)
from .qpotential import DENSITY_FLOOR, local_q, q_from_amplitude


class StabilityWarning(UserWarning):
    """Time step is large compared with the fastest resolved kinetic phase."""


# --------------------------------------------------------------------------
# wavefunctions and Madelung variables

@dataclass(frozen=True, eq=False)
class Wavefunction:
    grid: Grid
    amplitude: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amplitude, dtype=complex)
        if amp.shape != self.grid.shape:
            raise GridMismatchError(f"amplitude shape {amp.shape} does not match grid {self.grid.shape}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)

    def density(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def norm(self) -> float:
        return float(np.sum(quadrature_weights(self.grid) * self.density()))

    def normalized(self) -> "Wavefunction":
        n = self.norm()
        if not n > 0:
            raise DegenerateInputError("cannot normalise a zero wavefunction")
        return Wavefunction(self.grid, self.amplitude / math.sqrt(n))


@dataclass(frozen=True)
class WaveSeries:
    times: np.ndarray
    frames: tuple

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def _potential_values(V, grid) -> np.ndarray:
    if V is None:
        return np.zeros(grid.shape)
    if isinstance(V, ScalarField):
        if V.grid != grid:
            raise GridMismatchError("potential lives on a different grid")
        return np.asarray(V.values, dtype=float)
    return np.broadcast_to(np.asarray(V, dtype=float), grid.shape)


def evolve(psi0: Wavefunction, V, dt: float, steps: int,
           constants: PhysicalConstants = NATURAL, store_every: int = 1) -> WaveSeries:
    """Strang split-step propagation: half potential, full kinetic, half potential."""
    grid = psi0.grid
    if grid.dimension is not Dimension.LINE1D or not grid.is_periodic(0):
        raise GridMismatchError("split-step evolution needs a periodic line grid")
    if steps < 0 or store_every < 1:
        raise ParameterError("steps must be >= 0 and store_every >= 1")
    hbar, m = constants.hbar, constants.m
    n, h = grid.points[0], grid.spacing[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    kmax = np.pi / h
    if abs(dt) * hbar * kmax ** 2 / (2.0 * m) > 0.5:
        warnings.warn("dt * hbar * k_max^2 / 2m exceeds 0.5; phases are under-resolved",
                      StabilityWarning, stacklevel=2)
    v = _potential_values(V, grid)
    half_v = np.exp(-0.5j * v * dt / hbar)
    kinetic = np.exp(-0.5j * hbar * k ** 2 * dt / m)
    psi = np.array(psi0.amplitude)
    frames = [psi0]
    times = [0.0]
    for step in range(1, steps + 1):
        psi = half_v * np.fft.ifft(kinetic * np.fft.fft(half_v * psi))
        if step % store_every == 0:
            check_finite("wavefunction", psi)
            frames.append(Wavefunction(grid, psi))
            times.append(step * dt)
    return WaveSeries(np.array(times), tuple(frames))


def decompose(psi: Wavefunction, constants: PhysicalConstants = NATURAL,
              floor: float = DENSITY_FLOOR) -> tuple:
    """(rho, S) with S = hbar * phase unwrapped from the leftmost unmasked point.

    S is meaningful modulo 2 pi hbar only; points with rho at or below the
    floor carry S = 0 and are masked out.
    """
    rho = psi.density()
    peak = rho.max()
    if not peak > 0:
        raise DegenerateInputError("wavefunction is identically zero")
    mask = rho > floor * peak
    phase = np.zeros_like(rho)
    phase[mask] = np.unwrap(np.angle(psi.amplitude[mask]))
    rho_f = ScalarField(psi.grid, rho, Role.DENSITY, mask)
    s_f = ScalarField(psi.grid, constants.hbar * phase, Role.PHASE, mask)
    return rho_f, s_f


def compose(rho: ScalarField, S: ScalarField, constants: PhysicalConstants = NATURAL) -> Wavefunction:
    return Wavefunction(rho.grid, np.sqrt(rho.values) * np.exp(1j * S.values / constants.hbar))


def phase_gradient(psi: Wavefunction, constants: PhysicalConstants = NATURAL,
                   floor: float = DENSITY_FLOOR) -> ScalarField:
    """grad S = hbar Im(conj(psi) grad psi) / |psi|^2, free of 2 pi wrapping."""
    amp = psi.amplitude
    rho = np.abs(amp) ** 2
    mask = rho > floor * rho.max()
    dpsi = diff_array(amp.real, psi.grid, 1) + 1j * diff_array(amp.imag, psi.grid, 1)
    grad = constants.hbar * np.imag(np.conj(amp) * dpsi) / np.where(mask, rho, 1.0)
    return ScalarField(psi.grid, np.where(mask, grad, 0.0), Role.GENERIC, mask)


def velocity_field(S: ScalarField, species: Species = Species.PARTICLE,
                   constants: PhysicalConstants = NATURAL,
                   rho: Optional[ScalarField] = None) -> ScalarField:
    """Guidance velocity v = species.sign * grad(S) / m.

    On periodic grids the gradient is taken through sqrt(rho) exp(iS/hbar)
    so that phase windings do not produce jumps.
    """
    grid = S.grid
    if grid.dimension is Dimension.LINE1D and grid.is_periodic(0):
        amp = np.sqrt(rho.values) if rho is not None else np.ones(grid.shape)
        grad = phase_gradient(Wavefunction(grid, amp * np.exp(1j * S.values / constants.hbar)), constants)
        values, mask = grad.values, grad.mask
    else:
        values = diff_array(S.values, grid, 1)
        mask = S.mask
    if S.mask is not None:
        mask = S.mask if mask is None else (mask & S.mask)
    v = species.sign * values / constants.m
    if mask is not None:
        v = np.where(mask, v, 0.0)
    return ScalarField(grid, v, Role.GENERIC, mask)


def psi_velocity(psi: Wavefunction, constants: PhysicalConstants = NATURAL,
                 floor: float = DENSITY_FLOOR) -> np.ndarray:
    """Particle-convention guidance field grad(S)/m sampled from psi."""
    return phase_gradient(psi, constants, floor).values / constants.m


# --------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True, eq=False)
class Ensemble:
    grid: Grid
    positions: np.ndarray
    signs: np.ndarray
    frozen: np.ndarray = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).ravel()
        if pos.size < 1:
            raise ParameterError("an ensemble needs at least one particle")
        signs = np.broadcast_to(np.asarray(self.signs, dtype=np.int8), pos.shape).copy()
        if not np.all(np.abs(signs) == 1):
            raise ParameterError("species signs must be +1 or -1")
        frozen = np.zeros(pos.shape, bool) if self.frozen is None else np.array(self.frozen, bool)
        for arr in (pos, signs, frozen):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "frozen", frozen)

    @property
    def count(self) -> int:
        return self.positions.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.count, 1.0 / self.count)

    def species(self, i: int) -> Species:
        return Species.PARTICLE if self.signs[i] > 0 else Species.ANTIPARTICLE

    def with_species(self, species: Species) -> "Ensemble":
        return Ensemble(self.grid, self.positions, species.sign, self.frozen)


@dataclass(frozen=True)
class EnsembleSeries:
    times: np.ndarray
    frames: tuple


def _domain(grid: Grid) -> tuple:
    h = grid.spacing[0]
    if grid.dimension is Dimension.RADIAL3D:
        return 0.0, grid.extent[0]
    x = grid.coords(0)
    if grid.is_periodic(0):
        return x[0], x[0] + grid.extent[0]
    return x[0] - 0.5 * h, x[-1] + 0.5 * h


def sample_ensemble(rho: ScalarField, count: int, seed: Union[int, np.random.Generator] = 0,
                    species: Species = Species.PARTICLE) -> Ensemble:
    """Draw ``count`` positions distributed as rho.

    Line grids use inverse-CDF sampling of the piecewise-linear density;
    radial grids use rejection sampling against r^2 rho(r).
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    grid = rho.grid
    x = grid.coords(0)
    dens = np.clip(np.asarray(rho.values, dtype=float), 0.0, None)
    if not dens.max() > 0:
        raise DegenerateInputError("density is identically zero")
    if grid.dimension is Dimension.LINE1D:
        xs, ps = _cdf_nodes(grid, dens)
        cdf = cumulative_trapezoid(ps, xs, initial=0.0)
        cdf /= cdf[-1]
        pos = np.interp(rng.random(count), cdf, xs)
    elif grid.dimension is Dimension.RADIAL3D:
        weight = x ** 2 * dens
        top = 1.05 * weight.max()
        lo, hi = _domain(grid)
        out = []
        need = count
        while need > 0:
            r = rng.uniform(lo, hi, 2 * need + 16)
            keep = r[rng.random(r.size) * top < np.interp(r, x, weight)]
            out.append(keep[:need])
            need -= keep[:need].size
        pos = np.concatenate(out)
    else:
        raise GridMismatchError("ensembles live on line or radial grids")
    return Ensemble(grid, pos, species.sign)


def _cdf_nodes(grid: Grid, dens: np.ndarray) -> tuple:
    """Node coordinates spanning the whole domain and the density on them."""
    x = grid.coords(0)
    lo, hi = _domain(grid)
    if grid.is_periodic(0):
        return np.append(x, hi), np.append(dens, dens[0])
    return np.concatenate([[lo], x, [hi]]), np.concatenate([[0.0], dens, [0.0]])


def _interp(points, grid: Grid, values) -> np.ndarray:
    x = grid.coords(0)
    if grid.dimension is Dimension.LINE1D and grid.is_periodic(0):
        return np.interp(points, x, values, period=grid.extent[0])
    return np.interp(points, x, values)


def advance_ensemble(ens: Ensemble, velocities: Sequence, dt: float) -> EnsembleSeries:
    """Fourth-order Runge-Kutta transport through a sampled velocity history.

    ``velocities[k]`` is the particle-convention guidance field grad(S)/m at
    time k*dt; each particle applies its own species sign.  Half-step fields
    are the average of neighbouring samples.  Positions wrap on periodic
    grids; particles leaving a bounded grid are frozen where they exit.
    A negative ``dt`` integrates backwards.
    """
    grid = ens.grid
    fields_ = [np.asarray(v.values if isinstance(v, ScalarField) else v, dtype=float) for v in velocities]
    if len(fields_) < 1:
        raise ParameterError("need at least one velocity sample")
    for f in fields_:
        if f.shape != grid.shape:
            raise GridMismatchError("velocity sample does not match the ensemble grid")
    lo, hi = _domain(grid)
    periodic = grid.dimension is Dimension.LINE1D and grid.is_periodic(0)
    period = grid.extent[0]
    x = np.array(ens.positions)
    frozen = np.array(ens.frozen)
    step = dt * ens.signs.astype(float)
    frames = [ens]
    times = [0.0]
    for k in range(len(fields_) - 1):
        v0, v1 = fields_[k], fields_[k + 1]
        vm = 0.5 * (v0 + v1)
        live = ~frozen
        xl = x[live]
        sl = step[live]
        k1 = _interp(xl, grid, v0)
        k2 = _interp(xl + 0.5 * sl * k1, grid, vm)
        k3 = _interp(xl + 0.5 * sl * k2, grid, vm)
        k4 = _interp(xl + sl * k3, grid, v1)
        new = xl + sl * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if periodic:
            new = lo + np.mod(new - lo, period)
            x[live] = new
        else:
            out = (new < lo) | (new > hi)
            new = np.clip(new, lo, hi)
            x[live] = new
            idx = np.flatnonzero(live)
            frozen[idx[out]] = True
        frames.append(Ensemble(grid, x.copy(), ens.signs, frozen.copy()))
        times.append((k + 1) * dt)
    return EnsembleSeries(np.array(times), tuple(frames))


def ks_distance(positions: np.ndarray, rho: ScalarField) -> float:
    """Kolmogorov-Smirnov distance between samples and the density's CDF."""
    xs, ps = _cdf_nodes(rho.grid, np.clip(rho.values, 0.0, None))
    cdf = cumulative_trapezoid(ps, xs, initial=0.0)
    cdf /= cdf[-1]
    return float(stats.kstest(positions, lambda p: np.interp(p, xs, cdf)).statistic)


def equivariance_run(psi0: Wavefunction, V, dt: float, steps: int, particles: int,
                     seed: int = 0, sample_every: int = 1,
                     constants: PhysicalConstants = NATURAL) -> dict:
    """Evolve psi, transport a rho0-sampled ensemble, and track the KS distance.

    Returns the wave series, the ensemble series and the KS statistic per
    sampled time together with the norm drift.
    """
    waves = evolve(psi0, V, dt, steps, constants)
    vel = [psi_velocity(p, constants) for p in waves.frames]
    rho0 = ScalarField(psi0.grid, psi0.density(), Role.DENSITY)
    traj = advance_ensemble(sample_ensemble(rho0, particles, seed), vel, dt)
    idx = list(range(0, len(waves.frames), sample_every))
    if idx[-1] != len(waves.frames) - 1:
        idx.append(len(waves.frames) - 1)
    ks = []
    for i in idx:
        rho_t = ScalarField(psi0.grid, waves.frames[i].density(), Role.DENSITY)
        ks.append(ks_distance(traj.frames[i].positions, rho_t))
    norms = np.array([f.norm() for f in waves.frames])
    return {
        "waves": waves,
        "ensemble": traj,
        "ks_times": waves.times[idx],
        "ks": np.array(ks),
        "norm_drift": float(np.max(np.abs(norms - norms[0]))),
        "steps": steps,
    }


def write_trajectories(series: EnsembleSeries, path, stride: int = 1) -> Path:
    """CSV rows (t, particle-id, position, species)."""
    def rows():
        for t, frame in zip(series.times, series.frames):
            for i in range(0, frame.count, stride):
                yield [fmt(t), i, fmt(frame.positions[i]), frame.species(i).value]
    return write_rows(path, ["t", "particle_id", "position", "species"], rows())


def write_equivariance(report: dict, path) -> Path:
    return write_json(path, {
        "times": [float(t) for t in report["ks_times"]],
        "ks": [float(k) for k in report["ks"]],
        "max_ks": float(np.max(report["ks"])),
        "norm_drift": report["norm_drift"],
        "particles": int(report["ensemble"].frames[0].count),
    })


# --------------------------------------------------------------------------
# stationary states

class StationaryScenario(enum.Enum):
    HYDROGEN_GROUND = "hydrogen"
    OSCILLATOR_GROUND = "oscillator-ground"
    OSCILLATOR_SECOND = "oscillator-second"


@dataclass(frozen=True)
class StationaryReport:
    scenario: StationaryScenario
    energies: ScalarField = field(repr=False)
    mean: float
    spread: float
    expected: float
    tolerance: float
    verdict: bool


def stationary_validate(scenario: Union[StationaryScenario, str],
                        constants: PhysicalConstants = NATURAL,
                        points: Optional[int] = None, extent: Optional[float] = None,
                        tolerance: float = 1e-6) -> StationaryReport:
    """Evaluate E(x) = Q(x) + V(x) for an analytic stationary density.

    Hydrogen uses rho = exp(-alpha r) with alpha = -e^2/2q and q = -hbar^2/4m,
    i.e. alpha = 2 m e^2 / hbar^2 (2 in natural units).  The oscillator
    states use alpha = m omega / hbar.
    """
    scenario = StationaryScenario(scenario)
    hbar, m, e, w = constants.hbar, constants.m, constants.e, constants.omega
    if scenario is StationaryScenario.HYDROGEN_GROUND:
        q = -hbar ** 2 / (4.0 * m)
        alpha = -e ** 2 / (2.0 * q)
        n = points or 4096
        grid = Grid.radial(extent or 20.48 / alpha * 2.0, n)
        r = grid.coords(0)
        rho = ScalarField(grid, np.exp(-alpha * r), Role.DENSITY)
        qf = local_q(rho, constants)
        pot = -e ** 2 / r
        expected = -m * e ** 4 / (2.0 * hbar ** 2)
    else:
        alpha = m * w / hbar
        n = points or 512
        grid = Grid.line(extent or 24.0 / math.sqrt(alpha), n)
        x = grid.coords(0)
        if scenario is StationaryScenario.OSCILLATOR_GROUND:
            amp, expected = np.exp(-0.5 * alpha * x ** 2), 0.5 * hbar * w
        else:
            amp, expected = x * np.exp(-0.5 * alpha * x ** 2), 1.5 * hbar * w
        qf = q_from_amplitude(ScalarField(grid, amp, Role.AUXILIARY), constants)
        pot = 0.5 * m * w ** 2 * x ** 2
    energy = np.where(qf.mask, qf.values + pot, 0.0)
    sel = energy[qf.mask]
    mean = float(sel.mean())
    spread = float(np.max(np.abs(sel - mean)))
    verdict = bool(spread / abs(mean) < tolerance and abs(mean - expected) <= tolerance * abs(expected))
    return StationaryReport(scenario, ScalarField(grid, energy, Role.POTENTIAL, qf.mask),
                            mean, spread, expected, tolerance, verdict)


# --------------------------------------------------------------------------
# hydrodynamic residuals

@dataclass(frozen=True)
class HJResiduals:
    times: np.ndarray
    hj: np.ndarray
    continuity: np.ndarray
    mask: np.ndarray

    @property
    def max_hj(self) -> float:
        return float(np.max(np.abs(self.hj[self.mask])))

    @property
    def max_continuity(self) -> float:
        return float(np.max(np.abs(self.continuity[self.mask])))


def hj_residuals(rho: Sequence[ScalarField], S: Sequence[ScalarField], V, dt: float,
                 constants: PhysicalConstants = NATURAL, floor: float = 1e-8) -> HJResiduals:
    """Quantum Hamilton-Jacobi and continuity residuals at interior time slices.

    hj = dS/dt + |grad S|^2/2m + V + Q and continuity = drho/dt + div(rho grad S/m),
    with central time differences.  Time differences of S are taken modulo
    2 pi hbar.  Points with rho <= floor * max(rho) are excluded.
    """
    if len(rho) != len(S) or len(rho) < 3:
        raise ParameterError("need at least three matching (rho, S) slices")
    hbar, m = constants.hbar, constants.m
    grid = rho[0].grid
    v = _potential_values(V, grid)
    psis = [compose(r, s, constants) for r, s in zip(rho, S)]
    hj_rows, cont_rows, masks = [], [], []
    for n in range(1, len(psis) - 1):
        prev, cur, nxt = psis[n - 1], psis[n], psis[n + 1]
        dens = cur.density()
        mask = dens > floor * dens.max()
        ds_dt = hbar * np.angle(nxt.amplitude * np.conj(prev.amplitude)) / (2.0 * dt)
        grad_s = phase_gradient(cur, constants, floor=0.0).values
        q = local_q(ScalarField(grid, dens, Role.DENSITY), constants).values
        hj = ds_dt + grad_s ** 2 / (2.0 * m) + v + q
        drho_dt = (nxt.density() - prev.density()) / (2.0 * dt)
        flux = hbar * np.imag(np.conj(cur.amplitude) * (diff_array(cur.amplitude.real, grid, 1)
                                                        + 1j * diff_array(cur.amplitude.imag, grid, 1))) / m
        cont = drho_dt + diff_array(flux, grid, 1)
        hj_rows.append(np.where(mask, hj, 0.0))
        cont_rows.append(np.where(mask, cont, 0.0))
        masks.append(mask)
    times = dt * np.arange(1, len(psis) - 1)
    return HJResiduals(times, np.array(hj_rows), np.array(cont_rows), np.array(masks))


def hj_residuals_from_series(series: WaveSeries, V, constants: PhysicalConstants = NATURAL,
                             floor: float = 1e-8) -> HJResiduals:
    pairs = [decompose(p, constants) for p in series.frames]
    return hj_residuals([p[0] for p in pairs], [p[1] for p in pairs], V, series.dt, constants, floor)
