"""Quantum-potential formulas: local, two-constant steady state, Gaussian kernel.

The kernel potential of a density rho is

    Q(x) = Omega0 / sqrt(rho(x)) * integral G(x - y) sqrt(rho(y)) dy,
    G(z) = exp(-beta^2 |z|^2),

which for slowly varying densities expands into

    Q = Omega0 * I * exp(laplacian / 4 beta^2) sqrt(rho) / sqrt(rho),

I being the Gaussian normalisation integral in the grid's dimension.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, GridMismatchError, ParameterError
from .fields import (
    NATURAL,
    Dimension,
    PhysicalConstants,
    Role,
    ScalarField,
    Species,
    diff_array,
    laplacian_array,
    max_workers,
)

DENSITY_FLOOR = 1e-12
MAX_SERIES_ORDER = 3
SERIES_ACCURACY = 6
# kernel widths excluded at Dirichlet edges when comparing series and kernel
EDGE_WIDTHS = 6.0


# --------------------------------------------------------------------------
# kernel constants

@dataclass(frozen=True)
class KernelSpec:
    U0: float
    alpha_s: float
    alpha_l: float
    Omega0: float
    beta: float
    zeta: float
    gamma_aux: float
    species: Species

    @property
    def beta_sq(self) -> float:
        return self.beta ** 2

    def norm_integral(self, dimension: int) -> float:
        """Euclidean Gaussian integral (pi / beta^2)^(d/2)."""
        return (math.pi / self.beta_sq) ** (dimension / 2)

    def omega_tilde(self, dimension: int = 3) -> float:
        """Combined constant Omega0 * I used by the relativistic formulas."""
        return self.Omega0 * self.norm_integral(dimension)


def kernel_params(U0: float, alpha_s: float, alpha_l: float) -> KernelSpec:
    """Derived kernel constants from the short/long interaction ranges."""
    if U0 == 0 or not np.isfinite(U0):
        raise ParameterError("U0 must be a non-zero finite number")
    if not (alpha_s > 0 and 2 * alpha_s <= alpha_l):
        raise ParameterError("need 0 < 2*alpha_s <= alpha_l")
    ratio = 4.0 * alpha_s ** 2 / alpha_l ** 2
    disc = math.sqrt(max(0.0, 1.0 - ratio))
    zeta = 0.5 * (1.0 + disc)
    # 1 - disc == ratio / (1 + disc); the right-hand form avoids cancellation for alpha_l >> alpha_s
    one_minus = ratio / (1.0 + disc)
    beta_sq = one_minus / (2.0 * alpha_s ** 2)
    gamma_aux = math.sqrt(2.0) * alpha_s / math.sqrt(one_minus)
    omega0 = U0 * (2.0 * (1.0 + disc)) ** -0.75
    species = Species.PARTICLE if omega0 < 0 else Species.ANTIPARTICLE
    return KernelSpec(U0, alpha_s, alpha_l, omega0, math.sqrt(beta_sq), zeta, gamma_aux, species)


def matched_kernel(beta: float, dimension: int = 1,
                   constants: PhysicalConstants = NATURAL,
                   species: Species = Species.PARTICLE) -> KernelSpec:
    """Kernel with alpha_l = 2 alpha_s whose first correction reproduces -hbar^2/2m.

    Omega0 * I / (4 beta^2) = -hbar^2 / 2m for particles (sign flipped for
    antiparticles).
    """
    if beta <= 0:
        raise ParameterError("beta must be positive")
    alpha_s = 1.0 / (math.sqrt(2.0) * beta)
    norm = (math.pi / beta ** 2) ** (dimension / 2)
    omega0 = -species.sign * 4.0 * beta ** 2 * constants.hbar ** 2 / (2.0 * constants.m) / norm
    U0 = omega0 * 2.0 ** 0.75
    return kernel_params(U0, alpha_s, 2.0 * alpha_s)


# --------------------------------------------------------------------------
# helpers

def _grid_dimension(grid) -> int:
    if grid.dimension is Dimension.LINE1D:
        return 1
    if grid.dimension is Dimension.RADIAL3D:
        return 3
    raise GridMismatchError("kernel quadrature needs a Euclidean (line or radial) grid")


def _floored(rho: ScalarField, floor: float = DENSITY_FLOOR):
    vals = np.asarray(rho.values, dtype=float)
    peak = vals.max() if vals.size else 0.0
    if not peak > 0:
        raise DegenerateInputError("density is identically zero")
    eps = floor * peak
    mask = vals > eps
    if rho.mask is not None:
        mask = mask & rho.mask
    return np.maximum(vals, eps), mask


def _sqrt_density(rho: ScalarField, floor: float = DENSITY_FLOOR):
    clamped, mask = _floored(rho, floor)
    return np.sqrt(np.clip(rho.values, 0.0, None)), np.sqrt(clamped), mask


def _potential(rho: ScalarField, values, mask, role=Role.POTENTIAL) -> ScalarField:
    return ScalarField(rho.grid, values, role, mask)


# --------------------------------------------------------------------------
# local forms

def q_from_amplitude(amplitude: ScalarField, constants: PhysicalConstants = NATURAL,
                     method: Optional[str] = None, floor: float = DENSITY_FLOOR) -> ScalarField:
    """-hbar^2/2m * laplacian(A)/A for a real amplitude A with A^2 = rho.

    The sign of A is free; passing the smooth branch (e.g. x exp(-x^2/2)
    instead of |x| exp(-x^2/2)) avoids a kink at density nodes.
    """
    a = np.asarray(amplitude.values, dtype=float)
    peak = np.abs(a).max()
    if not peak > 0:
        raise DegenerateInputError("amplitude is identically zero")
    mask = a ** 2 > floor * peak ** 2
    if amplitude.mask is not None:
        mask &= amplitude.mask
    lap = laplacian_array(a, amplitude.grid, constants.c, method, parity=amplitude.parity)
    safe = np.where(mask, a, 1.0)
    q = -constants.hbar ** 2 / (2.0 * constants.m) * lap / safe
    q = np.where(mask, q, 0.0)
    return ScalarField(amplitude.grid, q, Role.POTENTIAL, mask)


def local_q(rho: ScalarField, constants: PhysicalConstants = NATURAL,
            method: Optional[str] = None, floor: float = DENSITY_FLOOR) -> ScalarField:
    """Q = -(hbar^2/2m) laplacian(sqrt rho) / sqrt rho."""
    root, root_safe, mask = _sqrt_density(rho, floor)
    lap = laplacian_array(root, rho.grid, constants.c, method, parity=rho.parity)
    q = -constants.hbar ** 2 / (2.0 * constants.m) * lap / root_safe
    return _potential(rho, np.where(mask, q, 0.0), mask)


def steady_q_general(rho: ScalarField, q: float, a: float,
                     method: Optional[str] = None, floor: float = DENSITY_FLOOR) -> ScalarField:
    """q * (laplacian(rho)/rho + a |grad rho|^2 / rho^2)."""
    clamped, mask = _floored(rho, floor)
    vals = np.asarray(rho.values, dtype=float)
    lap = laplacian_array(vals, rho.grid, 1.0, method, parity=rho.parity)
    if rho.grid.dimension is Dimension.LATTICE1P1:
        raise GridMismatchError("steady-state form is defined on line or radial grids")
    grad = diff_array(vals, rho.grid, 1, 0, method, parity=rho.parity)
    out = q * (lap / clamped + a * grad ** 2 / clamped ** 2)
    return _potential(rho, np.where(mask, out, 0.0), mask)


def two_constant_coefficients(constants: PhysicalConstants = NATURAL) -> tuple:
    """(q, a) for which the two-constant form equals the local form."""
    return -constants.hbar ** 2 / (4.0 * constants.m), -0.5


def force_field(potential: ScalarField, species: Species, constants: PhysicalConstants = NATURAL,
                method: Optional[str] = None) -> ScalarField:
    """Acceleration field -(+/-1) grad(Q) / m; the sign flips with species."""
    grad = diff_array(potential.values, potential.grid, 1, 0, method)
    return ScalarField(potential.grid, -species.sign * grad / constants.m, Role.GENERIC, potential.mask)


# --------------------------------------------------------------------------
# Gaussian moments

@dataclass(frozen=True)
class MomentResult:
    n: int
    dimension: int
    signature: str
    beta: float
    base_integral: Optional[float]
    scale: np.ndarray = field(repr=False)

    @property
    def value(self) -> Optional[np.ndarray]:
        """Absolute moment tensor (None when the base integral is symbolic)."""
        return None if self.base_integral is None else self.base_integral * self.scale


def _pairings(indices):
    if not indices:
        yield []
        return
    first, rest = indices[0], indices[1:]
    for k in range(len(rest)):
        pair = (first, rest[k])
        for tail in _pairings(rest[:k] + rest[k + 1:]):
            yield [pair] + tail


def gaussian_moment(n: int, beta: float, dimension: int = 3,
                    signature: Optional[str] = None) -> MomentResult:
    """Closed-form Gaussian moment tensor J_n(0) relative to the base integral I.

    Euclidean:   J_2k / I = (1/(2 beta^2))^k * sum over pairings of delta products.
    Lorentzian:  J_2k / I = (-1/(2 beta^2))^k * sum over pairings of metric products,
                 with I left symbolic (``base_integral`` is None).
    Odd moments vanish.
    """
    if not (0 <= n <= 6):
        raise ParameterError("moment order must be in 0..6")
    if beta <= 0:
        raise ParameterError("beta must be positive")
    if signature is None:
        signature = "lorentzian" if dimension == 4 else "euclidean"
    if signature == "euclidean":
        if dimension not in (1, 2, 3):
            raise ParameterError("Euclidean moments support dimension 1..3")
        metric = np.eye(dimension)
        factor = 1.0 / (2.0 * beta ** 2)
        base = (math.pi / beta ** 2) ** (dimension / 2)
    elif signature == "lorentzian":
        if dimension != 4:
            raise ParameterError("Lorentzian moments need dimension 4")
        metric = np.diag([1.0, -1.0, -1.0, -1.0])
        factor = -1.0 / (2.0 * beta ** 2)
        base = None
    else:
        raise ParameterError(f"unknown signature {signature!r}")
    shape = (dimension,) * n
    scale = np.zeros(shape)
    if n % 2 == 0:
        pairings = list(_pairings(list(range(n))))
        for idx in itertools.product(range(dimension), repeat=n):
            total = 0.0
            for pairing in pairings:
                prod = 1.0
                for a, b in pairing:
                    prod *= metric[idx[a], idx[b]]
                    if prod == 0.0:
                        break
                total += prod
            scale[idx] = total * factor ** (n // 2)
    scale.setflags(write=False)
    return MomentResult(n, dimension, signature, beta, base, scale)


# --------------------------------------------------------------------------
# kernel convolution

def _direct_line(src, x, beta_sq, h, period, chunk=512):
    n = x.size
    out = np.empty(n)

    def work(lo):
        hi = min(lo + chunk, n)
        d = x[lo:hi, None] - x[None, :]
        if period is not None:
            d = d - period * np.round(d / period)
        out[lo:hi] = np.exp(-beta_sq * d * d) @ src * h

    _run_chunks(work, n, chunk)
    return out


def _direct_radial(src, r, beta_sq, h, chunk=512):
    n = r.size
    out = np.empty(n)
    weighted = r * src * h

    def work(lo):
        hi = min(lo + chunk, n)
        ri = r[lo:hi, None]
        kern = np.exp(-beta_sq * (ri - r[None, :]) ** 2) - np.exp(-beta_sq * (ri + r[None, :]) ** 2)
        out[lo:hi] = kern @ weighted

    _run_chunks(work, n, chunk)
    return out * math.pi / (beta_sq * r)


def _run_chunks(work, n, chunk):
    starts = range(0, n, chunk)
    workers = min(max_workers(), len(starts))
    if workers <= 1:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, starts))


def _linear_conv_fft(src, kernel_offsets):
    """out[i] = sum_j src[j] * kernel_offsets[i - j + n - 1] (kernel over -(n-1)..(n-1))."""
    n = src.size
    size = 1 << int(math.ceil(math.log2(3 * n)))
    full = np.fft.irfft(np.fft.rfft(src, size) * np.fft.rfft(kernel_offsets, size), size)
    return full[n - 1:2 * n - 1]


def _spectral_line(src, beta_sq, h, periodic):
    n = src.size
    if periodic:
        j = np.arange(n)
        d = np.minimum(j, n - j) * h
        kern = np.exp(-beta_sq * d * d)
        return np.fft.irfft(np.fft.rfft(src) * np.fft.rfft(kern), n) * h
    offs = np.arange(-(n - 1), n) * h
    return _linear_conv_fft(src, np.exp(-beta_sq * offs * offs)) * h


def _spectral_radial(src, r, beta_sq, h):
    n = src.size
    u = r * src
    odd = np.concatenate([-u[::-1], u])
    offs = np.arange(-(2 * n - 1), 2 * n) * h
    conv = _linear_conv_fft(odd, np.exp(-beta_sq * offs * offs))
    return conv[n:] * h * math.pi / (beta_sq * r)


def gaussian_convolve(values: np.ndarray, grid, beta: float, method: str = "spectral") -> np.ndarray:
    """(G * f)(x) with G = exp(-beta^2 |x|^2), over the grid's Euclidean measure."""
    dim = _grid_dimension(grid)
    h = grid.spacing[0]
    beta_sq = beta ** 2
    src = np.asarray(values, dtype=float)
    if dim == 1:
        periodic = grid.is_periodic(0)
        if method == "direct":
            return _direct_line(src, grid.coords(0), beta_sq, h, grid.extent[0] if periodic else None)
        if method == "spectral":
            return _spectral_line(src, beta_sq, h, periodic)
    else:
        r = grid.coords(0)
        if method == "direct":
            return _direct_radial(src, r, beta_sq, h)
        if method == "spectral":
            return _spectral_radial(src, r, beta_sq, h)
    raise ParameterError(f"unknown convolution method {method!r}")


def mollify(rho: ScalarField, width: float) -> ScalarField:
    """Normalised Gaussian smoothing of a density (std ``width``)."""
    dim = _grid_dimension(rho.grid)
    b = 1.0 / (math.sqrt(2.0) * width)
    smoothed = gaussian_convolve(rho.values, rho.grid, b) / (math.pi / b ** 2) ** (dim / 2)
    return ScalarField(rho.grid, np.clip(smoothed, 0.0, None), Role.DENSITY, rho.mask, rho.parity)


def variation_scale(rho: ScalarField) -> float:
    """Length over which sqrt(rho) changes: exactly L for rho = exp(-|x|^2/L^2)."""
    dim = _grid_dimension(rho.grid)
    root = np.sqrt(np.clip(rho.values, 0.0, None))
    grad = diff_array(root, rho.grid, 1, 0, parity=rho.parity)
    from .fields import quadrature_weights
    w = quadrature_weights(rho.grid)
    num = float(np.sum(w * rho.values))
    den = float(np.sum(w * grad ** 2))
    return math.sqrt(dim * num / (2.0 * den)) if den > 0 else math.inf


@dataclass(frozen=True)
class KernelDiagnostics:
    beta_scale: float
    floored_points: int
    smoothed: bool


def kernel_q_convolution(rho: ScalarField, spec: KernelSpec, method: str = "spectral",
                         enforce_smoothing: bool = False, floor: float = DENSITY_FLOOR,
                         diagnostics: Optional[dict] = None) -> ScalarField:
    """Nonlocal potential (Omega0 / sqrt rho) (G * sqrt rho).

    ``method`` selects the O(N^2) ``"direct"`` sum or the FFT
    ``"spectral"`` convolution.  Pass a dict as ``diagnostics`` to receive
    the beta*L smoothness ratio and the number of floored points.
    """
    if enforce_smoothing:
        rho = mollify(rho, 3.0 / spec.beta)
    root, root_safe, mask = _sqrt_density(rho, floor)
    conv = gaussian_convolve(root, rho.grid, spec.beta, method)
    q = spec.Omega0 * conv / root_safe
    if diagnostics is not None:
        diagnostics.update(
            beta_scale=variation_scale(rho) * spec.beta,
            floored_points=int((~mask).sum()),
            smoothed=bool(enforce_smoothing),
        )
    return _potential(rho, q, mask)


def _series_operator(root, grid, order, beta_sq, sign, c=1.0, accuracy=SERIES_ACCURACY):
    """sum_{k<=order} (sign * L / 4 beta^2)^k root / k!  with L the grid Laplacian/box.

    Repeated finite-difference Laplacians are used on every grid: the
    spectral symbol k^(2*order) amplifies roundoff in the far tails of a
    density by ~1e8 at order 3, which would swamp the true correction once
    divided by sqrt(rho).
    """
    total = root.copy()
    term = root.copy()
    for j in range(1, order + 1):
        term = sign * laplacian_array(term, grid, c, "fd", accuracy) / (4.0 * beta_sq) / j
        total = total + term
    return total


def kernel_q_series(rho: ScalarField, spec: KernelSpec, order: int = 1,
                    floor: float = DENSITY_FLOOR) -> ScalarField:
    """Truncated expansion Omega0 I (1/sqrt rho) sum_k (lap/4beta^2)^k sqrt(rho) / k!."""
    if not (0 <= order <= MAX_SERIES_ORDER):
        raise ParameterError(f"series order must be in 0..{MAX_SERIES_ORDER}")
    dim = _grid_dimension(rho.grid)
    root, root_safe, mask = _sqrt_density(rho, floor)
    series = _series_operator(root, rho.grid, order, spec.beta_sq, +1)
    q = spec.Omega0 * spec.norm_integral(dim) * series / root_safe
    return _potential(rho, np.where(mask, q, spec.Omega0 * spec.norm_integral(dim)), mask)


# --------------------------------------------------------------------------
# relativistic mass functions

def box_exp_series(values: np.ndarray, grid, order: int, beta_sq: float, c: float = 1.0) -> np.ndarray:
    """Truncated exp(-box / 4 beta^2) applied to real samples.

    On the 1+1 lattice box = c^-2 d_t^2 - d_y^2; on static grids box = -lap.
    """
    if grid.dimension is Dimension.LATTICE1P1:
        return _series_operator(np.asarray(values, dtype=float), grid, order, beta_sq, -1, c)
    return _series_operator(np.asarray(values, dtype=float), grid, order, beta_sq, +1, c)


def rel_mass_sq_local(field_: ScalarField, constants: PhysicalConstants = NATURAL,
                      floor: float = DENSITY_FLOOR) -> ScalarField:
    """M^2 = m^2 + (hbar^2/c^2) box(sqrt rho)/sqrt rho.

    A DENSITY field is used through its square root; an AUXILIARY field is
    taken as Lambda = hbar sqrt(rho) directly (the ratio is identical).
    """
    grid = field_.grid
    if field_.role is Role.AUXILIARY:
        amp = np.asarray(field_.values, dtype=float)
        peak = np.abs(amp).max()
        if not peak > 0:
            raise DegenerateInputError("auxiliary field is identically zero")
        mask = amp ** 2 > floor * peak ** 2
        if field_.mask is not None:
            mask &= field_.mask
        safe = np.where(mask, amp, 1.0)
    else:
        amp, safe, mask = _sqrt_density(field_, floor)
    lap = laplacian_array(amp, grid, constants.c, parity=field_.parity)
    box = lap if grid.dimension is Dimension.LATTICE1P1 else -lap
    m2 = constants.m ** 2 + constants.hbar ** 2 / constants.c ** 2 * box / safe
    return ScalarField(grid, np.where(mask, m2, constants.m ** 2), Role.MASS_SQ, mask)


def rel_mass_sq_kernel(rho: ScalarField, spec: KernelSpec, order: Optional[int] = 1,
                       constants: PhysicalConstants = NATURAL,
                       omega_tilde: Optional[float] = None,
                       floor: float = DENSITY_FLOOR) -> ScalarField:
    """Kernel mass function.

    ``order`` = k: M^2 = m^2 + (hbar^2 Omega~/c^2) exp(-box/4beta^2)|_k sqrt(rho) / sqrt(rho).
    ``order`` = None: untruncated static quadrature, M^2 = -/+ Q / c^2 with Q the
    kernel potential (particle / antiparticle); non-negative by construction.
    """
    grid = rho.grid
    if order is None:
        q = kernel_q_convolution(rho, spec, method="direct", floor=floor)
        m2 = -spec.species.sign * q.values / constants.c ** 2
        return ScalarField(grid, m2, Role.MASS_SQ, q.mask)
    if not (0 <= order <= MAX_SERIES_ORDER):
        raise ParameterError(f"series order must be in 0..{MAX_SERIES_ORDER}")
    if omega_tilde is None:
        omega_tilde = spec.omega_tilde(3 if grid.dimension is not Dimension.LINE1D else 1)
    if rho.role is Role.AUXILIARY:
        root = np.asarray(rho.values, dtype=float)
        peak = np.abs(root).max()
        if not peak > 0:
            raise DegenerateInputError("auxiliary field is identically zero")
        mask = root ** 2 > floor * peak ** 2
        safe = np.where(mask, root, 1.0)
    else:
        root, safe, mask = _sqrt_density(rho, floor)
    series = box_exp_series(root, grid, order, spec.beta_sq, constants.c)
    m2 = constants.m ** 2 + constants.hbar ** 2 * omega_tilde / constants.c ** 2 * series / safe
    const = constants.m ** 2 + constants.hbar ** 2 * omega_tilde / constants.c ** 2
    return ScalarField(grid, np.where(mask, m2, const), Role.MASS_SQ, mask)


def kernel_compare(rho: ScalarField, spec: KernelSpec, orders=(0, 1, 2, 3)) -> dict:
    """Cross-check the two convolution paths and the truncated series.

    ``path_deviation`` compares G * sqrt(rho) from the direct and spectral
    routes relative to its peak; dividing by sqrt(rho) first would turn
    roundoff at the density tails into spurious pointwise differences.
    ``series_deviation[k]`` is max |series_k - Q| / |Q| over the mask,
    leaving out points within EDGE_WIDTHS / beta of a Dirichlet edge where
    the convolution misses the density beyond the grid.
    """
    import time

    root, _, mask = _sqrt_density(rho)
    mask = mask.copy()
    if not rho.grid.is_periodic(0) and rho.grid.dimension is Dimension.LINE1D:
        band = int(math.ceil(EDGE_WIDTHS / spec.beta / rho.grid.spacing[0]))
        mask[:band] = False
        mask[-band:] = False
    t0 = time.perf_counter()
    direct = gaussian_convolve(root, rho.grid, spec.beta, "direct")
    t1 = time.perf_counter()
    spectral = gaussian_convolve(root, rho.grid, spec.beta, "spectral")
    t2 = time.perf_counter()
    path_dev = float(np.max(np.abs(direct - spectral)) / np.max(np.abs(direct)))
    diag: dict = {}
    q = kernel_q_convolution(rho, spec, "spectral", diagnostics=diag)
    deviations = {}
    for k in orders:
        series = kernel_q_series(rho, spec, k)
        rel = np.abs(series.values - q.values)[mask] / np.abs(q.values[mask])
        deviations[int(k)] = float(rel.max())
    devs = [deviations[k] for k in sorted(deviations)]
    return {
        "orders": sorted(deviations),
        "series_deviation": deviations,
        "monotone": all(b < a for a, b in zip(devs, devs[1:])),
        "path_deviation": path_dev,
        "beta_scale": diag["beta_scale"],
        "floored_points": diag["floored_points"],
        "points": int(rho.grid.points[0]),
        "time_direct_s": t1 - t0,
        "time_spectral_s": t2 - t1,
    }
