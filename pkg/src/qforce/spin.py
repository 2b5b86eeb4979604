"""Spin-1/2 and spin-1 kernel mass functions, two-particle kernels, separability.

Index conventions: signature (+,-,-,-), x^0 = ct, and the single spatial
axis of a 1+1 lattice (or of a static line grid) is x^2.  With that choice
a vector A^mu = (0, a(y), 0, 0) is automatically divergence-free.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateInputError, GridMismatchError, ParameterError
from .fields import NATURAL, Dimension, Grid, PhysicalConstants, Role, ScalarField, diff_array
from .qpotential import DENSITY_FLOOR, MAX_SERIES_ORDER, box_exp_series

METRIC = np.diag([1.0, -1.0, -1.0, -1.0])
SPATIAL_AXIS = 2

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True, eq=False)
class GammaAlgebra:
    gammas: np.ndarray
    metric: np.ndarray

    def upper(self, mu: int) -> np.ndarray:
        return self.gammas[mu]

    def lower(self, mu: int) -> np.ndarray:
        return self.metric[mu, mu] * self.gammas[mu]

    def slash(self, k_lower: Sequence[float]) -> np.ndarray:
        """k_mu gamma^mu for a covector k_mu."""
        return np.einsum("m,mab->ab", np.asarray(k_lower, dtype=complex), self.gammas)


def build_gamma() -> GammaAlgebra:
    """Dirac representation: gamma^0 = diag(1,1,-1,-1), gamma^i = [[0, s_i], [-s_i, 0]]."""
    g = np.zeros((4, 4, 4), dtype=complex)
    g[0] = np.diag([1.0, 1.0, -1.0, -1.0])
    zero = np.zeros((2, 2))
    for i, s in enumerate(_PAULI, start=1):
        g[i] = np.block([[zero, s], [-s, zero]])
    eye = np.eye(4)
    for mu in range(4):
        for nu in range(4):
            anti = g[mu] @ g[nu] + g[nu] @ g[mu]
            if not np.array_equal(anti, 2.0 * METRIC[mu, nu] * eye):
                raise AssertionError(f"Clifford relation fails for ({mu}, {nu})")
    g.setflags(write=False)
    metric = METRIC.copy()
    metric.setflags(write=False)
    return GammaAlgebra(g, metric)


GAMMA = build_gamma()


# --------------------------------------------------------------------------
# derivatives on the supported grids

def _d_mu(values: np.ndarray, grid: Grid, mu: int, c: float) -> np.ndarray:
    """Partial derivative d_mu of real samples; zero for directions the grid lacks."""
    if grid.dimension is Dimension.LATTICE1P1:
        if mu == 0:
            return diff_array(values, grid, 1, 0) / c
        if mu == SPATIAL_AXIS:
            return diff_array(values, grid, 1, 1)
    elif grid.dimension is Dimension.LINE1D:
        if mu == SPATIAL_AXIS:
            return diff_array(values, grid, 1, 0)
    else:
        raise GridMismatchError("spin fields live on line or 1+1 lattice grids")
    return np.zeros_like(values)


def _d_mu_complex(values: np.ndarray, grid: Grid, mu: int, c: float) -> np.ndarray:
    return _d_mu(values.real, grid, mu, c) + 1j * _d_mu(values.imag, grid, mu, c)


def _active_axes(grid: Grid) -> tuple:
    return (0, SPATIAL_AXIS) if grid.dimension is Dimension.LATTICE1P1 else (SPATIAL_AXIS,)


def _box_exp_complex(values: np.ndarray, grid: Grid, order: int, beta_sq: float, c: float) -> np.ndarray:
    return (box_exp_series(values.real, grid, order, beta_sq, c)
            + 1j * box_exp_series(values.imag, grid, order, beta_sq, c))


# --------------------------------------------------------------------------
# fields

@dataclass(frozen=True, eq=False)
class SpinorField:
    grid: Grid
    components: np.ndarray

    def __post_init__(self):
        comp = np.array(self.components, dtype=complex)
        if comp.shape != (4,) + self.grid.shape:
            raise GridMismatchError(f"spinor shape {comp.shape} does not match (4,) + {self.grid.shape}")
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)

    def bar(self) -> np.ndarray:
        """Components of Gamma-bar = Gamma^dagger gamma^0."""
        return np.einsum("a...,ab->b...", np.conj(self.components), GAMMA.gammas[0])

    def bilinear(self, other: Optional[np.ndarray] = None) -> np.ndarray:
        """Gamma-bar . X (complex), with X = Gamma by default."""
        x = self.components if other is None else other
        return np.einsum("a...,a...->...", self.bar(), x)

    def density(self, constants: PhysicalConstants = NATURAL) -> ScalarField:
        return ScalarField(self.grid, np.abs(self.bilinear().real) / constants.hbar ** 2, Role.DENSITY)

    def dirac_operator(self, c: float = 1.0) -> np.ndarray:
        """gamma^mu d_mu Gamma."""
        out = np.zeros_like(self.components)
        for mu in _active_axes(self.grid):
            d = np.stack([_d_mu_complex(self.components[a], self.grid, mu, c) for a in range(4)])
            out += np.einsum("ab,b...->a...", GAMMA.gammas[mu], d)
        return out


@dataclass(frozen=True, eq=False)
class VectorField:
    """Contravariant components A^mu sampled on a grid."""
    grid: Grid
    components: np.ndarray

    def __post_init__(self):
        comp = np.array(self.components, dtype=float)
        if comp.shape != (4,) + self.grid.shape:
            raise GridMismatchError(f"vector shape {comp.shape} does not match (4,) + {self.grid.shape}")
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)

    def lower(self) -> np.ndarray:
        return np.einsum("mn,n...->m...", METRIC, self.components)

    def square(self) -> np.ndarray:
        """A_mu A^mu."""
        return np.einsum("m...,m...->...", self.lower(), self.components)

    def divergence(self, c: float = 1.0) -> np.ndarray:
        """d_mu A^mu."""
        out = np.zeros(self.grid.shape)
        for mu in _active_axes(self.grid):
            out += _d_mu(self.components[mu], self.grid, mu, c)
        return out

    def density(self, constants: PhysicalConstants = NATURAL) -> ScalarField:
        return ScalarField(self.grid, np.abs(self.square()) / constants.hbar ** 2, Role.DENSITY)


def _check_order(order: int) -> None:
    if not (0 <= order <= MAX_SERIES_ORDER):
        raise ParameterError(f"truncation order must be in 0..{MAX_SERIES_ORDER}")


def default_epsilon(beta: float) -> float:
    return 1.0 / (2.0 * beta)


def spinor_mass_sq(gamma_field: SpinorField, beta: float, omega_tilde: float,
                   epsilon: Optional[float] = None, order: int = 1,
                   constants: PhysicalConstants = NATURAL, floor: float = DENSITY_FLOOR,
                   diagnostics: Optional[dict] = None) -> ScalarField:
    """M^2 = m^2 + (hbar^2 Om/c^2) Re{Gbar [exp(-box/4b^2) + exp(eps gamma.d) - 1] G} / |Gbar G|.

    Both operator exponentials are truncated at ``order``.  The symmetrised
    (real) part is returned; the largest imaginary part relative to |Gbar G|
    is stored in ``diagnostics["imag_residue"]``.
    """
    _check_order(order)
    if epsilon is None:
        epsilon = default_epsilon(beta)
    grid, c = gamma_field.grid, constants.c
    comps = gamma_field.components
    norm = np.abs(gamma_field.bilinear().real)
    peak = norm.max()
    if not peak > 0:
        raise DegenerateInputError("spinor bilinear vanishes everywhere")
    mask = norm > floor * peak
    safe = np.where(mask, norm, 1.0)
    smear = np.stack([_box_exp_complex(comps[a], grid, order, beta ** 2, c) for a in range(4)])
    mix = comps.copy()
    term = comps.copy()
    for j in range(1, order + 1):
        term = epsilon * SpinorField(grid, term).dirac_operator(c) / j
        mix = mix + term
    operator = smear + mix - comps
    value = gamma_field.bilinear(operator) / safe
    imag = float(np.max(np.abs(value.imag[mask]))) if mask.any() else 0.0
    m2 = constants.m ** 2 + constants.hbar ** 2 * omega_tilde / c ** 2 * value.real
    if diagnostics is not None:
        diagnostics.update(imag_residue=imag, epsilon=epsilon, order=order)
    return ScalarField(grid, np.where(mask, m2, constants.m ** 2), Role.MASS_SQ, mask)


def vector_mass_sq(a_field: VectorField, beta: float, omega_tilde: float, order: int = 1,
                   constants: PhysicalConstants = NATURAL, floor: float = DENSITY_FLOOR,
                   diagnostics: Optional[dict] = None) -> ScalarField:
    """M^2 = m^2 + (hbar^2 Om/c^2) A_nu exp(-box/4b^2) A^nu / |A_mu A^mu|.

    The absolute value makes the correction's sign follow sgn(A.A); the
    sign pattern and the Lorenz-gauge residual d_mu A^mu are reported in
    ``diagnostics``.
    """
    _check_order(order)
    grid, c = a_field.grid, constants.c
    sq = a_field.square()
    norm = np.abs(sq)
    peak = norm.max()
    if not peak > 0:
        raise DegenerateInputError("A_mu A^mu vanishes everywhere")
    mask = norm > floor * peak
    safe = np.where(mask, norm, 1.0)
    lowered = a_field.lower()
    contraction = np.zeros(grid.shape)
    for nu in range(4):
        if np.any(a_field.components[nu]):
            contraction += lowered[nu] * box_exp_series(a_field.components[nu], grid, order, beta ** 2, c)
    m2 = constants.m ** 2 + constants.hbar ** 2 * omega_tilde / c ** 2 * contraction / safe
    if diagnostics is not None:
        signs = np.sign(sq[mask])
        diagnostics.update(
            lorenz_residual=float(np.max(np.abs(a_field.divergence(c)))),
            square_sign=int(signs[0]) if signs.size and np.all(signs == signs[0]) else 0,
            order=order,
        )
    return ScalarField(grid, np.where(mask, m2, constants.m ** 2), Role.MASS_SQ, mask)


def dirac_plane_wave(grid: Grid, epsilon: float, mode: int = 1, spin_index: int = 0,
                     c: float = 1.0) -> tuple:
    """Plane wave u exp(-i k.x) solving eps gamma^mu d_mu G + G = 0.

    The spatial wavenumber is fixed by the grid's periodic y axis
    (k_2 = 2 pi mode / L); the dispersion relation k.k = -1/eps^2 then fixes
    k_0 and u spans the null space of 1 - i eps k-slash.  Returns the
    spinor field and the covector k.
    """
    if grid.dimension is Dimension.LATTICE1P1:
        length = grid.extent[1]
        t, y = grid.mesh()
    elif grid.dimension is Dimension.LINE1D:
        length = grid.extent[0]
        (y,) = grid.mesh()
        t = np.zeros_like(y)
    else:
        raise GridMismatchError("plane waves need a line or lattice grid")
    k2 = 2.0 * math.pi * mode / length
    rad = k2 ** 2 - 1.0 / epsilon ** 2
    if rad < 0 or (grid.dimension is Dimension.LINE1D and abs(rad) > 1e-12 * k2 ** 2):
        raise ParameterError("no plane wave with this mode satisfies the dispersion relation")
    k0 = math.sqrt(max(rad, 0.0))
    k = np.array([k0, 0.0, k2, 0.0])
    symbol = np.eye(4) - 1j * epsilon * GAMMA.slash(k)
    _, sv, vh = np.linalg.svd(symbol)
    null = vh.conj()[sv < 1e-9 * sv.max()]
    if null.shape[0] == 0:
        raise ParameterError("dispersion relation not met to working precision")
    u = null[min(spin_index, null.shape[0] - 1)]
    phase = np.exp(-1j * (k0 * c * t + k2 * y))
    return SpinorField(grid, u.reshape((4,) + (1,) * phase.ndim) * phase), k


def dirac_residual(gamma_field: SpinorField, epsilon: float, c: float = 1.0) -> float:
    """max |eps gamma^mu d_mu G + G| relative to max |G|."""
    res = epsilon * gamma_field.dirac_operator(c) + gamma_field.components
    return float(np.max(np.abs(res)) / np.max(np.abs(gamma_field.components)))


# --------------------------------------------------------------------------
# two-particle kernels on a static spatial slice

class Statistics(enum.Enum):
    BOSON = "boson"
    FERMION = "fermion"


@dataclass(frozen=True)
class MultiKernelSpec:
    beta: float
    beta_prime: float
    statistics: Statistics = Statistics.BOSON
    epsilon_prime: float = 0.0
    epsilon: float = 0.0
    species_count: int = 2
    ref_left: tuple = (1.0, 0.0, 0.0, 0.0)
    ref_right: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.species_count != 2:
            raise ParameterError("only two-particle kernels are supported")
        if not self.beta > 0 or self.beta_prime < 0:
            raise ParameterError("need beta > 0 and beta_prime >= 0")
        object.__setattr__(self, "statistics", Statistics(self.statistics))


def _spatial_vector_matrix(d: float, eps: float) -> np.ndarray:
    """(d_mu 1 + eps gamma_mu) for a purely spatial (x^2) separation d, as a list over mu."""
    vec = np.zeros(4)
    vec[SPATIAL_AXIS] = d
    return [vec[mu] * np.eye(4) + eps * GAMMA.lower(mu) for mu in range(4)]


def _contract(left, right_upper_source) -> np.ndarray:
    """sum_mu L_mu R^mu with R^mu = g^{mu mu} R_mu."""
    return sum(METRIC[mu, mu] * left[mu] @ right_upper_source[mu] for mu in range(4))


def kernel_exponent(xs, ys, spec: MultiKernelSpec) -> np.ndarray:
    """Exponent of the two-particle kernel (scalar for bosons, 4x4 for fermions)."""
    x1, x2 = xs
    y1, y2 = ys
    if spec.statistics is Statistics.BOSON:
        # spatial separations square to -d^2 with the (+,-,-,-) metric
        return (-spec.beta ** 2 * ((x1 - y1) ** 2 + (x2 - y2) ** 2)
                - spec.beta_prime ** 2 * (x1 - x2) * (y1 - y2))
    total = np.zeros((4, 4), dtype=complex)
    for xi, yi in ((x1, y1), (x2, y2)):
        v = _spatial_vector_matrix(xi - yi, spec.epsilon)
        total += spec.beta ** 2 * _contract(v, v)
    left = _spatial_vector_matrix(x1 - x2, spec.epsilon_prime)
    right = _spatial_vector_matrix(y1 - y2, spec.epsilon_prime)
    total += spec.beta_prime ** 2 * _contract(left, right)
    return total


def multiparticle_kernel(xs, ys, spec: MultiKernelSpec):
    """Two-particle kernel value; a 4x4 matrix exponential for fermions."""
    if len(xs) != 2 or len(ys) != 2:
        raise ParameterError("only s = 2 is supported")
    expo = kernel_exponent(xs, ys, spec)
    if spec.statistics is Statistics.BOSON:
        return math.exp(expo)
    return expm(expo)


def scalar_channel(matrix: np.ndarray, spec: MultiKernelSpec) -> float:
    """Re(u-bar K w) with the kernel's reference spinors."""
    u = np.asarray(spec.ref_left, dtype=complex)
    w = np.asarray(spec.ref_right, dtype=complex)
    return float(np.real(np.conj(u) @ GAMMA.gammas[0] @ matrix @ w))


def kernel_grid(x: float, ys: np.ndarray, spec: MultiKernelSpec) -> np.ndarray:
    """K(x, x; y1, y2) on the tensor grid ys x ys (scalar channel for fermions)."""
    n = ys.size
    out = np.empty((n, n))
    for i, y1 in enumerate(ys):
        for j, y2 in enumerate(ys):
            k = multiparticle_kernel((x, x), (y1, y2), spec)
            out[i, j] = k if spec.statistics is Statistics.BOSON else scalar_channel(k, spec)
    return out


@dataclass(frozen=True)
class SeparabilityResult:
    sigma_ratio: float
    singular_values: np.ndarray
    separable: bool
    threshold: float


def separability_test(values: np.ndarray, threshold: float = 1e-10) -> SeparabilityResult:
    """Rank-one test of a sampled K(y1, y2) through its singular values."""
    mat = np.asarray(values, dtype=float)
    if mat.ndim != 2 or min(mat.shape) < 2:
        raise ParameterError("need a 2D sample with at least two points per axis")
    sv = np.linalg.svd(mat, compute_uv=False)
    if not sv[0] > 0:
        raise DegenerateInputError("kernel sample is identically zero")
    ratio = float(sv[1] / sv[0])
    return SeparabilityResult(ratio, sv, ratio < threshold, threshold)


def separability_report(spec: MultiKernelSpec, n: int = 64, x: float = 0.0,
                        half_width: Optional[float] = None, threshold: float = 1e-10) -> dict:
    """Sample the coincident-point kernel on n x n points and test separability."""
    if n < 32:
        raise ParameterError("separability needs n >= 32")
    half_width = half_width if half_width is not None else 4.0 / spec.beta
    ys = np.linspace(x - half_width, x + half_width, n)
    result = separability_test(kernel_grid(x, ys, spec), threshold)
    return {
        "statistics": spec.statistics.value,
        "epsilon_prime": spec.epsilon_prime,
        "beta": spec.beta,
        "beta_prime": spec.beta_prime,
        "n": n,
        "singular_values": [float(s) for s in result.singular_values[:5]],
        "sigma_ratio": result.sigma_ratio,
        "verdict": "separable" if result.separable else "entangling",
    }


def dirac_symbol_residual(u: np.ndarray, k: Sequence[float], epsilon: float) -> float:
    """|(1 - i eps k-slash) u| / |u|: the plane-wave form of eps gamma.d G + G = 0."""
    u = np.asarray(u, dtype=complex)
    res = (np.eye(4) - 1j * epsilon * GAMMA.slash(k)) @ u
    return float(np.linalg.norm(res) / np.linalg.norm(u))
