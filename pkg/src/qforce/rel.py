"""Relativistic spin-0 system on a 1+1 lattice (t, y).

Signature (+,-,-,-) with x^0 = ct; y plays the role of x^2.  Vectors are
stored as arrays of shape (2, nt, ny) holding the (mu = 0, mu = 2)
components, contravariant unless the name says otherwise.

Phase derivatives are always formed from psi = sqrt(rho) exp(iS/hbar), so a
phase stored modulo 2 pi hbar is harmless.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, GridMismatchError, ParameterError
from .fields import (
    NATURAL,
    Dimension,
    Grid,
    PhysicalConstants,
    Role,
    ScalarField,
    diff_array,
    quadrature_weights,
)
from .qpotential import DENSITY_FLOOR, box_exp_series, rel_mass_sq_local

DEFAULT_ACCURACY = 6
LAMBDA_TOLERANCE = 1e-10


def _require_lattice(grid: Grid) -> None:
    if grid.dimension is not Dimension.LATTICE1P1:
        raise GridMismatchError("relativistic fields live on a 1+1 lattice")


def _d(values: np.ndarray, grid: Grid, mu: int, c: float, accuracy: int) -> np.ndarray:
    """d_mu for mu in {0, 2}: (1/c) d/dt or d/dy."""
    if mu == 0:
        return diff_array(values, grid, 1, 0, accuracy=accuracy) / c
    return diff_array(values, grid, 1, 1, accuracy=accuracy)


def _div(vec: np.ndarray, grid: Grid, c: float, accuracy: int) -> np.ndarray:
    """d_mu X^mu for a contravariant (X^0, X^2) pair."""
    return _d(vec[0], grid, 0, c, accuracy) + _d(vec[1], grid, 2, c, accuracy)


def _raise(covector: np.ndarray) -> np.ndarray:
    return np.stack([covector[0], -covector[1]])


@dataclass(frozen=True, eq=False)
class RelState:
    rho: ScalarField
    S: ScalarField
    Lambda: ScalarField
    mass_sq: ScalarField
    constants: PhysicalConstants = NATURAL

    def __post_init__(self):
        grid = self.rho.grid
        _require_lattice(grid)
        for f in (self.S, self.Lambda, self.mass_sq):
            if f.grid != grid:
                raise GridMismatchError("state fields must share one lattice")
        scale = self.constants.hbar ** 2 * max(float(np.max(self.rho.values)), 1e-300)
        err = np.max(np.abs(self.Lambda.values ** 2 - self.constants.hbar ** 2 * self.rho.values))
        if err > LAMBDA_TOLERANCE * scale:
            raise ParameterError("Lambda^2 must equal hbar^2 rho")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    @classmethod
    def from_density(cls, rho: ScalarField, S: ScalarField, constants: PhysicalConstants = NATURAL,
                     mass_sq: Optional[ScalarField] = None) -> "RelState":
        """Build a state with Lambda = hbar sqrt(rho) and, by default, the local mass function."""
        lam = ScalarField(rho.grid, constants.hbar * np.sqrt(rho.values), Role.AUXILIARY, rho.mask)
        if mass_sq is None:
            mass_sq = rel_mass_sq_local(lam, constants)
        return cls(rho, S, lam, mass_sq, constants)

    def psi(self) -> np.ndarray:
        return np.sqrt(self.rho.values) * np.exp(1j * self.S.values / self.constants.hbar)

    def mask(self, floor: float = DENSITY_FLOOR) -> np.ndarray:
        rho = self.rho.values
        m = rho > floor * rho.max()
        for f in (self.rho, self.S, self.mass_sq):
            if f.mask is not None:
                m = m & f.mask
        return m


def lambda_from_rho(rho: ScalarField, constants: PhysicalConstants = NATURAL) -> ScalarField:
    return ScalarField(rho.grid, constants.hbar * np.sqrt(rho.values), Role.AUXILIARY, rho.mask)


def rho_from_lambda(lam: ScalarField, constants: PhysicalConstants = NATURAL) -> ScalarField:
    return ScalarField(lam.grid, lam.values ** 2 / constants.hbar ** 2, Role.DENSITY, lam.mask)


def kg_superposition(grid: Grid, constants: PhysicalConstants = NATURAL,
                     modes: Sequence = ((1, 1.0), (2, 0.3)), kappa: Optional[float] = None,
                     mass_sq: Optional[ScalarField] = None) -> RelState:
    """Manufactured state from phi = sum_j b_j exp(i(k_j y - w_j t)).

    k_j = 2 pi n_j / L_y and w_j = c sqrt(k_j^2 + kappa^2), so that
    (box + kappa^2) phi = 0.  With kappa = mc/hbar (the default) the local
    mass function of the resulting (rho, S) solves the Hamilton-Jacobi and
    continuity equations exactly.  Amplitudes should keep |phi| away from
    zero (e.g. one dominant mode).
    """
    _require_lattice(grid)
    c, hbar = constants.c, constants.hbar
    if kappa is None:
        kappa = constants.m * c / hbar
    t, y = grid.mesh()
    length = grid.extent[1]
    phi = np.zeros(grid.shape, dtype=complex)
    for n, b in modes:
        k = 2.0 * math.pi * n / length
        w = c * math.sqrt(k * k + kappa * kappa)
        phi += b * np.exp(1j * (k * y - w * t))
    rho = ScalarField(grid, np.abs(phi) ** 2, Role.DENSITY)
    S = ScalarField(grid, hbar * np.angle(phi), Role.PHASE)
    return RelState.from_density(rho, S, constants, mass_sq)


def phase_covector(state: RelState, accuracy: int = DEFAULT_ACCURACY) -> np.ndarray:
    """(d_0 S, d_2 S) = hbar Im(conj(psi) d_mu psi) / |psi|^2."""
    psi = state.psi()
    grid, c = state.grid, state.constants.c
    rho = np.abs(psi) ** 2
    safe = np.where(rho > 0, rho, 1.0)
    out = []
    for mu in (0, 2):
        dpsi = _d(psi.real, grid, mu, c, accuracy) + 1j * _d(psi.imag, grid, mu, c, accuracy)
        out.append(state.constants.hbar * np.imag(np.conj(psi) * dpsi) / safe)
    return np.stack(out)


def momentum(state: RelState, accuracy: int = DEFAULT_ACCURACY) -> np.ndarray:
    """Covariant momentum P_mu = -d_mu S."""
    return -phase_covector(state, accuracy)


def rel_residuals(state: RelState, accuracy: int = DEFAULT_ACCURACY) -> tuple:
    """hj = d_mu S d^mu S - M^2 c^2 and continuity = d_mu(rho d^mu S)."""
    grid, c = state.grid, state.constants.c
    ds = phase_covector(state, accuracy)
    hj = ds[0] ** 2 - ds[1] ** 2 - state.mass_sq.values * c ** 2
    cont = _div(state.rho.values * _raise(ds), grid, c, accuracy)
    mask = state.mask()
    return (ScalarField(grid, np.where(mask, hj, 0.0), Role.GENERIC, mask),
            ScalarField(grid, np.where(mask, cont, 0.0), Role.GENERIC, mask))


def _mass(state: RelState, floor: float = 1e-12) -> tuple:
    m2 = state.mass_sq.values
    pos = m2 > floor * max(float(np.max(np.abs(m2))), 1e-300)
    return np.sqrt(np.where(pos, m2, 1.0)), pos


def quantum_force(state: RelState, accuracy: int = DEFAULT_ACCURACY) -> tuple:
    """(F_0, F_2) = c^2 d_mu M, the relativistic quantum force on the lattice."""
    grid, c = state.grid, state.constants.c
    mass, pos = _mass(state)
    mask = state.mask() & pos
    return tuple(ScalarField(grid, np.where(mask, c ** 2 * _d(mass, grid, mu, c, accuracy), 0.0),
                             Role.GENERIC, mask) for mu in (0, 2))


def force_consistency(state: RelState, accuracy: int = DEFAULT_ACCURACY) -> dict:
    """Compare dP_mu/dtau = (P^nu/M) d_nu P_mu with c^2 d_mu M.

    Also evaluates the contraction P^mu dP_mu/dtau - (1/2) d(M^2 c^2)/dtau,
    which vanishes identically on shell.
    """
    grid, c = state.grid, state.constants.c
    p_low = momentum(state, accuracy)
    p_up = _raise(p_low)
    mass, pos = _mass(state)
    mask = state.mask() & pos
    dp_dtau = np.stack([
        sum(p_up[j] * _d(p_low[i], grid, nu, c, accuracy) for j, nu in enumerate((0, 2))) / mass
        for i in range(2)
    ])
    force = np.stack([c ** 2 * _d(mass, grid, mu, c, accuracy) for mu in (0, 2)])
    m2c2 = state.mass_sq.values * c ** 2
    dm_dtau = sum(p_up[j] * _d(m2c2, grid, nu, c, accuracy) for j, nu in enumerate((0, 2))) / mass
    contraction = np.einsum("i...,i...->...", p_up, dp_dtau) - 0.5 * dm_dtau
    return {
        "force_law_residual": float(np.max(np.abs((dp_dtau - force)[:, mask]))),
        "force_scale": float(np.max(np.abs(force[:, mask]))) if mask.any() else 0.0,
        "contraction_residual": float(np.max(np.abs(contraction[mask]))),
    }


# --------------------------------------------------------------------------
# currents

@dataclass(frozen=True, eq=False)
class CurrentSet:
    mass: np.ndarray
    charge: np.ndarray
    number: np.ndarray
    div_mass: np.ndarray
    div_charge: np.ndarray
    div_number: np.ndarray
    number_law_residual: np.ndarray
    charge_to_mass: np.ndarray
    mask: np.ndarray

    def report(self, charge_over_mass: float) -> dict:
        m = self.mask
        return {
            "max_div_mass": float(np.max(np.abs(self.div_mass[m]))),
            "max_div_charge": float(np.max(np.abs(self.div_charge[m]))),
            "max_div_number": float(np.max(np.abs(self.div_number[m]))),
            "number_law_residual": float(np.max(np.abs(self.number_law_residual[m]))),
            "charge_to_mass_error": float(np.max(np.abs(self.charge_to_mass[m] - charge_over_mass))),
            "points": int(m.sum()),
        }


def currents(state: RelState, accuracy: int = DEFAULT_ACCURACY, edge: int = 0) -> CurrentSet:
    """Mass, charge and number currents with their lattice divergences.

    U^mu = P^mu / (M c); mass current rho M U, charge current rho E U with
    E = (e/m) M, number current N = rho U.  ``number_law_residual`` is
    d_mu N^mu + N^mu d_mu M / M.  ``edge`` time rows at each end are left
    out of the mask (one-sided stencils there are less accurate).
    """
    grid, k = state.grid, state.constants
    c = k.c
    mass, pos = _mass(state)
    mask = state.mask() & pos
    if edge:
        mask[:edge] = False
        mask[-edge:] = False
    p_up = _raise(momentum(state, accuracy))
    u = p_up / (mass * c)
    rho = state.rho.values
    charge_density = (k.e / k.m) * mass
    j_mass = rho * mass * u
    j_charge = rho * charge_density * u
    n = rho * u
    div_n = _div(n, grid, c, accuracy)
    grad_m = np.stack([_d(mass, grid, mu, c, accuracy) for mu in (0, 2)])
    number_law = div_n + np.einsum("i...,i...->...", n, grad_m) / mass
    return CurrentSet(j_mass, j_charge, n, _div(j_mass, grid, c, accuracy),
                      _div(j_charge, grid, c, accuracy), div_n, number_law,
                      charge_density / mass, mask)


def mass_current_drift(state: RelState, accuracy: int = DEFAULT_ACCURACY, edge: int = 4) -> float:
    """max |d/dt int rho M U^0 dy| over interior time slices."""
    cur = currents(state, accuracy)
    w = quadrature_weights(state.grid, 1)
    totals = np.sum(cur.mass[0] * w, axis=1)
    rate = np.gradient(totals, state.grid.spacing[0])
    return float(np.max(np.abs(rate[edge:-edge] if edge else rate)))


# --------------------------------------------------------------------------
# effective potential

def effective_potential(mass_sq: ScalarField, beta: float, omega_tilde: float,
                        constants: PhysicalConstants = NATURAL,
                        diagnostics: Optional[dict] = None) -> ScalarField:
    """V = (1/beta^2) ln[c^2 (M^2 - m^2) / (hbar^2 Om)]; non-positive arguments are masked."""
    if beta <= 0 or omega_tilde == 0:
        raise ParameterError("need beta > 0 and a non-zero omega_tilde")
    arg = constants.c ** 2 * (mass_sq.values - constants.m ** 2) / (constants.hbar ** 2 * omega_tilde)
    mask = arg > 0
    if mass_sq.mask is not None:
        mask &= mass_sq.mask
    v = np.where(mask, np.log(np.where(mask, arg, 1.0)) / beta ** 2, 0.0)
    if diagnostics is not None:
        diagnostics["masked_points"] = int((~mask).sum())
    return ScalarField(mass_sq.grid, v, Role.POTENTIAL, mask)


def mass_from_potential(V: ScalarField, beta: float, omega_tilde: float,
                        constants: PhysicalConstants = NATURAL) -> ScalarField:
    """M^2 = m^2 + (hbar^2 Om / c^2) exp(beta^2 V)."""
    m2 = constants.m ** 2 + constants.hbar ** 2 * omega_tilde / constants.c ** 2 * np.exp(beta ** 2 * V.values)
    return ScalarField(V.grid, m2, Role.MASS_SQ, V.mask)


# --------------------------------------------------------------------------
# spin summary

class Spin(enum.Enum):
    ZERO = "0"
    HALF = "1/2"
    ONE = "1"


_EQUATION = {
    Spin.ZERO: "Klein-Gordon equation + corrections",
    Spin.HALF: "Dirac equation + corrections",
    Spin.ONE: "Maxwell equations + corrections",
}


@dataclass(frozen=True)
class SummaryMass:
    spin: Spin
    mass_sq: ScalarField = field(repr=False)
    equation: str
    diagnostics: dict


def summary_mass(spin, fields, beta: float, omega_tilde: float, order: int = 1,
                 constants: PhysicalConstants = NATURAL, epsilon: Optional[float] = None) -> SummaryMass:
    """Dispatch to the spin-0, spin-1/2 or spin-1 kernel mass function.

    ``fields`` is Lambda (a ScalarField), a SpinorField or a VectorField.
    """
    from . import spin as spin_mod

    spin = Spin(str(spin)) if not isinstance(spin, Spin) else spin
    diag: dict = {}
    if spin is Spin.ZERO:
        lam = np.asarray(fields.values, dtype=float)
        peak = np.abs(lam).max()
        if not peak > 0:
            raise DegenerateInputError("Lambda vanishes everywhere")
        mask = lam ** 2 > DENSITY_FLOOR * peak ** 2
        safe = np.where(mask, lam, 1.0)
        series = box_exp_series(lam, fields.grid, order, beta ** 2, constants.c)
        m2 = constants.m ** 2 + constants.hbar ** 2 * omega_tilde / constants.c ** 2 * series / safe
        out = ScalarField(fields.grid, np.where(mask, m2, constants.m ** 2), Role.MASS_SQ, mask)
    elif spin is Spin.HALF:
        out = spin_mod.spinor_mass_sq(fields, beta, omega_tilde, epsilon, order, constants, diagnostics=diag)
    else:
        out = spin_mod.vector_mass_sq(fields, beta, omega_tilde, order, constants, diagnostics=diag)
    diag["order"] = order
    return SummaryMass(spin, out, _EQUATION[spin], diag)
