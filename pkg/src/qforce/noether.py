"""Euler-Lagrange residuals and Noether currents for higher-derivative Lagrangians.

A Lagrangian is described by its value and its analytic partials
P_k^{a1..ak} = dL / d phi_{;a1..ak} (upper indices, fully symmetrised) for
k up to ``max_order``.  The current for a constant translation xi with a
field variation delta_phi is

    J^m = L xi^m + sum_k sum_{j<k} (-1)^j (d_{n1..nj} P_k^{m n1..nj r1..r_{k-1-j}}) G_{;r1..r_{k-1-j}},
    G = delta_phi - phi_{;n} xi^n.

Coordinates are the active axes of the grid: (x^0 = ct, x^2 = y) on a 1+1
lattice, with metric diag(+1, -1); a line grid carries the single spatial
coordinate y with metric (-1).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np

from .errors import GridMismatchError, ParameterError
from .fields import NATURAL, Dimension, Grid, PhysicalConstants, ScalarField, diff_array, quadrature_weights

MAX_ORDER = 4


def reduced_metric(grid: Grid) -> np.ndarray:
    if grid.dimension is Dimension.LATTICE1P1:
        return np.diag([1.0, -1.0])
    if grid.dimension is Dimension.LINE1D:
        return np.diag([-1.0])
    raise GridMismatchError("Lagrangian fields live on a line or a 1+1 lattice")


def partial(values: np.ndarray, grid: Grid, a: int, c: float = 1.0, accuracy: int = 6) -> np.ndarray:
    """d_a along the a-th active coordinate (time derivatives carry 1/c)."""
    if grid.dimension is Dimension.LATTICE1P1:
        d = diff_array(values, grid, 1, a, accuracy=accuracy)
        return d / c if a == 0 else d
    return diff_array(values, grid, 1, 0, accuracy=accuracy)


@dataclass(frozen=True, eq=False)
class Jet:
    """phi and its partial derivatives; ``d[k]`` has shape (D,)*k + grid.shape."""
    grid: Grid
    metric: np.ndarray
    d: tuple

    @property
    def value(self) -> np.ndarray:
        return self.d[0]

    @property
    def dim(self) -> int:
        return self.metric.shape[0]


def make_jet(phi, grid: Grid, order: int, c: float = 1.0, accuracy: int = 6) -> Jet:
    values = np.asarray(phi.values if isinstance(phi, ScalarField) else phi, dtype=float)
    metric = reduced_metric(grid)
    dim = metric.shape[0]
    d = [values]
    for _ in range(order):
        prev = d[-1]
        d.append(np.stack([_apply(prev, lambda v, a=a: partial(v, grid, a, c, accuracy), len(grid.shape))
                           for a in range(dim)]))
    return Jet(grid, metric, tuple(d))


def _apply(tensor: np.ndarray, fn, grid_ndim: int) -> np.ndarray:
    """Apply a per-field function to every component of a leading-index tensor."""
    lead = tensor.shape[:tensor.ndim - grid_ndim]
    if not lead:
        return fn(tensor)
    out = np.empty_like(tensor)
    for idx in itertools.product(*(range(n) for n in lead)):
        out[idx] = fn(tensor[idx])
    return out


def symmetrize(tensor: np.ndarray, rank: int) -> np.ndarray:
    """Average over permutations of the leading ``rank`` indices."""
    if rank < 2:
        return tensor
    perms = list(itertools.permutations(range(rank)))
    rest = tuple(range(rank, tensor.ndim))
    return sum(np.transpose(tensor, p + rest) for p in perms) / len(perms)


def box(jet: Jet) -> np.ndarray:
    return np.einsum("ab,ab...->...", jet.metric, jet.d[2])


# --------------------------------------------------------------------------
# specs

@dataclass(frozen=True)
class LagrangianSpec:
    """A truncated higher-derivative Lagrangian with analytic partials.

    ``density(jets)`` and ``partials(jets)`` receive a mapping from field
    name to Jet; ``partials`` returns {(field, k): P_k} for every k with a
    non-zero partial.  ``terms`` is the human-readable coefficient table.
    """
    name: str
    fields: tuple
    max_order: int
    terms: tuple
    density: Callable = field(repr=False, compare=False)
    partials: Callable = field(repr=False, compare=False)

    def __post_init__(self):
        if not (1 <= self.max_order <= MAX_ORDER):
            raise ParameterError(f"max_order must be in 1..{MAX_ORDER}")


def _g(jet: Jet, rank: int) -> np.ndarray:
    """Inverse metric broadcast to the grid for use in partial tensors."""
    shape = jet.grid.shape
    g = jet.metric
    if rank == 2:
        return np.einsum("ab,...->ab...", g, np.ones(shape))
    if rank == 4:
        gg = np.einsum("ab,cd->abcd", g, g)
        return symmetrize(np.einsum("abcd,...->abcd...", gg, np.ones(shape)), 4)
    raise ValueError(rank)


def _kg_parts(mass_sq: float):
    def density(j):
        p = j["phi"]
        return 0.5 * np.einsum("ab,a...,b...->...", p.metric, p.d[1], p.d[1]) - 0.5 * mass_sq * p.value ** 2

    def partials(j):
        p = j["phi"]
        return {("phi", 0): -mass_sq * p.value,
                ("phi", 1): np.einsum("ab,b...->a...", p.metric, p.d[1])}
    return density, partials


def _combine(name, max_order, terms, parts):
    def density(j):
        return sum(d(j) for d, _ in parts)

    def partials(j):
        out: Dict = {}
        for _, p in parts:
            for key, val in p(j).items():
                out[key] = out[key] + val if key in out else val
        return out
    return LagrangianSpec(name, ("phi",), max_order, tuple(terms), density, partials)


def klein_gordon(mass_sq: float = 1.0) -> LagrangianSpec:
    """L = 1/2 d phi . d phi - 1/2 m^2 phi^2."""
    return _combine("klein-gordon", 1, [(0.5, "phi_a phi^a"), (-0.5 * mass_sq, "phi^2")],
                    [_kg_parts(mass_sq)])


def kg_phi_box_phi(mass_sq: float, coeff: float) -> LagrangianSpec:
    """Klein-Gordon plus coeff * phi box phi."""
    def density(j):
        p = j["phi"]
        return coeff * p.value * box(p)

    def partials(j):
        p = j["phi"]
        return {("phi", 0): coeff * box(p), ("phi", 2): coeff * p.value * _g(p, 2)}
    return _combine("kg+phi-box-phi", 2, [(0.5, "phi_a phi^a"), (-0.5 * mass_sq, "phi^2"),
                                          (coeff, "phi box phi")],
                    [_kg_parts(mass_sq), (density, partials)])


def kg_box_squared(mass_sq: float, coeff: float) -> LagrangianSpec:
    """Klein-Gordon plus coeff * (box phi)^2."""
    def density(j):
        return coeff * box(j["phi"]) ** 2

    def partials(j):
        p = j["phi"]
        return {("phi", 2): 2.0 * coeff * box(p) * _g(p, 2)}
    return _combine("kg+box-squared", 2, [(0.5, "phi_a phi^a"), (-0.5 * mass_sq, "phi^2"),
                                          (coeff, "(box phi)^2")],
                    [_kg_parts(mass_sq), (density, partials)])


def kg_phi_box2_phi(mass_sq: float, coeff: float) -> LagrangianSpec:
    """Klein-Gordon plus coeff * phi box^2 phi (fourth order)."""
    def box2(p):
        return np.einsum("ab,cd,abcd...->...", p.metric, p.metric, p.d[4])

    def density(j):
        p = j["phi"]
        return coeff * p.value * box2(p)

    def partials(j):
        p = j["phi"]
        return {("phi", 0): coeff * box2(p), ("phi", 4): coeff * p.value * _g(p, 4)}
    return _combine("kg+phi-box2-phi", 4, [(0.5, "phi_a phi^a"), (-0.5 * mass_sq, "phi^2"),
                                           (coeff, "phi box^2 phi")],
                    [_kg_parts(mass_sq), (density, partials)])


def total_derivative_second(coeff: float) -> tuple:
    """coeff * d_a(phi phi^a) = coeff (phi_a phi^a + phi box phi); returns (density, partials)."""
    def density(j):
        p = j["phi"]
        return coeff * (np.einsum("ab,a...,b...->...", p.metric, p.d[1], p.d[1]) + p.value * box(p))

    def partials(j):
        p = j["phi"]
        return {("phi", 0): coeff * box(p),
                ("phi", 1): 2.0 * coeff * np.einsum("ab,b...->a...", p.metric, p.d[1]),
                ("phi", 2): coeff * p.value * _g(p, 2)}
    return density, partials


def total_derivative_third(coeff: float) -> tuple:
    """coeff * d_a(phi_b phi^{ab}) = coeff (phi_ab phi^ab + phi^b phi_{ab}^{ a}); (density, partials)."""
    def density(j):
        p = j["phi"]
        g = p.metric
        first = np.einsum("ac,bd,ab...,cd...->...", g, g, p.d[2], p.d[2])
        second = np.einsum("bd,ac,b...,dca...->...", g, g, p.d[1], p.d[3])
        return coeff * (first + second)

    def partials(j):
        p = j["phi"]
        g = p.metric
        up1 = np.einsum("ab,b...->a...", g, p.d[1])
        p1 = np.einsum("bd,ac,dca...->b...", g, g, p.d[3])
        p2 = 2.0 * np.einsum("ac,bd,cd...->ab...", g, g, p.d[2])
        p3 = symmetrize(np.einsum("b...,ac->bac...", up1, g), 3)
        return {("phi", 1): coeff * p1, ("phi", 2): coeff * p2, ("phi", 3): coeff * p3}
    return density, partials


def with_total_derivative(base: LagrangianSpec, order: int, coeff: float) -> LagrangianSpec:
    """Add a second- or third-order total-derivative term to a single-field spec."""
    parts = {2: total_derivative_second, 3: total_derivative_third}
    if order not in parts:
        raise ParameterError("total-derivative terms of order 2 or 3 are available")
    extra = parts[order](coeff)
    base_parts = (base.density, base.partials)
    label = "d_a(phi phi^a)" if order == 2 else "d_a(phi_b phi^ab)"
    return _combine(f"{base.name}+total-derivative-{order}", max(base.max_order, order),
                    list(base.terms) + [(coeff, label)], [base_parts, extra])


def dpi_spin0(mass: float, beta: float, omega_tilde: float,
              constants: PhysicalConstants = NATURAL) -> LagrangianSpec:
    """Spin-0 kernel Lagrangian truncated at first order in box / 4 beta^2.

    L = 1/2 rho (dS.dS - M^2 c^2) - 1/2 Om Lambda (1 - box/4b^2) Lambda
        - 1/2 (c^2/hbar^2)(m^2 - M^2) Lambda^2.
    rho and M enter algebraically; only S and Lambda carry derivative partials,
    and odd-order Lambda partials vanish identically.
    """
    c2, h2 = constants.c ** 2, constants.hbar ** 2
    k = omega_tilde / (8.0 * beta ** 2)

    def density(j):
        s, lam, rho, m = j["S"], j["Lambda"], j["rho"].value, j["M"].value
        dsds = np.einsum("ab,a...,b...->...", s.metric, s.d[1], s.d[1])
        return (0.5 * rho * (dsds - m ** 2 * c2) - 0.5 * omega_tilde * lam.value ** 2
                + k * lam.value * box(lam) - 0.5 * (c2 / h2) * (mass ** 2 - m ** 2) * lam.value ** 2)

    def partials(j):
        s, lam, rho, m = j["S"], j["Lambda"], j["rho"].value, j["M"].value
        return {
            ("S", 1): rho * np.einsum("ab,b...->a...", s.metric, s.d[1]),
            ("Lambda", 0): -omega_tilde * lam.value + k * box(lam) - (c2 / h2) * (mass ** 2 - m ** 2) * lam.value,
            ("Lambda", 1): np.zeros_like(lam.d[1]),
            ("Lambda", 2): k * lam.value * _g(lam, 2),
            ("rho", 0): 0.5 * (np.einsum("ab,a...,b...->...", s.metric, s.d[1], s.d[1]) - m ** 2 * c2),
            ("M", 0): -rho * m * c2 + (c2 / h2) * m * lam.value ** 2,
        }
    terms = ((0.5, "rho dS.dS"), (-0.5 * c2, "rho M^2"), (-0.5 * omega_tilde, "Lambda^2"),
             (k, "Lambda box Lambda"), (-0.5 * c2 / h2, "(m^2 - M^2) Lambda^2"))
    return LagrangianSpec("dpi-spin0-order1", ("S", "Lambda", "rho", "M"), 2, terms, density, partials)


# --------------------------------------------------------------------------
# evaluation

def _jets(spec: LagrangianSpec, fields: Mapping, grid: Grid, c: float, accuracy: int) -> dict:
    if isinstance(fields, (ScalarField, np.ndarray)):
        fields = {spec.fields[0]: fields}
    missing = set(spec.fields) - set(fields)
    if missing:
        raise ParameterError(f"missing fields {sorted(missing)}")
    return {name: fields[name] if isinstance(fields[name], Jet)
            else make_jet(fields[name], grid, spec.max_order, c, accuracy) for name in spec.fields}


def _grid_of(fields) -> Grid:
    if isinstance(fields, ScalarField):
        return fields.grid
    for v in fields.values():
        if isinstance(v, (ScalarField, Jet)):
            return v.grid
    raise ParameterError("pass at least one ScalarField so the grid is known")


def check_partials(spec: LagrangianSpec, fields, rng=None, samples: int = 5, step: float = 1e-5,
                   c: float = 1.0) -> float:
    """Largest mismatch between analytic partials and central differences of L.

    A random symmetric jet component is nudged at random points; the
    change of L is compared with the partial summed over the index orbit.
    """
    rng = np.random.default_rng(rng)
    grid = _grid_of(fields)
    jets = _jets(spec, fields, grid, c, 6)
    parts = spec.partials(jets)
    worst = 0.0
    for (name, k), p in parts.items():
        jet = jets[name]
        for _ in range(samples):
            base_idx = tuple(int(v) for v in rng.integers(0, jet.dim, size=k))
            point = tuple(int(rng.integers(0, n)) for n in grid.shape)
            orbit = set(itertools.permutations(base_idx)) if k else {()}
            vals = []
            for sgn in (+1, -1):
                d = [np.array(x) for x in jet.d]
                for idx in orbit:
                    d[k][idx + point] += sgn * step
                trial = dict(jets)
                trial[name] = Jet(jet.grid, jet.metric, tuple(d))
                vals.append(spec.density(trial)[point])
            numeric = (vals[0] - vals[1]) / (2.0 * step)
            analytic = sum(p[idx + point] for idx in orbit)
            worst = max(worst, abs(numeric - analytic) / max(1.0, abs(analytic)))
    return worst


def euler_lagrange_residual(spec: LagrangianSpec, fields, c: float = 1.0, accuracy: int = 6) -> dict:
    """sum_k (-1)^k d_{a1..ak} P_k^{a1..ak} for every field of the spec."""
    grid = _grid_of(fields)
    jets = _jets(spec, fields, grid, c, accuracy)
    parts = spec.partials(jets)
    out = {}
    for name in spec.fields:
        total = np.zeros(grid.shape)
        for k in range(spec.max_order + 1):
            p = parts.get((name, k))
            if p is None:
                continue
            t = p
            for _ in range(k):
                t = _divergence_first(t, grid, c, accuracy)
            total = total + (-1) ** k * t
        out[name] = ScalarField(grid, total)
    return out


def _divergence_first(tensor: np.ndarray, grid: Grid, c: float, accuracy: int) -> np.ndarray:
    """Contract d_a with the first index of an upper-index tensor."""
    gnd = len(grid.shape)
    return sum(_apply(tensor[a], lambda v, a=a: partial(v, grid, a, c, accuracy), gnd)
               for a in range(tensor.shape[0]))


def _divergence_second(tensor: np.ndarray, grid: Grid, c: float, accuracy: int) -> np.ndarray:
    """Contract d_n with the second index: T^{m n ...} -> (d_n T)^{m ...}."""
    return np.stack([_divergence_first(tensor[m], grid, c, accuracy) for m in range(tensor.shape[0])])


@dataclass(frozen=True, eq=False)
class NoetherCurrent:
    J: np.ndarray
    divergence: np.ndarray
    xi: np.ndarray
    delta: dict
    max_order: int

    def max_divergence(self, mask: Optional[np.ndarray] = None) -> float:
        d = self.divergence if mask is None else self.divergence[mask]
        return float(np.max(np.abs(d)))


def _xi_reduced(xi, grid: Grid) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    dim = reduced_metric(grid).shape[0]
    if xi.size == 4:
        xi = xi[[0, 2]] if dim == 2 else xi[[2]]
    if xi.size != dim:
        raise ParameterError(f"xi needs {dim} reduced or 4 full components")
    return xi


def noether_current(spec: LagrangianSpec, fields, xi, delta: Optional[Mapping] = None,
                    c: float = 1.0, accuracy: int = 6, _signs=None) -> NoetherCurrent:
    """Conserved current for a constant translation xi plus field variations delta.

    ``xi`` may be given as a full 4-vector (components 0 and 2 are used on a
    lattice, component 2 on a line) or in reduced coordinates.
    """
    grid = _grid_of(fields)
    jets = _jets(spec, fields, grid, c, accuracy)
    parts = spec.partials(jets)
    xi = _xi_reduced(xi, grid)
    delta = dict(delta or {})
    dim = xi.size
    J = np.einsum("a,...->a...", xi, spec.density(jets))
    sign = _signs or (lambda k, j: (-1) ** j)
    for name in spec.fields:
        jet = jets[name]
        g = np.asarray(delta.get(name, 0.0), dtype=float) - np.einsum("a,a...->...", xi, jet.d[1])
        g = np.broadcast_to(g, grid.shape)
        g_jet = make_jet(g, grid, max(spec.max_order - 1, 0), c, accuracy)
        for k in range(1, spec.max_order + 1):
            p = parts.get((name, k))
            if p is None:
                continue
            t = p
            for j in range(k):
                # t = d_{n1..nj} P^{m n1..nj r...}; contract remaining r's with G derivatives
                rest = k - 1 - j
                dg = g_jet.d[rest]
                letters = "bcdefg"[:rest]
                contracted = np.einsum(f"a{letters}...,{letters}...->a...", t, dg)
                J = J + sign(k, j) * contracted
                if j < k - 1:
                    t = _divergence_second(t, grid, c, accuracy)
    del dim
    div = _divergence_first(J, grid, c, accuracy)
    return NoetherCurrent(J, div, xi, delta, spec.max_order)


def textbook_current(spec: LagrangianSpec, fields, xi, delta: Optional[Mapping] = None,
                     c: float = 1.0, accuracy: int = 6) -> np.ndarray:
    """Canonical first-order current sum_f P^m delta_f - T^m_n xi^n, T^m_n = sum_f P^m phi_n - delta^m_n L."""
    if spec.max_order != 1:
        raise ParameterError("the textbook current applies to first-order Lagrangians")
    grid = _grid_of(fields)
    jets = _jets(spec, fields, grid, c, accuracy)
    parts = spec.partials(jets)
    xi = _xi_reduced(xi, grid)
    delta = dict(delta or {})
    lag = spec.density(jets)
    t = -np.einsum("mn,...->mn...", np.eye(xi.size), lag)
    out = np.zeros((xi.size,) + grid.shape)
    for name in spec.fields:
        p = parts.get((name, 1))
        if p is None:
            continue
        t = t + np.einsum("m...,n...->mn...", p, jets[name].d[1])
        out = out + p * np.asarray(delta.get(name, 0.0))
    return out - np.einsum("mn...,n->m...", t, xi)


# --------------------------------------------------------------------------
# transformation identities

def _inverse_jacobian_derivative(values, grid, xi_field, c, accuracy):
    """First derivatives with respect to x' = x + xi(x): J^{-T} grad."""
    dim = xi_field.shape[0]
    grad = np.stack([partial(values, grid, a, c, accuracy) for a in range(dim)])
    jac = np.empty((dim, dim) + grid.shape)
    for a in range(dim):
        for b in range(dim):
            jac[a, b] = (a == b) + partial(xi_field[a], grid, b, c, accuracy)
    # dx'^a/dx^b = jac[a, b]; d/dx'^a = sum_b (jac^{-1})[b, a] d/dx^b
    jac_t = np.moveaxis(jac, (0, 1), (-2, -1))
    inv = np.moveaxis(np.linalg.inv(jac_t), (-2, -1), (0, 1))
    return np.einsum("ba...,b...->a...", inv, grad)


def direct_variation(phi, grid: Grid, xi_field: np.ndarray, delta_phi, order: int = 1,
                     c: float = 1.0, accuracy: int = 6) -> np.ndarray:
    """delta phi_{;a} (order 1) or delta phi_{;ab} (order 2) from the exact transformation.

    phi'(x') = phi(x) + delta_phi(x) with x' = x + xi(x); derivatives of phi'
    with respect to x' at the image point minus those of phi at x.
    """
    phi = np.asarray(phi, dtype=float)
    new = phi + np.asarray(delta_phi, dtype=float)
    first_new = _inverse_jacobian_derivative(new, grid, xi_field, c, accuracy)
    first_old = np.stack([partial(phi, grid, a, c, accuracy) for a in range(xi_field.shape[0])])
    if order == 1:
        return first_new - first_old
    if order != 2:
        raise ParameterError("order must be 1 or 2")
    dim = xi_field.shape[0]
    second_new = np.stack([_inverse_jacobian_derivative(first_new[a], grid, xi_field, c, accuracy)
                           for a in range(dim)])
    second_old = np.stack([np.stack([partial(first_old[a], grid, b, c, accuracy) for b in range(dim)])
                           for a in range(dim)])
    return second_new - second_old


def first_order_variation(phi, grid: Grid, xi_field: np.ndarray, delta_phi, order: int = 1,
                          c: float = 1.0, accuracy: int = 6) -> np.ndarray:
    """Linearised transformation rules.

    order 1: (delta phi)_{;m} - phi_{;a} xi^a_{;m}
    order 2: (delta phi)_{;mn} - phi_{;a} xi^a_{;mn} - phi_{;ma} xi^a_{;n} - phi_{;na} xi^a_{;m}
    """
    dim = xi_field.shape[0]
    jet = make_jet(phi, grid, 2, c, accuracy)
    dj = make_jet(delta_phi, grid, 2, c, accuracy)
    dxi = np.stack([make_jet(xi_field[a], grid, 2, c, accuracy).d[1] for a in range(dim)])  # [a, m]
    ddxi = np.stack([make_jet(xi_field[a], grid, 2, c, accuracy).d[2] for a in range(dim)])  # [a, m, n]
    if order == 1:
        return dj.d[1] - np.einsum("a...,am...->m...", jet.d[1], dxi)
    if order != 2:
        raise ParameterError("order must be 1 or 2")
    return (dj.d[2] - np.einsum("a...,amn...->mn...", jet.d[1], ddxi)
            - np.einsum("ma...,an...->mn...", jet.d[2], dxi)
            - np.einsum("na...,am...->mn...", jet.d[2], dxi))


# --------------------------------------------------------------------------
# spin-0 stress tensor

def _state_fields(state, accuracy: int = 6) -> dict:
    """Fields of the spin-0 Lagrangian; S enters through its gradient only.

    The phase winds around the periodic axis, so its first derivatives are
    taken from psi rather than from S itself.
    """
    from .rel import phase_covector
    mass = np.sqrt(np.clip(state.mass_sq.values, 0.0, None))
    ds = phase_covector(state, accuracy)
    s_jet = Jet(state.grid, reduced_metric(state.grid), (state.S.values, ds))
    return {"S": s_jet, "Lambda": state.Lambda, "rho": state.rho,
            "M": ScalarField(state.grid, mass)}


def stress_tensor_spin0(state, beta: float, omega_tilde: float, accuracy: int = 6) -> np.ndarray:
    """T^{m n} of the order-1 spin-0 kernel Lagrangian via the generalised current.

    Row n is the current for xi = e_n, raised with the metric.
    """
    k = state.constants
    spec = dpi_spin0(k.m, beta, omega_tilde, k)
    fields = _state_fields(state, accuracy)
    metric = reduced_metric(state.grid)
    rows = []
    for n in range(metric.shape[0]):
        xi = np.zeros(metric.shape[0])
        xi[n] = 1.0
        rows.append(noether_current(spec, fields, xi, c=k.c, accuracy=accuracy).J)
    mixed = np.stack(rows, axis=1)  # T^m_n
    return np.einsum("mn...,nk->mk...", mixed, metric)


def stress_tensor_closed_form(state, beta: float, omega_tilde: float, accuracy: int = 6) -> np.ndarray:
    """L g^{mn} - rho d^m S d^n S - K Lambda Lambda^{;mn} + K Lambda^{;m} Lambda^{;n}, K = Om / 8 beta^2."""
    k = state.constants
    spec = dpi_spin0(k.m, beta, omega_tilde, k)
    fields = _state_fields(state, accuracy)
    jets = _jets(spec, fields, state.grid, k.c, accuracy)
    g = jets["S"].metric
    lag = spec.density(jets)
    ds = np.einsum("ab,b...->a...", g, jets["S"].d[1])
    dl = np.einsum("ab,b...->a...", g, jets["Lambda"].d[1])
    ddl = np.einsum("ac,bd,cd...->ab...", g, g, jets["Lambda"].d[2])
    kk = omega_tilde / (8.0 * beta ** 2)
    lam = jets["Lambda"].value
    return (np.einsum("mn,...->mn...", g, lag) - state.rho.values * np.einsum("m...,n...->mn...", ds, ds)
            - kk * lam * ddl + kk * np.einsum("m...,n...->mn...", dl, dl))


def odd_partials_vanish(spec: LagrangianSpec, fields, field_name: str = "Lambda") -> bool:
    """True when every odd-order partial of ``field_name`` is absent or identically zero."""
    grid = _grid_of(fields)
    parts = spec.partials(_jets(spec, fields, grid, 1.0, 6))
    return all(not np.any(parts[(f, k)]) for (f, k) in parts if f == field_name and k % 2 == 1)


def energy_drift(T: np.ndarray, grid: Grid, edge: int = 4) -> float:
    """max |d/dt int T^{00} dy| over interior time slices."""
    w = quadrature_weights(grid, 1)
    totals = np.sum(T[0, 0] * w, axis=1)
    rate = np.gradient(totals, grid.spacing[0])
    return float(np.max(np.abs(rate[edge:-edge] if edge else rate)))


def conservation_report(current: NoetherCurrent, generator: str, drift: Optional[float] = None,
                        mask: Optional[np.ndarray] = None) -> dict:
    return {
        "generator": generator,
        "xi": [float(v) for v in current.xi],
        "max_div_J": current.max_divergence(mask),
        "energy_drift_per_time": drift,
        "truncation_order": current.max_order,
    }
