"""Grids, sampled fields, derivatives and quadrature.

Everything else in the package computes on these objects.  Grids are
immutable; fields are value snapshots whose sample arrays are marked
read-only, so every operation here is a pure function and may be called
from many threads at once.

Coordinates
-----------
* periodic axes:     x_i = center + (i - N/2) h
* non-periodic axes: x_i = center + (i + 1/2 - N/2) h   (cell centred, symmetric)
* radial axis:       r_i = (i + 1/2) h                   (r = 0 excluded)

with h = extent / N on every axis.

The 1+1 lattice has axes (t, y).  Its metric is diag(+1, -1) on
(x^0 = c t, y), the 1+1 reduction of signature (+,-,-,-).
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .errors import GridMismatchError, ParameterError

MAX_DERIVATIVE_ORDER = 8


class Dimension(str, enum.Enum):
    LINE1D = "line1d"
    RADIAL3D = "radial3d"
    LATTICE1P1 = "lattice1p1"


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"


class Role(str, enum.Enum):
    DENSITY = "density"
    PHASE = "phase"
    POTENTIAL = "potential"
    AUXILIARY = "auxiliary"
    MASS_SQ = "mass_sq"
    GENERIC = "generic"


class Species(str, enum.Enum):
    """Particle (negative kernel constant) or antiparticle (positive)."""

    PARTICLE = "particle"
    ANTIPARTICLE = "antiparticle"

    @property
    def sign(self) -> int:
        return 1 if self is Species.PARTICLE else -1

    def flipped(self) -> "Species":
        return Species.ANTIPARTICLE if self is Species.PARTICLE else Species.PARTICLE


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    m: float = 1.0
    c: float = 1.0
    e: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "m", "c", "e", "omega"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"constant {name} must be strictly positive, got {value!r}")


NATURAL = PhysicalConstants()


def max_workers() -> int:
    """Thread cap for data-parallel loops (``QFORCE_THREADS``, default: CPU count)."""
    env = os.environ.get("QFORCE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


BoundarySpec = Union[Boundary, str, Sequence[Union[Boundary, str]]]


@dataclass(frozen=True)
class Grid:
    """Uniform sample grid.

    Use the :meth:`line`, :meth:`radial` and :meth:`lattice` constructors
    rather than the raw initializer.
    """

    dimension: Dimension
    extent: tuple
    points: tuple
    boundary: tuple
    center: tuple

    def __post_init__(self):
        if len(self.extent) != len(self.points) or len(self.extent) != len(self.boundary):
            raise ParameterError("extent, points and boundary must have one entry per axis")
        expected_axes = 2 if self.dimension is Dimension.LATTICE1P1 else 1
        if len(self.extent) != expected_axes:
            raise ParameterError(f"{self.dimension.value} grids have {expected_axes} axes")
        for ext, n in zip(self.extent, self.points):
            if not (ext > 0 and np.isfinite(ext)):
                raise ParameterError(f"extent must be positive, got {ext!r}")
            if int(n) != n or n < 8:
                raise ParameterError(f"points per axis must be an integer >= 8, got {n!r}")

    @classmethod
    def line(cls, extent: float, points: int, boundary: BoundarySpec = Boundary.PERIODIC,
             center: float = 0.0) -> "Grid":
        return cls(Dimension.LINE1D, (float(extent),), (int(points),),
                   (Boundary(boundary),), (float(center),))

    @classmethod
    def radial(cls, extent: float, points: int) -> "Grid":
        return cls(Dimension.RADIAL3D, (float(extent),), (int(points),),
                   (Boundary.DIRICHLET,), (0.0,))

    @classmethod
    def lattice(cls, t_extent: float, nt: int, y_extent: float, ny: int,
                time_boundary: BoundarySpec = Boundary.DIRICHLET,
                space_boundary: BoundarySpec = Boundary.PERIODIC,
                t_center: float = 0.0, y_center: float = 0.0) -> "Grid":
        return cls(Dimension.LATTICE1P1, (float(t_extent), float(y_extent)), (int(nt), int(ny)),
                   (Boundary(time_boundary), Boundary(space_boundary)),
                   (float(t_center), float(y_center)))

    @property
    def ndim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return tuple(int(n) for n in self.points)

    @property
    def spacing(self) -> tuple:
        return tuple(ext / n for ext, n in zip(self.extent, self.points))

    def is_periodic(self, axis: int = 0) -> bool:
        return self.boundary[axis] is Boundary.PERIODIC

    def coords(self, axis: int = 0) -> np.ndarray:
        n = self.points[axis]
        h = self.spacing[axis]
        idx = np.arange(n, dtype=float)
        if self.dimension is Dimension.RADIAL3D:
            return (idx + 0.5) * h
        if self.is_periodic(axis):
            return self.center[axis] + (idx - n / 2) * h
        return self.center[axis] + (idx + 0.5 - n / 2) * h

    def mesh(self) -> tuple:
        """Coordinate arrays broadcast to the full grid shape (``ij`` indexing)."""
        return tuple(np.meshgrid(*[self.coords(a) for a in range(self.ndim)], indexing="ij"))

    @property
    def axis_names(self) -> tuple:
        return {Dimension.LINE1D: ("x",), Dimension.RADIAL3D: ("r",),
                Dimension.LATTICE1P1: ("t", "y")}[self.dimension]

    def metadata(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "extent": list(self.extent),
            "points": list(self.shape),
            "boundary": [b.value for b in self.boundary],
            "center": list(self.center),
        }

    @classmethod
    def from_metadata(cls, meta: dict) -> "Grid":
        return cls(Dimension(meta["dimension"]), tuple(float(e) for e in meta["extent"]),
                   tuple(int(n) for n in meta["points"]),
                   tuple(Boundary(b) for b in meta["boundary"]),
                   tuple(float(c) for c in meta["center"]))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples on a grid, tagged with a physical role.

    ``mask`` (optional) marks the samples that are trustworthy; derived
    quantities propagate it.  ``parity`` selects even (+1) or odd (-1)
    reflection at r = 0 for radial derivatives; ``None`` means one-sided
    stencils at the origin.
    """

    grid: Grid
    values: np.ndarray
    role: Role = Role.GENERIC
    mask: Optional[np.ndarray] = None
    parity: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        if self.role is Role.DENSITY and values.size and values.min() < 0:
            raise ParameterError("density samples must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool)
            if mask.shape != values.shape:
                raise GridMismatchError("mask shape does not match values")
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)
        if self.parity not in (None, 1, -1):
            raise ParameterError("parity must be +1, -1 or None")

    @classmethod
    def from_function(cls, grid: Grid, fn, role: Role = Role.GENERIC, **kw) -> "ScalarField":
        return cls(grid, fn(*grid.mesh()), role, **kw)

    @property
    def valid(self) -> np.ndarray:
        return np.ones(self.grid.shape, dtype=bool) if self.mask is None else self.mask

    def with_values(self, values, role: Optional[Role] = None, mask=None) -> "ScalarField":
        return replace(self, values=values, role=self.role if role is None else role,
                       mask=combine_masks(self.mask, mask))

    def __neg__(self):
        return self.with_values(-self.values, role=Role.GENERIC)


def combine_masks(*masks) -> Optional[np.ndarray]:
    out = None
    for m in masks:
        if m is None:
            continue
        out = np.array(m, dtype=bool) if out is None else (out & m)
    return out


def _require_same_grid(*fields: ScalarField) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


# --------------------------------------------------------------------------
# finite-difference weights

@lru_cache(maxsize=512)
def fd_weights(offsets: tuple, order: int) -> np.ndarray:
    """Fornberg weights for the ``order``-th derivative at 0 on integer ``offsets`` (unit spacing)."""
    x = np.asarray(offsets, dtype=float)
    n = len(x)
    if order >= n:
        raise ParameterError("stencil too small for requested derivative order")
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = x[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    w = c[:, order].copy()
    w.setflags(write=False)
    return w


def _central_half_width(order: int, accuracy: int) -> int:
    return (2 * ((order + 1) // 2) - 1 + accuracy) // 2


def _fd_axis0(f: np.ndarray, order: int, h: float, accuracy: int, periodic: bool) -> np.ndarray:
    n = f.shape[0]
    half = _central_half_width(order, accuracy)
    offsets = tuple(range(-half, half + 1))
    w = fd_weights(offsets, order)
    out = np.zeros_like(f)
    if periodic:
        for o, wk in zip(offsets, w):
            if wk != 0.0:
                out += wk * np.roll(f, -o, axis=0)
        return out / h ** order
    if n < 2 * half + 1:
        raise ParameterError("axis too short for the finite-difference stencil")
    for o, wk in zip(offsets, w):
        if wk != 0.0:
            out[half:n - half] += wk * f[half + o:n - half + o]
    width = max(2 * half + 1, order + accuracy)
    for i in list(range(half)) + list(range(n - half, n)):
        start = min(max(i - width // 2, 0), n - width)
        offs = tuple(range(start - i, start - i + width))
        wb = fd_weights(offs, order)
        out[i] = np.tensordot(wb, f[start:start + width], axes=(0, 0))
    return out / h ** order


def _spectral_axis0(f: np.ndarray, order: int, h: float) -> np.ndarray:
    n = f.shape[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    mult = mult.reshape((n,) + (1,) * (f.ndim - 1))
    spec = np.fft.fft(f, axis=0) * mult
    out = np.fft.ifft(spec, axis=0)
    return out.real if np.isrealobj(f) else out


def diff_array(values: np.ndarray, grid: Grid, order: int = 1, axis: int = 0,
               method: Optional[str] = None, accuracy: int = 4,
               parity: Optional[int] = None) -> np.ndarray:
    """Derivative of raw samples along one grid axis.

    ``values`` may carry leading component axes (e.g. spinor index); the
    trailing ``grid.ndim`` axes are the grid.  ``method`` is ``"spectral"``,
    ``"fd"`` or ``None`` (spectral on periodic axes, finite differences
    otherwise).
    """
    if not (1 <= order <= MAX_DERIVATIVE_ORDER):
        raise ParameterError(f"derivative order must be in 1..{MAX_DERIVATIVE_ORDER}")
    if not 0 <= axis < grid.ndim:
        raise GridMismatchError(f"axis {axis} out of range for {grid.dimension.value}")
    values = np.asarray(values)
    if values.shape[values.ndim - grid.ndim:] != grid.shape:
        raise GridMismatchError("sample array does not match grid")
    periodic = grid.is_periodic(axis)
    if method is None:
        method = "spectral" if periodic else "fd"
    if method == "spectral" and not periodic:
        raise GridMismatchError("spectral derivative needs a periodic axis")
    real_axis = values.ndim - grid.ndim + axis
    f = np.moveaxis(values, real_axis, 0)
    if not np.iscomplexobj(f):
        f = f.astype(float)
    h = grid.spacing[axis]
    if method == "spectral":
        out = _spectral_axis0(f, order, h)
    elif method == "fd":
        if grid.dimension is Dimension.RADIAL3D and parity is not None:
            half = _central_half_width(order, accuracy)
            ghosts = parity * f[:half][::-1]
            padded = np.concatenate([ghosts, f], axis=0)
            out = _fd_axis0(padded, order, h, accuracy, False)[half:]
        else:
            out = _fd_axis0(f, order, h, accuracy, periodic)
    else:
        raise ParameterError(f"unknown derivative method {method!r}")
    return np.moveaxis(out, 0, real_axis)


def derivative(field: ScalarField, order: int = 1, axis: int = 0,
               method: Optional[str] = None, accuracy: int = 4) -> ScalarField:
    values = diff_array(field.values, field.grid, order, axis, method, accuracy, field.parity)
    parity = None if field.parity is None else field.parity * (-1) ** order
    return ScalarField(field.grid, values, Role.GENERIC, field.mask, parity)


def laplacian_array(values: np.ndarray, grid: Grid, c: float = 1.0,
                    method: Optional[str] = None, accuracy: int = 4,
                    parity: Optional[int] = None) -> np.ndarray:
    """Laplacian (line, radial) or d'Alembertian (lattice) of raw samples."""
    if grid.dimension is Dimension.LINE1D:
        return diff_array(values, grid, 2, 0, method, accuracy)
    if grid.dimension is Dimension.RADIAL3D:
        r = grid.coords(0)
        d1 = diff_array(values, grid, 1, 0, method, accuracy, parity)
        d2 = diff_array(values, grid, 2, 0, method, accuracy, parity)
        return d2 + 2.0 * d1 / r
    d_tt = diff_array(values, grid, 2, 0, method, accuracy)
    d_yy = diff_array(values, grid, 2, 1, method, accuracy)
    return d_tt / c ** 2 - d_yy


def laplacian(field: ScalarField, constants: PhysicalConstants = NATURAL,
              method: Optional[str] = None, accuracy: int = 4) -> ScalarField:
    """Laplacian on line/radial grids, box = c^-2 d_t^2 - d_y^2 on the 1+1 lattice."""
    values = laplacian_array(field.values, field.grid, constants.c, method, accuracy, field.parity)
    return ScalarField(field.grid, values, Role.GENERIC, field.mask, field.parity)


def quadrature_weights(grid: Grid, axis: Optional[int] = None) -> np.ndarray:
    """Weights w with integral = sum(w * f); radial grids include 4 pi r^2."""
    if grid.dimension is Dimension.RADIAL3D:
        r = grid.coords(0)
        return 4.0 * np.pi * r ** 2 * grid.spacing[0]
    if axis is not None:
        return np.full(grid.points[axis], grid.spacing[axis])
    return np.full(grid.shape, float(np.prod(grid.spacing)))


def integrate(field: ScalarField, axis: Optional[int] = None):
    """Midpoint / periodic-rectangle quadrature.

    On the 1+1 lattice ``axis=1`` integrates over y for every time slice
    and returns an array; ``axis=None`` integrates over the whole lattice.
    """
    grid = field.grid
    if axis is None or grid.ndim == 1:
        return float(np.sum(quadrature_weights(grid) * field.values))
    return np.sum(field.values, axis=axis) * grid.spacing[axis]


def zeros(grid: Grid, role: Role = Role.GENERIC) -> ScalarField:
    return ScalarField(grid, np.zeros(grid.shape), role)


def check_finite(name: str, *arrays) -> None:
    from .errors import NumericError
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")
