"""Grids, discrete fields, interpolation, quadrature weights, serialization.

The half-space is truncated to a box: uniform tangential axes on
``[-half_width, half_width]`` in each of the ``n-1`` tangential directions,
and a geometrically graded normal axis ``0 = xn_0 < ... < xn_{K-1} = depth``
that concentrates nodes at the boundary where the solution varies fastest.
Time nodes are log-spaced on ``[t_min, t_max]``; the window is part of the
experiment definition and all suprema over time are over these nodes.

A ``Field`` stores values indexed ``(time, tangential..., normal)``; a
``BoundaryField`` stores a single time slice on the boundary plane.  Both may
carry a declared far-field profile ``coef * |x'|^(-power)`` describing the
input outside the box; operators use it for analytic tail corrections and
propagate it through power nonlinearities.

Binary layout (little-endian): an int64 header with magic, version, and all
extents, float64 geometry parameters, then the values row-major float64.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

__all__ = [
    "HalfSpaceGrid",
    "TimeGrid",
    "FarField",
    "Field",
    "BoundaryField",
    "trace",
    "sample",
    "sample_boundary",
    "quadrature_weights",
    "boundary_weights",
    "write_field",
    "read_field",
    "write_boundary",
    "read_boundary",
    "write_slice_csv",
]

_FIELD_MAGIC = 0x44594E46  # "DYNF"
_BOUNDARY_MAGIC = 0x44594E42  # "DYNB"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class HalfSpaceGrid:
    """Truncated half-space box with graded normal axis."""

    n: int = 3
    half_width: float = 6.0
    m_tan: int = 24
    depth: float = 5.0
    m_nor: int = 11
    grading: float = 1.35

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if self.m_tan < 2 or self.m_nor < 2:
            raise ValueError("need at least 2 nodes per axis")
        if not (self.half_width > 0 and self.depth > 0 and self.grading >= 1.0):
            raise ValueError("bad grid extents")

    @property
    def tan_dim(self) -> int:
        return self.n - 1

    @cached_property
    def tan_axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.m_tan)

    @property
    def tan_spacing(self) -> float:
        return 2.0 * self.half_width / (self.m_tan - 1)

    @property
    def cell_area(self) -> float:
        """Tangential cell measure (uniform)."""
        return self.tan_spacing ** self.tan_dim

    @cached_property
    def xn_nodes(self) -> np.ndarray:
        k = self.m_nor - 1
        if self.grading == 1.0:
            steps = np.full(k, self.depth / k)
        else:
            h0 = self.depth * (self.grading - 1.0) / (self.grading**k - 1.0)
            steps = h0 * self.grading ** np.arange(k)
        nodes = np.concatenate([[0.0], np.cumsum(steps)])
        nodes[-1] = self.depth  # exact endpoint, no rounding creep
        return nodes

    @cached_property
    def xn_weights(self) -> np.ndarray:
        x = self.xn_nodes
        w = np.empty_like(x)
        w[0] = 0.5 * (x[1] - x[0])
        w[-1] = 0.5 * (x[-1] - x[-2])
        w[1:-1] = 0.5 * (x[2:] - x[:-2])
        return w

    @property
    def tan_shape(self) -> tuple:
        return (self.m_tan,) * self.tan_dim

    @property
    def shape(self) -> tuple:
        return self.tan_shape + (self.m_nor,)

    @property
    def n_tan(self) -> int:
        return self.m_tan**self.tan_dim

    @cached_property
    def tan_points(self) -> np.ndarray:
        """Flat (n_tan, tan_dim) tangential coordinates, C order."""
        axes = np.meshgrid(*[self.tan_axis] * self.tan_dim, indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    @cached_property
    def points(self) -> np.ndarray:
        """Flat (n_tan * m_nor, n) coordinates matching value layout."""
        tp = np.repeat(self.tan_points, self.m_nor, axis=0)
        xn = np.tile(self.xn_nodes, self.n_tan)[:, None]
        return np.concatenate([tp, xn], axis=1)

    def scaled(self, lam: float) -> "HalfSpaceGrid":
        """The grid dilated by lambda (same node counts)."""
        return replace(
            self, half_width=lam * self.half_width, depth=lam * self.depth
        )


@dataclass(frozen=True)
class TimeGrid:
    t_min: float = 1e-2
    t_max: float = 1e2
    m_t: int = 13

    def __post_init__(self) -> None:
        if not (0 < self.t_min < self.t_max) or self.m_t < 2:
            raise ValueError("bad time grid")

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.geomspace(self.t_min, self.t_max, self.m_t)

    @cached_property
    def log_nodes(self) -> np.ndarray:
        return np.log(self.nodes)


@dataclass(frozen=True)
class FarField:
    """Declared profile coef * |x'|^(-power) outside the tangential box."""

    coef: float
    power: float

    def powered(self, p: float) -> "FarField":
        """Far field of u |u|^(p-1) given the far field of u."""
        return FarField(coef=math.copysign(abs(self.coef) ** p, self.coef), power=self.power * p)


@dataclass
class Field:
    """Space-time field on the half-space box, values (m_t, tan..., nor)."""

    grid: HalfSpaceGrid
    tgrid: TimeGrid
    values: np.ndarray
    trace_far_field: FarField | None = None

    def __post_init__(self) -> None:
        expected = (self.tgrid.m_t,) + self.grid.shape
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")

    def copy(self) -> "Field":
        return Field(self.grid, self.tgrid, self.values.copy(), self.trace_far_field)


@dataclass
class BoundaryField:
    """Single-time field on the boundary plane, values (tan...)."""

    grid: HalfSpaceGrid
    values: np.ndarray
    far_field: FarField | None = None

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.tan_shape:
            raise ValueError(
                f"values shape {self.values.shape} != {self.grid.tan_shape}"
            )


def trace(field: Field) -> np.ndarray:
    """Boundary trace history, a (m_t, tan...) view of the xn = 0 plane."""
    return field.values[..., 0]


def quadrature_weights(grid: HalfSpaceGrid) -> np.ndarray:
    """Product weights (tan..., nor): cell area times normal trapezoid."""
    w = np.full(grid.shape, grid.cell_area)
    return w * grid.xn_weights


def boundary_weights(grid: HalfSpaceGrid) -> np.ndarray:
    return np.full(grid.tan_shape, grid.cell_area)


def _axis_locate(axis: np.ndarray, x: np.ndarray, name: str) -> tuple:
    lo, hi = axis[0], axis[-1]
    eps = 1e-12 * max(1.0, abs(hi - lo))
    if np.any(x < lo - eps) or np.any(x > hi + eps):
        raise ValueError(f"{name} samples outside grid range [{lo}, {hi}]")
    x = np.clip(x, lo, hi)
    idx = np.clip(np.searchsorted(axis, x, side="right") - 1, 0, axis.size - 2)
    frac = (x - axis[idx]) / (axis[idx + 1] - axis[idx])
    frac = np.clip(frac, 0.0, 1.0)
    frac[frac < 1e-12] = 0.0
    return idx, frac


def sample(field: Field, xp: np.ndarray, xn: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Multilinear interpolation in space, log-linear in time.

    ``xp``: (S, n-1) tangential coordinates; ``xn``: (S,) heights;
    ``t``: (S,) times.  All points must lie inside the grid box and
    time window.
    """
    g, tg = field.grid, field.tgrid
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    xn = np.asarray(xn, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    if xp.shape[1] != g.tan_dim:
        raise ValueError(f"xp must have {g.tan_dim} columns")

    locs = [_axis_locate(tg.log_nodes, np.log(t), "time")]
    for a in range(g.tan_dim):
        locs.append(_axis_locate(g.tan_axis, xp[:, a], f"tangential axis {a}"))
    locs.append(_axis_locate(g.xn_nodes, xn, "normal"))

    ndim = len(locs)
    out = np.zeros(t.shape)
    for corner in range(1 << ndim):
        w = np.ones(t.shape)
        idx = []
        for d in range(ndim):
            bit = (corner >> d) & 1
            i, f = locs[d]
            idx.append(i + bit)
            w = w * (f if bit else (1.0 - f))
        out += w * field.values[tuple(idx)]
    return out


def sample_boundary(bfield: BoundaryField, xp: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a boundary field."""
    g = bfield.grid
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    locs = [_axis_locate(g.tan_axis, xp[:, a], f"tangential axis {a}") for a in range(g.tan_dim)]
    out = np.zeros(xp.shape[0])
    for corner in range(1 << g.tan_dim):
        w = np.ones(xp.shape[0])
        idx = []
        for d in range(g.tan_dim):
            bit = (corner >> d) & 1
            i, f = locs[d]
            idx.append(i + bit)
            w = w * (f if bit else (1.0 - f))
        out += w * bfield.values[tuple(idx)]
    return out


def _far_field_triplet(ff: FarField | None) -> tuple:
    if ff is None:
        return 0, 0.0, 0.0
    return 1, ff.coef, ff.power


def write_field(path, field: Field) -> None:
    g, tg = field.grid, field.tgrid
    flag, coef, power = _far_field_triplet(field.trace_far_field)
    header = np.array(
        [_FIELD_MAGIC, _FORMAT_VERSION, g.n, tg.m_t, g.m_tan, g.m_nor, flag],
        dtype="<i8",
    )
    geom = np.array(
        [g.half_width, g.depth, g.grading, tg.t_min, tg.t_max, coef, power],
        dtype="<f8",
    )
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(geom.tobytes())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    header = np.frombuffer(raw[:56], dtype="<i8")
    if header[0] != _FIELD_MAGIC or header[1] != _FORMAT_VERSION:
        raise ValueError("not a field file (bad magic/version)")
    n, m_t, m_tan, m_nor, flag = (int(v) for v in header[2:7])
    geom = np.frombuffer(raw[56 : 56 + 56], dtype="<f8")
    grid = HalfSpaceGrid(
        n=n, half_width=geom[0], m_tan=m_tan, depth=geom[1], m_nor=m_nor, grading=geom[2]
    )
    tgrid = TimeGrid(t_min=geom[3], t_max=geom[4], m_t=m_t)
    values = np.frombuffer(raw[112:], dtype="<f8").reshape((m_t,) + grid.shape).copy()
    ff = FarField(float(geom[5]), float(geom[6])) if flag else None
    return Field(grid, tgrid, values, ff)


def write_boundary(path, bfield: BoundaryField) -> None:
    g = bfield.grid
    flag, coef, power = _far_field_triplet(bfield.far_field)
    header = np.array([_BOUNDARY_MAGIC, _FORMAT_VERSION, g.n, g.m_tan, flag], dtype="<i8")
    geom = np.array([g.half_width, coef, power], dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(geom.tobytes())
        fh.write(np.ascontiguousarray(bfield.values, dtype="<f8").tobytes())


def read_boundary(path, depth: float = 5.0, m_nor: int = 11, grading: float = 1.35) -> BoundaryField:
    """Read a boundary file; the normal-axis parameters complete the grid."""
    with open(path, "rb") as fh:
        raw = fh.read()
    header = np.frombuffer(raw[:40], dtype="<i8")
    if header[0] != _BOUNDARY_MAGIC or header[1] != _FORMAT_VERSION:
        raise ValueError("not a boundary file (bad magic/version)")
    n, m_tan, flag = int(header[2]), int(header[3]), int(header[4])
    geom = np.frombuffer(raw[40 : 40 + 24], dtype="<f8")
    grid = HalfSpaceGrid(
        n=n, half_width=geom[0], m_tan=m_tan, depth=depth, m_nor=m_nor, grading=grading
    )
    shape = (m_tan,) * (n - 1)
    values = np.frombuffer(raw[64:], dtype="<f8").reshape(shape).copy()
    ff = FarField(float(geom[1]), float(geom[2])) if flag else None
    return BoundaryField(grid, values, ff)


def write_slice_csv(path, grid: HalfSpaceGrid, slice2d: np.ndarray, comment: str | None = None) -> None:
    """CSV dump of a 2-D tangential slice (small-slice debugging output)."""
    if slice2d.shape != (grid.m_tan,) * 2:
        raise ValueError("slice must be m_tan x m_tan")
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["x1\\x2"] + [f"{v:.17g}" for v in grid.tan_axis])
        for i, x1 in enumerate(grid.tan_axis):
            writer.writerow([f"{x1:.17g}"] + [f"{v:.17g}" for v in slice2d[i]])
