"""Internal convolution engine for the kernel operators.

All operators reduce to tangential convolutions on the uniform boundary
lattice: for each output node the integral over the box is a sum over input
nodes of a kernel table entry times the input value times the cell measure.
Because the lattice is uniform, kernel values depend only on the node offset,
so each (kernel, height) pair needs one table of size (2m-1)^(n-1) instead of
m^(n-1) squared.

Singular and under-resolved kernels are handled per table entry:

* the zero-offset entry is an exact average over the equivalent-measure disk
  (or ball) of one cell, closed-form where available, radial log-Gauss
  otherwise;
* entries within a few cells of the origin are averaged over their square
  cell by tensor Gauss quadrature whenever the kernel height is small enough
  that a midpoint value would be biased;
* everything farther out uses the midpoint value.

The truncated tangential complement is integrated by a polar quadrature
around each evaluation node: rays exit the cell-tiling boundary exactly once
(the tiling is convex), so radial log-Gauss nodes from the exit distance
outward integrate declared far-field profiles against the kernels.  Only the
two-dimensional tangential case (n = 3) builds tail geometry; higher n skips
tail corrections and relies on reported tail bounds.

The layered convolution contracts many (height, time-cell) layers into one
output slice.  The compiled path parallelizes over output nodes only; each
output accumulates in a fixed order, so results are bitwise reproducible for
any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit, prange

from .fields import FarField, HalfSpaceGrid
from .kernels import (
    KernelConstants,
    gauss_nodes,
    poisson_height_integral,
    poisson_mass_in_ball,
    poisson_mass_in_square,
    poisson_r2,
    poisson_square_height_integral,
)

__all__ = [
    "TanGeometry",
    "TailGeometry",
    "build_geometry",
    "build_tail_geometry",
    "far_values",
    "tail_point",
    "tail_height_integral",
    "point_tables",
    "height_integral_tables",
    "green_tables",
    "riesz_table_boundary",
    "riesz_tables_halfspace",
    "conv_layers",
    "conv_layers_reference",
    "unit_ball_volume",
]

_REFERENCE_BUDGET = 3e8  # max H*IO*IL elements for the gather path


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass
class TanGeometry:
    """Per-grid offset tables and cell-average quadrature data."""

    m: int
    d: int
    spacing: float
    area: float
    r2_flat: np.ndarray  # ((2m-1)^d,) squared offset distances
    zero_index: int
    near_idx: np.ndarray  # offsets 0 < r <= near_cells*spacing
    near_r2_pts: np.ndarray  # (n_near, G) squared radii of square-cell Gauss points
    near_w: np.ndarray  # (G,) Gauss weights summing to 1
    disk_rho: float  # equivalent-measure disk radius of one cell
    disk_r2: np.ndarray  # (R,) radial log-Gauss nodes squared
    disk_w: np.ndarray  # (R,) weights: sum w*K(r2) = disk average of K
    offmap: np.ndarray | None = None  # lazy (m^d, m^d) int32 reference map

    @property
    def n_offsets(self) -> int:
        return self.r2_flat.size

    @property
    def n_nodes(self) -> int:
        return self.m**self.d


def _offset_grids(m: int, d: int) -> np.ndarray:
    """(M^d, d) integer offsets in C order, axes each -(m-1)..(m-1)."""
    rng = np.arange(-(m - 1), m)
    grids = np.meshgrid(*[rng] * d, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def build_geometry(
    grid: HalfSpaceGrid, near_cells: int = 2, gauss_per_axis: int = 12, disk_nodes: int = 48
) -> TanGeometry:
    m, d, sp = grid.m_tan, grid.tan_dim, grid.tan_spacing
    offs = _offset_grids(m, d)
    r2_flat = np.sum(np.square(offs * sp), axis=1)
    zero_index = int(np.flatnonzero(r2_flat == 0.0)[0])

    near_mask = (r2_flat > 0) & (r2_flat <= (near_cells * sp) ** 2)
    near_idx = np.flatnonzero(near_mask)
    # tensor Gauss points on the square cell around each near offset
    g1, w1 = gauss_nodes(-0.5, 0.5, gauss_per_axis)
    pts1 = [g1] * d
    w = np.ones(1)
    for wd in [w1] * d:
        w = np.multiply.outer(w, wd).ravel()
    gp = np.stack([p.ravel() for p in np.meshgrid(*pts1, indexing="ij")], axis=-1)
    centers = offs[near_idx].astype(float)
    pts = (centers[:, None, :] + gp[None, :, :]) * sp
    near_r2_pts = np.sum(np.square(pts), axis=2)
    near_w = w  # cell has unit measure in these scaled coordinates

    vol1 = unit_ball_volume(d)
    rho = (grid.cell_area / vol1) ** (1.0 / d)
    # radial log-Gauss for disk averages: avg = d * int_0^V K(rho e^-v) e^(-d v) dv
    v, wv = gauss_nodes(0.0, math.log(1e9), disk_nodes)
    disk_r = rho * np.exp(-v)
    disk_w = d * wv * np.exp(-d * v)
    return TanGeometry(
        m=m,
        d=d,
        spacing=sp,
        area=grid.cell_area,
        r2_flat=r2_flat,
        zero_index=zero_index,
        near_idx=near_idx,
        near_r2_pts=near_r2_pts,
        near_w=near_w,
        disk_rho=rho,
        disk_r2=disk_r**2,
        disk_w=disk_w,
    )


def _ensure_offmap(geo: TanGeometry) -> np.ndarray:
    if geo.offmap is None:
        m, d = geo.m, geo.d
        nodes = np.indices((m,) * d).reshape(d, -1).T  # (m^d, d)
        diff = nodes[:, None, :] - nodes[None, :, :] + (m - 1)
        flat = np.zeros((geo.n_nodes, geo.n_nodes), dtype=np.int64)
        for a in range(d):
            flat = flat * (2 * m - 1) + diff[:, :, a]
        geo.offmap = flat.astype(np.int32)
    return geo.offmap


# --- tables -----------------------------------------------------------------


def _apply_near_averages(geo: TanGeometry, base: np.ndarray, rows: np.ndarray, kernel) -> None:
    """Replace near-origin entries of selected rows by square-cell averages.

    ``kernel(r2, row_indices)`` must evaluate the per-row kernel on an array
    of squared distances, broadcasting over the leading row axis.
    """
    if rows.size == 0 or geo.near_idx.size == 0:
        return
    vals = kernel(geo.near_r2_pts[None, :, :], rows)  # (B_sel, n_near, G)
    avg = np.einsum("bng,g->bn", vals, geo.near_w)
    base[np.ix_(rows, geo.near_idx)] = avg


def point_tables(
    geo: TanGeometry, heights: np.ndarray, n: int, avg_under: float = 4.0
) -> np.ndarray:
    """Poisson kernel tables P(offset, h), one row per height.

    The zero-offset entry is the exact kernel mass in the equivalent-area
    disk divided by the cell area; entries near the origin are square-cell
    Gauss averages when h is small enough to under-resolve the kernel.
    """
    heights = np.asarray(heights, dtype=float)
    tab = poisson_r2(geo.r2_flat[None, :], heights[:, None], n)
    if n == 3:
        tab[:, geo.zero_index] = (
            poisson_mass_in_square(heights, 0.5 * geo.spacing, n) / geo.area
        )
    else:
        d = geo.d
        disk_area = unit_ball_volume(d) * geo.disk_rho**d
        mass = np.array([poisson_mass_in_ball(h, geo.disk_rho, n) for h in heights])
        tab[:, geo.zero_index] = mass / disk_area

    rows = np.flatnonzero(heights < avg_under * geo.spacing)
    _apply_near_averages(
        geo, tab, rows, lambda r2, rr: poisson_r2(r2, heights[rr][:, None, None], n)
    )
    return tab


def _disk_average_height_integral(geo: TanGeometry, h_lo, h_hi, n: int) -> np.ndarray:
    """Average over the equivalent disk of the kernel height integral."""
    h_lo = np.asarray(h_lo, dtype=float)
    h_hi = np.asarray(h_hi, dtype=float)
    if n == 3:
        return poisson_square_height_integral(h_lo, h_hi, 0.5 * geo.spacing, n) / geo.area
    vals = poisson_height_integral(
        geo.disk_r2[None, :], h_lo[..., None], h_hi[..., None], n
    )
    return vals @ geo.disk_w


def height_integral_tables(
    geo: TanGeometry, h_lo: np.ndarray, h_hi: np.ndarray, n: int, avg_under: float = 4.0
) -> np.ndarray:
    """Tables of the kernel integrated exactly over a height interval.

    Used by the memory operators: one row per (output time, time cell,
    height) combination, with h_lo/h_hi the kernel heights at the ends of
    the time cell.
    """
    h_lo = np.asarray(h_lo, dtype=float)
    h_hi = np.asarray(h_hi, dtype=float)
    tab = poisson_height_integral(geo.r2_flat[None, :], h_lo[:, None], h_hi[:, None], n)
    tab[:, geo.zero_index] = _disk_average_height_integral(geo, h_lo, h_hi, n)
    rows = np.flatnonzero(h_lo < avg_under * geo.spacing)
    _apply_near_averages(
        geo,
        tab,
        rows,
        lambda r2, rr: poisson_height_integral(
            r2, h_lo[rr][:, None, None], h_hi[rr][:, None, None], n
        ),
    )
    return tab


def _ball_potential(d2: np.ndarray, rho: float, n: int) -> np.ndarray:
    """Average of |x - z|^(2-n) over the ball B(0, rho), at squared distance d2.

    Exact for all distances: outside the ball it equals the point value
    (Newton), inside it is the classical interior potential; decreasing in
    d2, which keeps Green table entries nonnegative.
    """
    ex = -(n - 2) / 2.0
    with np.errstate(divide="ignore"):  # d2 = 0 rows take the inside branch
        outside = d2**ex
    inside = (n - (n - 2) * d2 / rho**2) / (2.0 * rho ** (n - 2))
    return np.where(d2 >= rho**2, outside, inside)


def green_tables(grid: HalfSpaceGrid, geo: TanGeometry) -> np.ndarray:
    """Green kernel tables (K_out, K_in, offsets), cell measure excluded.

    Direct and image parts both use the equivalent-ball average of the
    Newtonian kernel over the input cell, so entries are exact for separated
    pairs, positive everywhere, and identically zero whenever either height
    is zero (the two distances coincide bitwise).
    """
    n = grid.n
    kc = KernelConstants.for_dim(n)
    xn = grid.xn_nodes
    cell_vol = grid.cell_area * grid.xn_weights
    rho = (cell_vol / unit_ball_volume(n)) ** (1.0 / n)
    r2 = geo.r2_flat[None, None, :]
    dz = (xn[:, None] - xn[None, :])[:, :, None]
    sz = (xn[:, None] + xn[None, :])[:, :, None]
    rho3 = rho[None, :, None]
    direct = _ball_potential(r2 + dz**2, rho3, n)
    image = _ball_potential(r2 + sz**2, rho3, n)
    return kc.cbar_n * (direct - image)


def riesz_table_boundary(geo: TanGeometry, gamma: float) -> np.ndarray:
    """Boundary Riesz kernel table |offset|^(gamma - d), singular cell averaged."""
    if not 0 < gamma < geo.d:
        raise ValueError("need 0 < gamma < boundary dimension")
    ex = (gamma - geo.d) / 2.0
    with np.errstate(divide="ignore"):
        tab = geo.r2_flat**ex
    tab[geo.zero_index] = (geo.d / gamma) * geo.disk_rho ** (gamma - geo.d)
    near = geo.near_r2_pts**ex
    tab[geo.near_idx] = near @ geo.near_w
    return tab


def riesz_tables_halfspace(
    grid: HalfSpaceGrid, geo: TanGeometry, gamma: float, out_heights: np.ndarray | None = None
) -> np.ndarray:
    """Half-space Riesz kernel tables (K_out, K_in, offsets) for |x-y|^(gamma-n).

    The coincident-cell entry is the exact equivalent-ball average at the
    center; other entries are midpoint values.
    """
    n = grid.n
    if not 0 < gamma < n:
        raise ValueError("need 0 < gamma < n")
    xn_in = grid.xn_nodes
    xn_out = grid.xn_nodes if out_heights is None else np.asarray(out_heights, dtype=float)
    cell_vol = grid.cell_area * grid.xn_weights
    rho = (cell_vol / unit_ball_volume(n)) ** (1.0 / n)
    d2 = geo.r2_flat[None, None, :] + ((xn_out[:, None] - xn_in[None, :]) ** 2)[:, :, None]
    ex = (gamma - n) / 2.0
    with np.errstate(divide="ignore"):
        tab = d2**ex
    coincident = np.flatnonzero(np.isin(xn_out, xn_in))
    for ko in coincident:
        ki = int(np.flatnonzero(xn_in == xn_out[ko])[0])
        tab[ko, ki, geo.zero_index] = (n / gamma) * rho[ki] ** (gamma - n)
    return tab


# --- polar tail quadrature ---------------------------------------------------


@dataclass
class TailGeometry:
    """Polar quadrature of the cell-tiling complement around each node."""

    r2: np.ndarray  # (nodes, NT, NR) squared distance from the node
    yabs2: np.ndarray  # (nodes, NT, NR) squared distance of the source from 0
    w: np.ndarray  # (nodes, NT, NR) quadrature weights (measure included)


def build_tail_geometry(
    grid: HalfSpaceGrid, n_theta: int = 64, n_rad: int = 32, r_factor: float = 1e4
) -> TailGeometry:
    if grid.tan_dim != 2:
        raise ValueError("tail geometry implemented for two tangential dimensions")
    sp = grid.tan_spacing
    l_eff = grid.half_width + 0.5 * sp  # the cell tiling extends half a cell out
    theta = (np.arange(n_theta) + 0.5) * (2 * math.pi / n_theta)
    ct, st = np.cos(theta), np.sin(theta)
    x = grid.tan_points  # (IO, 2)

    # each ray from an interior node exits the convex tiling exactly once
    r_exit = np.full((x.shape[0], n_theta), np.inf)
    for a, ca in enumerate((ct, st)):
        with np.errstate(divide="ignore"):
            t_pos = (l_eff - x[:, a : a + 1]) / ca[None, :]
            t_neg = (-l_eff - x[:, a : a + 1]) / ca[None, :]
        ta = np.where(ca[None, :] > 0, t_pos, np.where(ca[None, :] < 0, t_neg, np.inf))
        r_exit = np.minimum(r_exit, ta)

    u_lo = np.log(r_exit)  # (IO, NT)
    u_hi = math.log(r_factor * l_eff)
    gx, gw = np.polynomial.legendre.leggauss(n_rad)
    half = 0.5 * (u_hi - u_lo)
    mid = 0.5 * (u_hi + u_lo)
    u = mid[:, :, None] + half[:, :, None] * gx[None, None, :]
    wu = half[:, :, None] * gw[None, None, :]
    r = np.exp(u)
    dtheta = 2 * math.pi / n_theta
    w = wu * r**2 * dtheta
    y1 = x[:, 0, None, None] + r * ct[None, :, None]
    y2 = x[:, 1, None, None] + r * st[None, :, None]
    return TailGeometry(r2=r**2, yabs2=y1**2 + y2**2, w=w)


def far_values(tail: TailGeometry, far: FarField) -> np.ndarray:
    """Far-field data values on the tail quadrature nodes, weights folded in."""
    if far.power == 0.0:
        return far.coef * tail.w
    return far.coef * tail.yabs2 ** (-far.power / 2.0) * tail.w


def tail_point(tail: TailGeometry, ffw: np.ndarray, heights: np.ndarray, n: int) -> np.ndarray:
    """Tail of the Poisson extension: (B, nodes) for heights (B,)."""
    out = np.empty((len(heights), tail.r2.shape[0]))
    for b, h in enumerate(heights):
        out[b] = np.einsum("itr,itr->i", poisson_r2(tail.r2, h, n), ffw)
    return out


def tail_height_integral(
    tail: TailGeometry, ffw: np.ndarray, h_lo: np.ndarray, h_hi: np.ndarray, n: int
) -> np.ndarray:
    """Tail of a height-integrated kernel: (B, nodes) for interval batches."""
    out = np.empty((len(h_lo), tail.r2.shape[0]))
    for b in range(len(h_lo)):
        vals = poisson_height_integral(tail.r2, h_lo[b], h_hi[b], n)
        out[b] = np.einsum("itr,itr->i", vals, ffw)
    return out


# --- layered convolution ------------------------------------------------------


@njit(parallel=True, cache=True)
def _conv2_layers(tab, g, m):  # pragma: no cover - compiled
    big = 2 * m - 1
    out = np.empty(m * m)
    n_layers = g.shape[0]
    for io in prange(m * m):
        i = io // m
        j = io % m
        acc = 0.0
        for h in range(n_layers):
            for k in range(m):
                row = (i - k + m - 1) * big + (j + m - 1)
                base = k * m
                for l in range(m):
                    acc += tab[h, row - l] * g[h, base + l]
        out[io] = acc
    return out


def conv_layers_reference(geo: TanGeometry, tab: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gather-based reference contraction; small grids only."""
    offmap = _ensure_offmap(geo)
    h = tab.shape[0]
    if h * offmap.size > _REFERENCE_BUDGET:
        raise ValueError("reference convolution too large; use the compiled path")
    return np.einsum("hoi,hi->o", tab[:, offmap], g) * geo.area


def conv_layers(geo: TanGeometry, tab: np.ndarray, g: np.ndarray, fast: bool = True) -> np.ndarray:
    """Contract layered tables against layered inputs over all offsets.

    ``tab``: (H, (2m-1)^d) kernel tables; ``g``: (H, m^d) input layers.
    Returns (m^d,) outputs including the cell measure factor.
    """
    if tab.shape[0] != g.shape[0]:
        raise ValueError("layer counts differ")
    if geo.d == 2 and fast:
        tab = np.ascontiguousarray(tab)
        g = np.ascontiguousarray(g)
        return _conv2_layers(tab, g, geo.m) * geo.area
    return conv_layers_reference(geo, tab, g)


@lru_cache(maxsize=8)
def _cached_geometry_key(key: tuple) -> TanGeometry:
    grid = HalfSpaceGrid(*key)
    return build_geometry(grid)


def geometry_for(grid: HalfSpaceGrid) -> TanGeometry:
    """Process-wide cached geometry for a grid."""
    key = (grid.n, grid.half_width, grid.m_tan, grid.depth, grid.m_nor, grid.grading)
    return _cached_geometry_key(key)
