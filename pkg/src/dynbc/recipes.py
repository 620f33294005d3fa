"""Seeded data recipes for boundary data and probe fields.

Every experiment input is produced here from a named recipe plus parameters
and (where applicable) a seed, so runs are reproducible from their config
alone.  Recipes return ``BoundaryField`` or ``Field`` objects with far-field
descriptors attached when the data has a known power-law tail.

The homogeneous recipe ``coef * |x'|^(-k)`` is the self-similar initial datum
when ``k = 1/(p2 - 1)``; its value at the origin node is replaced by the
exact average over the equivalent-area disk of one tangential cell, which is
finite for ``k < n - 1`` and keeps quadratures against the data meaningful.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import BoundaryField, FarField, Field, HalfSpaceGrid, TimeGrid

__all__ = [
    "boundary_data",
    "probe_field",
    "homogeneous_exact",
    "RECIPES",
]

RECIPES = ("zero", "gaussian-bump", "homogeneous-power", "bump-sum")


def _bump(r2: np.ndarray, width: float) -> np.ndarray:
    return np.exp(-0.5 * r2 / width**2)


def homogeneous_exact(xp: np.ndarray, coef: float, power: float) -> np.ndarray:
    """Pointwise coef * |x'|^(-power); infinite at the origin."""
    r = np.sqrt(np.sum(np.square(xp), axis=-1))
    with np.errstate(divide="ignore"):
        return coef * r**-power


def _disk_average_power(grid: HalfSpaceGrid, power: float) -> float:
    """Average of |x'|^(-power) over the equivalent-area disk of one cell.

    The disk has the same (n-1)-measure as a tangential cell.  Radial
    integration is exact: avg = d/(d - k) * rho^(-k) with d = n - 1.
    """
    d = grid.tan_dim
    if power >= d:
        raise ValueError(f"power {power} not integrable in dimension {d}")
    # unit-ball volume in d dims: pi^(d/2) / Gamma(d/2 + 1)
    vol1 = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    rho = (grid.cell_area / vol1) ** (1.0 / d)
    return d / (d - power) * rho**-power


def boundary_data(grid: HalfSpaceGrid, recipe: str, params: dict | None = None, seed: int = 0) -> BoundaryField:
    """Build boundary data from a named recipe.

    Parameters
    ----------
    grid : HalfSpaceGrid
        Target grid (tangential part is used).
    recipe : str
        One of ``zero``, ``gaussian-bump``, ``homogeneous-power``,
        ``bump-sum``.
    params : dict, optional
        Recipe parameters; unknown keys raise.
    seed : int
        Seed for the stochastic recipes.
    """
    p = dict(params or {})
    xp = grid.tan_points
    shape = grid.tan_shape
    far = None

    if recipe == "zero":
        _require_keys(p, set())
        values = np.zeros(shape)
    elif recipe == "gaussian-bump":
        _require_keys(p, {"amplitude", "width", "center"})
        amp = float(p.get("amplitude", 1.0))
        width = float(p.get("width", 1.0))
        center = np.asarray(p.get("center", np.zeros(grid.tan_dim)), dtype=float)
        r2 = np.sum(np.square(xp - center), axis=1)
        values = (amp * _bump(r2, width)).reshape(shape)
    elif recipe == "homogeneous-power":
        _require_keys(p, {"coef", "power"})
        coef = float(p.get("coef", 1.0))
        power = float(p["power"])
        vals = homogeneous_exact(xp, coef, power)
        origin = np.all(xp == 0.0, axis=1)
        vals[origin] = coef * _disk_average_power(grid, power)
        values = vals.reshape(shape)
        far = FarField(coef=coef, power=power)
    elif recipe == "bump-sum":
        _require_keys(p, {"count", "signed", "scale"})
        count = int(p.get("count", 3))
        signed = bool(p.get("signed", False))
        scale = float(p.get("scale", 1.0))
        rng = np.random.default_rng(seed)
        vals = np.zeros(xp.shape[0])
        for _ in range(count):
            center = rng.uniform(-0.5 * grid.half_width, 0.5 * grid.half_width, grid.tan_dim)
            width = rng.uniform(0.5, 1.5)
            amp = rng.uniform(0.5, 1.0)
            if signed and rng.random() < 0.5:
                amp = -amp
            vals += amp * _bump(np.sum(np.square(xp - center), axis=1), width)
        values = (scale * vals).reshape(shape)
    else:
        raise ValueError(f"unknown recipe {recipe!r}; choose from {RECIPES}")

    return BoundaryField(grid, values, far)


def probe_field(
    grid: HalfSpaceGrid,
    tgrid: TimeGrid,
    seed: int = 0,
    count: int = 3,
    scale: float = 1.0,
) -> Field:
    """Smooth seeded space-time field for operator and norm probes.

    A sum of interior Gaussian bumps, each modulated by a decaying time
    profile ``(1 + t/t0)^(-a)``; bounded on the whole window with finite
    weighted norms.
    """
    rng = np.random.default_rng(seed)
    pts = grid.points
    t = tgrid.nodes
    flat = np.zeros((tgrid.m_t, pts.shape[0]))
    for _ in range(count):
        center = np.empty(grid.n)
        center[:-1] = rng.uniform(-0.5 * grid.half_width, 0.5 * grid.half_width, grid.tan_dim)
        center[-1] = rng.uniform(0.0, 0.5 * grid.depth)
        width = rng.uniform(0.5, 1.5)
        amp = rng.uniform(0.5, 1.0) * (1 if rng.random() < 0.5 else -1)
        t0 = rng.uniform(0.5, 2.0)
        a = rng.uniform(0.3, 1.0)
        r2 = np.sum(np.square(pts - center), axis=1)
        profile = (1.0 + t / t0) ** -a
        flat += amp * profile[:, None] * _bump(r2, width)[None, :]
    values = (scale * flat).reshape((tgrid.m_t,) + grid.shape)
    return Field(grid, tgrid, values)


def _require_keys(params: dict, allowed: set) -> None:
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"unknown recipe parameters: {sorted(extra)}")
