"""Tests for the integral operators and the tangential convolution engine."""

import numpy as np
import pytest

from dynbc import operators as ops
from dynbc import tangential as tg
from dynbc.fields import BoundaryField, FarField, Field, HalfSpaceGrid, TimeGrid
from dynbc.kernels import green
from dynbc.recipes import boundary_data, probe_field


@pytest.fixture(scope="module")
def grid():
    return HalfSpaceGrid()


@pytest.fixture(scope="module")
def tgrid():
    return TimeGrid()


@pytest.fixture(scope="module")
def ws(grid, tgrid):
    return ops.Workspace(grid, tgrid)


def bump(grid, width=1.0, center=(0.0, 0.0), amp=1.0):
    d2 = np.sum((grid.tan_points - np.asarray(center)) ** 2, axis=1)
    return amp * np.exp(-0.5 * d2 / width**2).reshape(grid.tan_shape)


class TestTangentialEngine:
    def test_fast_matches_reference(self, ws):
        rng = np.random.default_rng(5)
        tab = rng.standard_normal((4, ws.geo.r2_flat.size))
        g = rng.standard_normal((4, ws.grid.n_tan))
        fast = tg.conv_layers(ws.geo, tab, g, fast=True)
        ref = tg.conv_layers(ws.geo, tab, g, fast=False)
        scale = np.abs(ref).max()
        assert np.abs(fast - ref).max() <= 1e-12 * scale

    def test_reference_matches_bruteforce_offsets(self):
        # independent O(m^4) oracle resolving offsets by coordinate arithmetic
        g5 = HalfSpaceGrid(half_width=2.0, m_tan=5, m_nor=2)
        geo = tg.build_geometry(g5)
        rng = np.random.default_rng(1)
        tab = rng.standard_normal(geo.r2_flat.size)
        gv = rng.standard_normal((5, 5))
        out = tg.conv_layers(geo, tab[None, :], gv.reshape(1, -1), fast=False)
        m = 5
        expect = np.zeros((m, m))
        for i in range(m):
            for j in range(m):
                acc = 0.0
                for k in range(m):
                    for l in range(m):
                        off = ((i - k) + m - 1) * (2 * m - 1) + (j - l) + m - 1
                        acc += tab[off] * gv[k, l]
                expect[i, j] = acc * geo.area
        assert np.allclose(out.reshape(m, m), expect, rtol=1e-13, atol=1e-13)

    def test_green_tables_trace_row_zero_and_nonnegative(self, ws):
        tabs = ws.green_tabs
        assert np.all(tabs[0] == 0.0)
        assert np.all(tabs[:, 0, :] == 0.0)
        assert np.all(tabs >= 0.0)

    def test_workspace_caches_boundary_memory_tail(self, ws):
        far = FarField(1.0, 0.0)
        a = ws.boundary_memory_tail(far)
        b = ws.boundary_memory_tail(far)
        assert a is b


class TestBoundaryDataTerm:
    def test_constant_data_reproduced(self, ws):
        one = BoundaryField(ws.grid, np.ones(ws.grid.tan_shape), far_field=FarField(1.0, 0.0))
        u = ops.poisson_extension(ws, one)
        assert np.abs(u.values - 1.0).max() < 0.02
        assert u.trace_far_field == one.far_field

    def test_grid_mismatch_raises(self, ws):
        other = HalfSpaceGrid(m_tan=12)
        with pytest.raises(ValueError):
            ops.poisson_extension(ws, BoundaryField(other, np.zeros(other.tan_shape)))

    def test_quarter_turn_equivariance(self, ws):
        phi = bump(ws.grid, width=0.8, center=(1.3, -0.4))
        u = ops.poisson_extension(ws, BoundaryField(ws.grid, phi))
        u_rot = ops.poisson_extension(
            ws, BoundaryField(ws.grid, np.rot90(phi))
        )
        scale = np.abs(u.values).max()
        assert np.abs(np.rot90(u.values, axes=(1, 2)) - u_rot.values).max() <= 1e-10 * scale


class TestBoundaryMemoryTerm:
    def test_constant_density_trace_grows_like_t(self, ws):
        g_hist = np.ones((ws.tgrid.m_t,) + ws.grid.tan_shape)
        u = ops.boundary_memory(ws, g_hist, far=FarField(1.0, 0.0))
        mid = ws.grid.m_tan // 2
        tr = u.values[:, mid, mid, 0]
        assert np.abs(tr / ws.tgrid.nodes - 1.0).max() < 0.02

    def test_shape_validation(self, ws):
        with pytest.raises(ValueError):
            ops.boundary_memory(ws, np.ones((3,) + ws.grid.tan_shape))


class TestGreenPotentialTerm:
    def test_trace_identically_zero(self, ws, grid, tgrid):
        f = probe_field(grid, tgrid, seed=2)
        u = ops.green_potential(ws, f)
        assert np.all(u.values[..., 0] == 0.0)

    def test_monopole_matches_kernel_oracle(self, ws, grid, tgrid):
        # one-cell source: the equivalent-ball average of a harmonic kernel
        # equals the point kernel at separated targets (mean value property)
        kc, lc = 12, 4  # source node indices (tangential center, interior height)
        f_vals = np.zeros((tgrid.m_t,) + grid.shape)
        f_vals[:, kc, kc, lc] = 1.0
        u = ops.green_potential(ws, Field(grid, tgrid, f_vals))
        y0 = np.array([grid.tan_axis[kc], grid.tan_axis[kc], grid.xn_nodes[lc]])
        vol = grid.cell_area * grid.xn_weights[lc]
        checked = 0
        for it, il in [(2, 3), (5, 5), (8, 7), (16, 8), (20, 6), (22, 9)]:
            x = np.array([grid.tan_axis[it], grid.tan_axis[it], grid.xn_nodes[il]])
            dist = np.linalg.norm(x - y0)
            if dist < 1.0:
                continue
            oracle = green(x[None, :], y0[None, :], grid.n)[0] * vol
            got = u.values[0, it, it, il]
            assert got == pytest.approx(oracle, rel=0.05)
            checked += 1
        assert checked >= 5

    def test_positive_for_nonnegative_density(self, ws, grid, tgrid):
        f = probe_field(grid, tgrid, seed=3)
        u = ops.green_potential(ws, Field(grid, tgrid, np.abs(f.values)))
        assert np.all(u.values >= 0.0)


class TestInteriorMemoryTerm:
    def test_time_grid_self_convergence(self, grid):
        # nested geometric grids share nodes at even indices; the leading
        # [0, t_min] cell is common to all levels, so refinement converges
        # to the product-rule limit. expected near 4x error drop per level.
        outs = {}
        for m_t in (7, 13, 25):
            tgr = TimeGrid(m_t=m_t)
            w = ops.Workspace(grid, tgr)
            f = probe_field(grid, tgr, seed=4)
            outs[m_t] = ops.interior_memory(w, f).values
        err1 = np.abs(outs[13][::2] - outs[7]).max()
        err2 = np.abs(outs[25][::4] - outs[13][::2]).max()
        assert err2 < 0.5 * err1

    def test_positivity(self, ws, grid, tgrid):
        f = probe_field(grid, tgrid, seed=6)
        u = ops.interior_memory(ws, Field(grid, tgrid, np.abs(f.values)))
        assert np.all(u.values >= 0.0)


class TestLinearityAndScaling:
    def test_linearity_without_far_field(self, ws, grid, tgrid):
        phi1 = bump(grid, 0.9, (0.5, 0.2))
        phi2 = bump(grid, 1.4, (-1.0, 0.8))
        a, b = 2.5, -1.25
        u1 = ops.poisson_extension(ws, BoundaryField(grid, phi1))
        u2 = ops.poisson_extension(ws, BoundaryField(grid, phi2))
        u12 = ops.poisson_extension(ws, BoundaryField(grid, a * phi1 + b * phi2))
        scale = np.abs(u12.values).max()
        assert np.abs(u12.values - a * u1.values - b * u2.values).max() <= 1e-12 * scale

        f1 = probe_field(grid, tgrid, seed=7)
        f2 = probe_field(grid, tgrid, seed=8)
        v1 = ops.green_potential(ws, f1).values
        v2 = ops.green_potential(ws, f2).values
        v12 = ops.green_potential(
            ws, Field(grid, tgrid, a * f1.values + b * f2.values)
        ).values
        scale = np.abs(v12).max()
        assert np.abs(v12 - a * v1 - b * v2).max() <= 1e-12 * scale

    def test_far_field_coefficient_linearity(self, ws, grid):
        phi = boundary_data(grid, "homogeneous-power", {"coef": 1.0, "power": 0.4})
        u1 = ops.poisson_extension(ws, phi)
        phi2 = BoundaryField(grid, 3.0 * phi.values, far_field=FarField(3.0, 0.4))
        u3 = ops.poisson_extension(ws, phi2)
        scale = np.abs(u3.values).max()
        assert np.abs(u3.values - 3.0 * u1.values).max() <= 1e-12 * scale

    def test_exact_dilation_equivariance_all_operators(self, grid, tgrid):
        # the whole quadrature pipeline commutes with the parabolic-type
        # dilation: same node values on the scaled grids, up to the kernel
        # homogeneity factors 1 (data term), 1/lam (boundary memory),
        # 1/lam^2 (interior memory, potential)
        lam = 2.0
        grid2 = grid.scaled(1.0 / lam)
        tgrid2 = TimeGrid(tgrid.t_min / lam, tgrid.t_max / lam, tgrid.m_t)
        w1 = ops.Workspace(grid, tgrid)
        w2 = ops.Workspace(grid2, tgrid2)

        phi = bump(grid, width=1.1, center=(0.7, -0.3))
        u1 = ops.poisson_extension(w1, BoundaryField(grid, phi)).values
        u2 = ops.poisson_extension(w2, BoundaryField(grid2, phi)).values
        assert np.abs(u2 - u1).max() <= 1e-12 * np.abs(u1).max()

        g_hist = np.broadcast_to(phi, (tgrid.m_t,) + grid.tan_shape).copy()
        v1 = ops.boundary_memory(w1, g_hist).values
        v2 = ops.boundary_memory(w2, g_hist).values
        assert np.abs(v2 - v1 / lam).max() <= 1e-12 * np.abs(v1).max()

        f = probe_field(grid, tgrid, seed=9)
        f2 = Field(grid2, tgrid2, f.values)
        w3a = ops.interior_memory(w1, f).values
        w3b = ops.interior_memory(w2, f2).values
        assert np.abs(w3b - w3a / lam**2).max() <= 1e-12 * np.abs(w3a).max()

        w4a = ops.green_potential(w1, f).values
        w4b = ops.green_potential(w2, f2).values
        assert np.abs(w4b - w4a / lam**2).max() <= 1e-12 * np.abs(w4a).max()


class TestRieszOperators:
    def test_boundary_delta_cell_oracle(self, ws, grid):
        gamma = 0.5
        vals = np.zeros(grid.tan_shape)
        vals[4, 17] = 1.0
        out = ops.riesz_boundary(ws, vals, gamma)
        y0 = grid.tan_points.reshape(grid.tan_shape + (2,))[4, 17]
        for it in [(10, 10), (0, 0), (20, 3)]:
            x = grid.tan_points.reshape(grid.tan_shape + (2,))[it]
            dist = np.linalg.norm(x - y0)
            if dist < 3.0 * grid.tan_spacing:
                continue
            oracle = dist ** (gamma - 2.0) * grid.cell_area
            assert out[it] == pytest.approx(oracle, rel=1e-10)

    def test_halfspace_trace_shape_and_positivity(self, ws, grid, tgrid):
        f = probe_field(grid, tgrid, seed=10)
        vals = np.abs(f.values[0])
        tr = ops.riesz_halfspace(ws, vals, gamma=1.0, trace=True)
        assert tr.shape == grid.tan_shape
        assert np.all(tr >= 0.0)
        full = ops.riesz_halfspace(ws, vals, gamma=1.0)
        assert full.shape == vals.shape
        assert np.all(full >= 0.0)


class TestDiagnostics:
    def test_shell_max_picks_outer_ring(self, grid):
        vals = np.zeros(grid.tan_shape)
        vals[0, 5] = -7.0
        vals[10, 10] = 100.0  # interior, must be ignored
        assert ops.shell_max(grid, vals) == 7.0

    def test_tail_bound_report_structure(self, ws):
        rep = ops.tail_bound_report(ws, "interior-memory", shell_max=0.25, height=1.5)
        assert rep["tangential_tail_bound"] > 0.0
        rep2 = ops.tail_bound_report(ws, "interior-memory", shell_max=0.5, height=1.5)
        assert rep2["tangential_tail_bound"] == pytest.approx(
            2.0 * rep["tangential_tail_bound"]
        )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ops.OperatorConfig(near_cells=0)
        with pytest.raises(ValueError):
            ops.OperatorConfig(tail="maybe")
