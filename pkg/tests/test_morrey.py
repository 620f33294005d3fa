"""Tests for the Morrey norm estimator, block duality, and inequality probes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynbc import morrey as mo
from dynbc.fields import BoundaryField, Field, HalfSpaceGrid, TimeGrid, boundary_weights
from dynbc.recipes import boundary_data


@pytest.fixture(scope="module")
def grid():
    return HalfSpaceGrid()


@pytest.fixture(scope="module")
def fine_boundary_grid():
    # boundary-only work: the normal axis is irrelevant, keep it minimal
    return HalfSpaceGrid(half_width=3.0, m_tan=241, m_nor=2)


def gaussian_boundary(grid, width=1.2, center=(0.0, 0.0), amp=1.0):
    d2 = np.sum((grid.tan_points - np.asarray(center)) ** 2, axis=1)
    return amp * np.exp(-0.5 * d2 / width**2).reshape(grid.tan_shape)


class TestNormEstimator:
    def test_zero_field_gives_zero(self, grid):
        spec = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        est = mo.morrey_norm(BoundaryField(grid, np.zeros(grid.tan_shape)), spec)
        assert est.value == 0.0
        assert est.centers_tried > 0 and est.radii_tried > 0

    def test_indicator_unit_ball_matches_closed_form(self, fine_boundary_grid):
        g = fine_boundary_grid
        ind = (np.sum(g.tan_points**2, axis=1) <= 1.0).astype(float)
        spec = mo.MorreySpec(q=2.0, mu=0.0, d=2)
        pol = mo.MorreyPolicy(radii=(0.25, 0.5, 1.0, 2.0, 4.0), stride=24)
        est = mo.morrey_norm(BoundaryField(g, ind.reshape(g.tan_shape)), spec, pol)
        exact = math.sqrt(math.pi)
        assert abs(est.value - exact) / exact < 0.01

    def test_indicator_functional_saturates_at_unit_radius(self, fine_boundary_grid):
        # below r = 1 the windowed value still grows, beyond it nothing is added
        g = fine_boundary_grid
        ind = (np.sum(g.tan_points**2, axis=1) <= 1.0).astype(float)
        spec = mo.MorreySpec(q=2.0, mu=0.0, d=2)
        w = boundary_weights(g).ravel()
        vals = mo.windowed_functional(
            g.tan_points, w, ind, spec, (0.0, 0.0), (0.25, 1.0, 2.0, 4.0)
        )
        assert vals[0] < vals[1]
        assert vals[1] == vals[2] == vals[3]

    def test_homogeneous_profile_radius_constancy(self):
        # |x|^(-(d-mu)/q) makes the center-zero functional radius-independent
        g = HalfSpaceGrid(half_width=4.0, m_tan=2401, m_nor=2)
        bf = boundary_data(g, "homogeneous-power", {"coef": 1.0, "power": 0.4})
        spec = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        w = boundary_weights(g).ravel()
        vals = mo.windowed_functional(
            g.tan_points, w, bf.values.ravel(), spec, (0.0, 0.0), (0.25, 1.0, 4.0)
        )
        spread = (vals.max() - vals.min()) / vals.min()
        assert spread < 0.01

    def test_homogeneous_profile_norm_matches_closed_form(self):
        # closed form: (area(S^(d-1)) / mu)^(1/q) for coef 1
        g = HalfSpaceGrid(half_width=4.0, m_tan=2401, m_nor=2)
        bf = boundary_data(g, "homogeneous-power", {"coef": 1.0, "power": 0.4})
        spec = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        pol = mo.MorreyPolicy(radii=(0.25, 0.5, 1.0, 2.0, 4.0), stride=2400)
        est = mo.morrey_norm(bf, spec, pol)
        exact = (2.0 * math.pi / 0.5) ** (1.0 / 3.75)
        assert abs(est.value - exact) / exact < 0.01

    def test_monotone_under_policy_refinement(self, grid):
        vals = gaussian_boundary(grid) - 0.5 * gaussian_boundary(grid, 0.6, (1.5, -0.7))
        bf = BoundaryField(grid, vals)
        spec = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        coarse = mo.MorreyPolicy(radii=(1.0, 2.0), stride=4)
        fine = mo.MorreyPolicy(
            radii=(0.5, 1.0, 2.0, 4.0), stride=2, extra_centers=((0.3, 0.3),)
        )
        assert mo.morrey_norm(bf, spec, coarse).value <= mo.morrey_norm(bf, spec, fine).value

    def test_scaling_law_on_dilated_bump(self):
        g = HalfSpaceGrid(half_width=6.0, m_tan=97, m_nor=2)
        spec = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        lam = 2.0
        base = gaussian_boundary(g, width=1.5)
        dil = gaussian_boundary(g, width=1.5 / lam)  # f(lam x) exactly
        e0 = mo.morrey_norm(BoundaryField(g, base), spec).value
        e1 = mo.morrey_norm(BoundaryField(g, dil), spec).value
        predicted = lam ** (-(2.0 - 0.5) / 3.75) * e0
        assert abs(e1 - predicted) / predicted < mo.ESTIMATOR_SLACK

    def test_essential_sup_for_infinite_q(self, grid):
        vals = gaussian_boundary(grid, amp=-3.0)
        spec = mo.MorreySpec(q=math.inf, mu=0.5, d=2)
        est = mo.morrey_norm(BoundaryField(grid, vals), spec)
        assert est.value == np.abs(vals).max()
        assert est.radius == 0.0

    def test_windowed_functional_agrees_with_estimator(self, grid):
        vals = gaussian_boundary(grid)
        spec = mo.MorreySpec(q=2.0, mu=0.5, d=2)
        w = boundary_weights(grid).ravel()
        radii = np.array([0.7, 1.3, 2.9])
        fx = mo.windowed_functional(grid.tan_points, w, vals.ravel(), spec, (0.0, 0.0), radii)
        est = mo.estimate_norm(
            grid.tan_points, w, vals.ravel(), spec, radii, np.zeros((1, 2))
        )
        assert est.value == pytest.approx(fx.max(), rel=1e-12)
        assert est.radius == radii[np.argmax(fx)]

    def test_field_norm_takes_max_over_time_slices(self, grid):
        tgrid = TimeGrid(m_t=3)
        profile = np.exp(-0.5 * np.sum(grid.points**2, axis=1)).reshape(grid.shape)
        vals = np.stack([0.5 * profile, 2.0 * profile, profile])
        fld = Field(grid, tgrid, vals)
        spec = mo.MorreySpec(q=3.75, mu=0.5, d=3, domain="half-space")
        full = mo.morrey_norm(fld, spec)
        middle = mo.morrey_norm(fld, spec, time_index=1)
        assert full.value == pytest.approx(middle.value)
        assert mo.morrey_norm(fld, spec, time_index=0).value == pytest.approx(
            0.25 * middle.value
        )

    @given(st.floats(min_value=-50.0, max_value=50.0).filter(lambda a: abs(a) > 1e-6))
    @settings(max_examples=25, deadline=None)
    def test_scalar_homogeneity(self, a):
        g = HalfSpaceGrid(m_tan=12, m_nor=2)
        vals = gaussian_boundary(g)
        spec = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        pol = mo.MorreyPolicy(stride=4)
        e1 = mo.morrey_norm(BoundaryField(g, vals), spec, pol).value
        ea = mo.morrey_norm(BoundaryField(g, a * vals), spec, pol).value
        assert ea == pytest.approx(abs(a) * e1, rel=1e-12)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            mo.MorreySpec(q=0.5, mu=0.5, d=2)
        with pytest.raises(ValueError):
            mo.MorreySpec(q=2.0, mu=2.0, d=2)
        with pytest.raises(ValueError):
            mo.MorreySpec(q=2.0, mu=0.5, d=2, domain="disk")

    def test_domain_mismatch_rejected(self, grid):
        bf = BoundaryField(grid, np.zeros(grid.tan_shape))
        with pytest.raises(ValueError):
            mo.morrey_norm(bf, mo.MorreySpec(q=2.0, mu=0.5, d=3, domain="half-space"))

    def test_lp_embedding_bound_on_bumps(self):
        # (d - mu)/q = d/p makes r^(-mu/q) |B_r|^(1/q - 1/p) radius-free;
        # the computable constant includes the cell-overshoot factor at r_min
        g = HalfSpaceGrid(half_width=6.0, m_tan=49, m_nor=2)
        q, mu, d = 3.75, 0.5, 2
        p = q * d / (d - mu)
        spec = mo.MorreySpec(q=q, mu=mu, d=d)
        w = boundary_weights(g).ravel()
        delta = 1.0 / q - 1.0 / p
        overshoot = (1.0 + 0.5 * math.sqrt(2.0)) ** (2.0 * delta)
        const = math.pi**delta * overshoot
        rng = np.random.default_rng(7)
        for _ in range(10):
            c = rng.uniform(-2.0, 2.0, size=2)
            width = math.exp(rng.uniform(math.log(0.4), math.log(1.5)))
            vals = gaussian_boundary(g, width, c, amp=rng.uniform(0.5, 2.0))
            lp = np.sum(w * np.abs(vals.ravel()) ** p) ** (1.0 / p)
            est = mo.morrey_norm(BoundaryField(g, vals), spec).value
            assert est <= const * lp * (1.0 + 1e-12)


class TestBlocksAndDuality:
    spec = mo.MorreySpec(q=3.75, mu=0.5, d=2)

    def test_block_normalization(self, grid):
        blk = mo.make_block(grid, self.spec, (0.8, -0.4), 1.5)
        w = boundary_weights(grid).ravel()
        qp = self.spec.conjugate_q
        nrm = np.sum(w * np.abs(blk.values.ravel()) ** qp) ** (1.0 / qp)
        assert blk.radius ** (self.spec.mu / self.spec.q) * nrm == pytest.approx(1.0)
        d2 = np.sum((grid.tan_points - np.array([0.8, -0.4])) ** 2, axis=1)
        assert np.all(blk.values.ravel()[d2 > blk.radius**2] == 0.0)

    def test_single_block_upper_bound_near_one(self, grid):
        # one-term decomposition at radius 2R costs the factor 2^(mu/q)
        blk = mo.make_block(grid, self.spec, (0.8, -0.4), 1.5)
        bound = mo.block_norm_upper_bound(
            BoundaryField(grid, blk.values), self.spec, blk.center, blk.radius
        )
        assert bound <= 2.0 ** (self.spec.mu / self.spec.q) * (1.0 + 1e-12)
        assert bound > 0.9

    def test_zero_bound_is_zero(self, grid):
        bf = BoundaryField(grid, np.zeros(grid.tan_shape))
        assert mo.block_norm_upper_bound(bf, self.spec, (0.0, 0.0), 0.5) == 0.0

    def test_divergence_flag_for_nondecaying_tail(self, grid):
        bf = BoundaryField(grid, np.ones(grid.tan_shape))
        bound = mo.block_norm_upper_bound(bf, self.spec, (0.0, 0.0), 0.25)
        assert math.isinf(bound)

    def test_pairing_trivial_cases(self, fine_boundary_grid):
        g = fine_boundary_grid
        ind = (np.sum(g.tan_points**2, axis=1) <= 1.0).astype(float).reshape(g.tan_shape)
        zero = BoundaryField(g, np.zeros(g.tan_shape))
        assert mo.duality_pairing(BoundaryField(g, ind), zero) == 0.0
        mass = mo.duality_pairing(BoundaryField(g, ind), BoundaryField(g, ind))
        assert abs(mass - math.pi) / math.pi < 0.01

    def test_duality_inequality_on_random_pairs(self, grid):
        # the annulus radii {2^k R} must be in the estimator family, and the
        # decomposition center among its centers; then the bound is exact
        rng = np.random.default_rng(11)
        x0, R = (0.0, 0.0), 0.5
        k_max = 6
        radii = tuple((2.0**k) * R for k in range(1, k_max + 1))
        pol = mo.MorreyPolicy(radii=radii, stride=4, extra_centers=(x0,))
        for _ in range(20):
            f = BoundaryField(grid, mo._bump_sum_values(grid, rng))
            psi = BoundaryField(grid, mo._bump_sum_values(grid, rng))
            lhs = abs(mo.duality_pairing(f, psi))
            bound = mo.block_norm_upper_bound(psi, self.spec, x0, R)
            est = mo.morrey_norm(f, self.spec, pol).value
            assert lhs <= est * bound * (1.0 + 1e-9)


class TestHolderProbe:
    def _specs(self):
        # 1/q3 = 1/q1 + 1/q2 and matching weight relation, all on d = 2
        s1 = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        s2 = mo.MorreySpec(q=7.5, mu=1.0, d=2)
        q3 = 2.5
        mu3 = 2.0 - q3 * ((2.0 - 0.5) / 3.75 + (2.0 - 1.0) / 7.5)
        s3 = mo.MorreySpec(q=q3, mu=mu3, d=2)
        return s1, s2, s3

    def test_indicator_closed_form_pair(self, fine_boundary_grid):
        g = fine_boundary_grid
        ind = (np.sum(g.tan_points**2, axis=1) <= 1.0).astype(float).reshape(g.tan_shape)
        f = BoundaryField(g, ind)
        specs = (
            mo.MorreySpec(q=2.0, mu=0.0, d=2),
            mo.MorreySpec(q=2.0, mu=0.0, d=2),
            mo.MorreySpec(q=1.0, mu=0.0, d=2),
        )
        pol = mo.MorreyPolicy(radii=(0.5, 1.0, 2.0), stride=24)
        rep = mo.holder_probe(specs, f=f, g=f, policy=pol)
        assert rep.max_ratio <= 1.0
        assert rep.passed

    def test_random_bump_pairs(self, grid):
        rep = mo.holder_probe(self._specs(), grid=grid, trials=100, seed=3)
        assert rep.trials == 100
        assert rep.max_ratio <= 1.0 + mo.ESTIMATOR_SLACK
        assert rep.passed

    def test_zero_input_ratio_zero(self, grid):
        z = BoundaryField(grid, np.zeros(grid.tan_shape))
        rep = mo.holder_probe(self._specs(), f=z, g=z)
        assert rep.max_ratio == 0.0

    def test_incompatible_exponents_raise(self, grid):
        s1 = mo.MorreySpec(q=3.75, mu=0.5, d=2)
        s2 = mo.MorreySpec(q=7.5, mu=1.0, d=2)
        bad = mo.MorreySpec(q=2.6, mu=0.5, d=2)
        with pytest.raises(ValueError):
            mo.holder_probe((s1, s2, bad), grid=grid, trials=1)


class TestRieszProbe:
    def test_boundary_same_domain_dilation_stability(self):
        g = HalfSpaceGrid(half_width=6.0, m_tan=49, m_nor=2)
        f = BoundaryField(g, gaussian_boundary(g, width=1.2))
        src = mo.MorreySpec(q=2.0, mu=0.5, d=2)
        dst = mo.MorreySpec(q=6.0, mu=0.5, d=2)
        gamma = (2.0 - 0.5) * (1.0 / 2.0 - 1.0 / 6.0)
        rep = mo.riesz_probe(f, gamma, src, dst)
        assert rep.passed and rep.max_ratio <= 1.05
        assert rep.details["empirical_constant"] > 0.0

    def test_trace_case_dilation_stability(self):
        g = HalfSpaceGrid(m_tan=73, m_nor=13)
        tgrid = TimeGrid(m_t=2)
        pp = g.points
        fv = np.exp(
            -0.5 * np.sum(pp[:, :2] ** 2, axis=1) / 1.2**2
            - 0.5 * (pp[:, 2] - 0.8) ** 2 / 0.8**2
        )
        fld = Field(g, tgrid, np.broadcast_to(fv.reshape(g.shape), (2,) + g.shape).copy())
        src = mo.MorreySpec(q=2.0, mu=0.5, d=3, domain="half-space")
        dst = mo.MorreySpec(q=6.0, mu=0.5, d=2, domain="boundary")
        # gamma = (n - mu)/q_src - (n - mu - 1)/q_dst = 1.25 - 0.25
        lams = tuple(2.0**e for e in (-0.5, -0.25, 0.0, 0.25, 0.5))
        rep = mo.riesz_probe(fld, 1.0, src, dst, trace=True, lambdas=lams)
        assert rep.passed and rep.max_ratio <= 1.05

    def test_halfspace_same_domain_dilation_stability(self):
        g = HalfSpaceGrid(m_tan=49, m_nor=13)
        tgrid = TimeGrid(m_t=2)
        pp = g.points
        fv = np.exp(
            -0.5 * np.sum(pp[:, :2] ** 2, axis=1) / 1.2**2
            - 0.5 * (pp[:, 2] - 0.8) ** 2 / 0.8**2
        )
        fld = Field(g, tgrid, np.broadcast_to(fv.reshape(g.shape), (2,) + g.shape).copy())
        src = mo.MorreySpec(q=2.0, mu=0.5, d=3, domain="half-space")
        dst = mo.MorreySpec(q=6.0, mu=0.5, d=3, domain="half-space")
        gamma = (3.0 - 0.5) * (1.0 / 2.0 - 1.0 / 6.0)
        lams = tuple(2.0**e for e in (-0.5, -0.25, 0.0, 0.25, 0.5))
        rep = mo.riesz_probe(fld, gamma, src, dst, lambdas=lams)
        assert rep.passed and rep.max_ratio <= 1.05

    def test_zero_input_not_applicable(self, grid):
        z = BoundaryField(grid, np.zeros(grid.tan_shape))
        src = mo.MorreySpec(q=2.0, mu=0.5, d=2)
        dst = mo.MorreySpec(q=6.0, mu=0.5, d=2)
        rep = mo.riesz_probe(z, 0.5, src, dst)
        assert rep.passed and rep.details["status"] == "not-applicable"

    def test_violated_relation_raises(self, grid):
        f = BoundaryField(grid, gaussian_boundary(grid))
        src = mo.MorreySpec(q=2.0, mu=0.5, d=2)
        dst = mo.MorreySpec(q=6.0, mu=0.5, d=2)
        with pytest.raises(ValueError):
            mo.riesz_probe(f, 0.77, src, dst)
