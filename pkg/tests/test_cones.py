"""Cone membership, calibration and operator invariance."""

import numpy as np
import pytest

from intermap.cones import (ConeParams, calibrate_first_order, cone_floor_bound,
                            first_order_margin, invariance_harness,
                            iterate_infimum, lower_bound_margin, make_cone_trials)
from intermap.grid import cell_derivative
from intermap.maps import MapParams
from intermap.transfer import assemble_branch_transfer


def test_params_validation():
    with pytest.raises(ValueError):
        ConeParams(a1=-1.0)
    with pytest.raises(ValueError):
        ConeParams(delta=0.7)
    ratios = ConeParams(a1=1, b1=1, a2=10, b2=10, a3=100, b3=100).ratio_report()
    assert ratios["second_vs_first"] == pytest.approx(10.0)
    assert ratios["third_vs_second"] == pytest.approx(10.0)


class TestFirstOrderMembership:
    def test_constant_is_member(self, operator_cache):
        # constants lie in the cone once the upper bound 2 h m(phi)
        # clears 1, which it does since h stays above 1/2
        _, res = operator_cache(0.3, "medium")
        g = res.density.grid
        vals = np.ones(g.size)
        out = first_order_margin(vals, np.zeros(g.size), ConeParams(a1=1, b1=1),
                                 res.density.values, g.centers, g.widths)
        assert out.member

    def test_linear_fails_tiny_constants(self, operator_cache):
        # phi = x increases through the neutral point; with tiny (a1, b1)
        # the derivative condition fails near 0
        _, res = operator_cache(0.3, "medium")
        g = res.density.grid
        cp = ConeParams(a1=1e-4, b1=1e-4)
        out = first_order_margin(g.centers.copy(), np.ones(g.size), cp,
                                 res.density.values, g.centers, g.widths)
        assert not out.member
        assert out.margin < 0
        assert out.failing_condition == "derivative"

    def test_density_is_member_for_large_constants(self, operator_cache):
        # h itself joins the cone once (a1, b1) clear a finite threshold
        _, res = operator_cache(0.3, "medium")
        g = res.density.grid
        h = res.density.values
        dh = cell_derivative(h, g)
        assert first_order_margin(h, dh, ConeParams(a1=8, b1=8), h,
                                  g.centers, g.widths).member
        small = first_order_margin(h, dh, ConeParams(a1=1e-3, b1=1e-3), h,
                                   g.centers, g.widths)
        assert not small.member


class TestInvarianceHarness:
    def test_full_operator_first_order(self, operator_cache):
        p = MapParams(0.3)
        _, res = operator_cache(0.3, "medium")
        g = res.density.grid
        h = res.density.values
        cp = calibrate_first_order(p, g, h, trial_count=10, seed=11)
        report = invariance_harness("L", "first_order", cp, p, g, h,
                                    trial_count=30, seed=12)
        assert report.pass_rate == 1.0
        assert report.inflation == 1.0
        assert report.margins.min() >= -1e-8

    def test_report_csv(self, operator_cache):
        p = MapParams(0.3)
        _, res = operator_cache(0.3, "medium")
        g = res.density.grid
        h = res.density.values
        report = invariance_harness("L", "first_order", ConeParams(a1=8, b1=8),
                                    p, g, h, trial_count=5, seed=3)
        lines = report.to_csv().strip().split("\n")
        assert lines[0] == "trial_id,cone,operator,margin,pass"
        assert len(lines) == 6

    def test_branch_mass_identity(self, operator_cache):
        # the branch masses of any density recombine to the full mass:
        # for the two-branch family the slack in the (d-1) inequality
        # closes to an equality
        p = MapParams(0.3)
        _, res = operator_cache(0.3, "medium")
        g = res.density.grid
        rng = np.random.default_rng(5)
        # decreasing nonnegative trials (the cone the inequality needs)
        for _ in range(5):
            steps = rng.random(g.size)
            phi = np.sort(steps)[::-1]
            mass = float(np.sum(phi * g.widths))
            branch_masses = [
                float(np.sum(assemble_branch_transfer(p, i, g).apply_values(phi)
                             * g.widths)) for i in (1, 2)]
            total = sum(branch_masses)
            assert mass <= (p.d - 1) * total + 1e-10
            assert total == pytest.approx(mass, abs=1e-10)

    def test_lower_bound_cone(self, operator_cache):
        # the ratio phi / m(phi) near the neutral point survives the
        # operator at the measured level
        p = MapParams(0.3)
        mat, res = operator_cache(0.3, "medium")
        g = res.density.grid
        h = res.density.values
        trials = make_cone_trials(p, g, h, ConeParams(a1=8, b1=8), 10, seed=9)
        gammas_pre, gammas_post = [], []
        cp = ConeParams(a1=8, b1=8, delta=0.05)
        for vals, _ in trials:
            pre = lower_bound_margin(vals, cp, g.centers, g.widths)
            img = mat.apply_values(vals)
            post = lower_bound_margin(img, cp, g.centers, g.widths)
            mass = float(np.sum(vals * g.widths))
            near = np.minimum(g.centers, 1 - g.centers) <= cp.delta
            gammas_pre.append(vals[near].min() / mass)
            mass_post = float(np.sum(img * g.widths))
            gammas_post.append(img[near].min() / mass_post)
        gamma_est = min(gammas_pre)
        assert gamma_est > 0
        assert min(gammas_post) >= gamma_est - 1e-8


def test_floor_bound_formula():
    cp = ConeParams(a1=2.0, b1=3.0)
    assert cone_floor_bound(cp, 0.1) == pytest.approx(
        0.1 ** 2 / (2 * np.exp(3.0 * 0.9)))


def test_iterate_infimum_positive(operator_cache):
    mat, _ = operator_cache(0.3, "medium")
    inf_l1 = iterate_infimum(mat, n_max=200)
    assert inf_l1 > 0
    # the doubling map fixes constants, so the infimum is exactly 1
    mat0, _ = operator_cache(0.0, "medium")
    assert iterate_infimum(mat0, n_max=20) == pytest.approx(1.0, abs=1e-12)
