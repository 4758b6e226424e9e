"""Skew-product dynamics, fiber envelopes and statistical stability."""

import math

import numpy as np
import pytest

from intermap.grid import lebesgue_integral
from intermap.maps import MapParams, map_value
from intermap.response import response_formula
from intermap.solenoid import (OrbitConfig, SolenoidState, fiber_envelope,
                               orbit_ensemble_mean, solenoid_step,
                               srb_expectation, stability_experiment)


def psi_cos(x):
    return np.cos(2.0 * np.pi * np.asarray(x, dtype=float))


class TestStep:
    def test_base_semiconjugacy_bitexact(self):
        p = MapParams(0.37)
        rng = np.random.default_rng(0)
        for x in rng.random(200):
            s = SolenoidState(float(x), 0.3, -0.4)
            assert solenoid_step(p, s).x == map_value(p, s.x)

    def test_fiber_contraction_exact(self):
        p = MapParams(0.2)
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = float(rng.random())
            y1, z1, y2, z2 = rng.uniform(-0.7, 0.7, 4)
            s1 = solenoid_step(p, SolenoidState(x, y1, z1))
            s2 = solenoid_step(p, SolenoidState(x, y2, z2))
            pre = math.hypot(y1 - y2, z1 - z2)
            post = math.hypot(s1.y - s2.y, s1.z - s2.z)
            assert abs(post - pre / 5.0) <= 1e-14

    def test_neutral_fiber_fixed_point(self):
        # over x = 0 the fiber map is affine with fixed point (5/8, 0)
        p = MapParams(0.4)
        s = solenoid_step(p, SolenoidState(0.0, 0.625, 0.0))
        assert (s.x, s.y, s.z) == (0.0, 0.625, 0.0)

    def test_disk_confinement_long_orbits(self):
        # 10^6 steps split over parallel orbits never leave the disk
        p = MapParams(0.5)
        rng = np.random.default_rng(2)
        n_orbits = 100
        x = rng.random(n_orbits)
        r = np.sqrt(rng.random(n_orbits))
        th = 2 * np.pi * rng.random(n_orbits)
        y, z = r * np.cos(th), r * np.sin(th)
        from intermap.solenoid import _step_arrays
        for _ in range(10 ** 4):
            x, y, z = _step_arrays(p, x, y, z)
            assert np.all(y * y + z * z <= 1.0)

    def test_state_validation(self):
        with pytest.raises(ValueError):
            SolenoidState(0.2, 1.0, 0.5)


class TestEnvelope:
    def test_gap_contracts_with_depth(self):
        # each extra iteration shrinks the fiber by 5x; binning noise
        # absorbs at most a factor 5/4
        p = MapParams(0.3)
        gaps = [fiber_envelope(p, lambda x, y, z: y, k, x_bins=64,
                               n_fiber=32, seed=4).max_gap
                for k in (2, 3, 4, 5)]
        for wide, tight in zip(gaps, gaps[1:]):
            assert tight <= wide / 4.0

    def test_requires_depth(self):
        with pytest.raises(ValueError):
            fiber_envelope(MapParams(0.3), lambda x, y, z: y, 0)


class TestSrbExpectation:
    def test_constant_observable(self, operator_cache):
        _, res = operator_cache(0.2, "medium")
        est = srb_expectation(MapParams(0.2), lambda x, y, z: np.ones_like(x),
                              res.density, k_depth=6, x_bins=64, n_fiber=16,
                              orbit=OrbitConfig(orbit_length=10 ** 5,
                                                burn_in=500, n_streams=32,
                                                seed=5))
        assert est.birkhoff == pytest.approx(1.0, abs=1e-12)
        assert est.lift == pytest.approx(1.0, abs=1e-12)

    def test_base_observable_matches_base_density(self, operator_cache):
        _, res = operator_cache(0.2, "medium")
        est = srb_expectation(MapParams(0.2), lambda x, y, z: psi_cos(x),
                              res.density, k_depth=10,
                              orbit=OrbitConfig(orbit_length=10 ** 6,
                                                burn_in=2000, n_streams=64,
                                                seed=6))
        exact = lebesgue_integral(res.density, psi_cos)
        assert abs(est.birkhoff - exact) <= 3.0 * est.birkhoff_se
        # the lift pushes the base observable straight through
        assert est.lift == pytest.approx(exact, abs=5e-3)

    def test_reproducible(self, operator_cache):
        _, res = operator_cache(0.2, "medium")
        cfg = OrbitConfig(orbit_length=10 ** 4, burn_in=100, n_streams=16,
                          seed=7)
        a = orbit_ensemble_mean(MapParams(0.2), lambda x, y, z: y, cfg)
        b = orbit_ensemble_mean(MapParams(0.2), lambda x, y, z: y, cfg)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[2], b[2])

    def test_fiber_mean_identity(self, operator_cache):
        # integrating y against the attractor measure telescopes to
        # (5/8) integral cos(2 pi x) d mu: a closed-form consistency
        # anchor between fiber and base statistics
        _, res = operator_cache(0.2, "medium")
        est = srb_expectation(MapParams(0.2), lambda x, y, z: y,
                              res.density, k_depth=12,
                              orbit=OrbitConfig(orbit_length=2 * 10 ** 6,
                                                burn_in=5000, n_streams=128,
                                                seed=8))
        base = lebesgue_integral(res.density, psi_cos)
        expect = (5.0 / 8.0) * base  # geometric series over the 1/5 fiber
        assert abs(est.birkhoff - expect) <= 4.0 * est.birkhoff_se
        assert est.lift == pytest.approx(expect, abs=5e-3)


class TestStability:
    def test_constant_sequence_gaps_at_noise(self, operator_cache):
        _, res = operator_cache(0.2, "medium")
        p = MapParams(0.2)
        rows = stability_experiment(
            [p], p, {"y": lambda x, y, z: y}, {0.2: res.density},
            orbit=OrbitConfig(orbit_length=10 ** 5, burn_in=500,
                              n_streams=32, seed=9), k_depth=8)
        assert rows[0]["birkhoff_gap"] == 0.0  # identical seeded runs
        assert rows[0]["lift_gap"] == 0.0

    def test_first_order_consistency_with_response(self, operator_cache,
                                                   acceptance_ctx):
        # base-observable stability gaps shrink linearly with the
        # parameter gap, at the rate the response formula predicts
        alphas = (0.25, 0.22)
        dens = {a: acceptance_ctx.density(a).density for a in alphas + (0.2,)}
        p0 = MapParams(0.2)
        rows = stability_experiment(
            [MapParams(a) for a in alphas], p0,
            {"cos": lambda x, y, z: psi_cos(x)},
            dens, orbit=OrbitConfig(orbit_length=10 ** 5, burn_in=10 ** 3,
                                    n_streams=32, seed=10), k_depth=12)
        grid = acceptance_ctx.grid
        rep = response_formula(p0, psi_cos, grid,
                               matrix=acceptance_ctx.matrix(0.2),
                               density=acceptance_ctx.density(0.2))
        for row in rows:
            predicted = abs(rep.formula_value) * (row["alpha"] - 0.2)
            assert row["lift_gap"] == pytest.approx(predicted,
                                                    rel=0.5, abs=5e-4)
