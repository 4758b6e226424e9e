"""Closed forms of the map family against hand values and difference
quotients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intermap import maps
from intermap.maps import (InverseSolverError, MapParams, branch_inverse,
                           branch_inverse_derivative, dalpha_branch_inverse,
                           dalpha_branch_inverse_derivative, envelope_constant,
                           map_derivative, map_value, parameter_velocity,
                           partition_sequences, pullback_velocity)


def test_params_validation():
    with pytest.raises(ValueError):
        MapParams(alpha=1.0)
    with pytest.raises(ValueError):
        MapParams(alpha=-0.1)
    with pytest.raises(NotImplementedError):
        MapParams(alpha=0.3, d=3, branch_endpoints=(0.0, 0.3, 0.6, 1.0))
    assert MapParams(0.3).neutral_branches == (1, 2)


class TestMapValue:
    def test_fixed_point(self):
        for a in np.linspace(0.0, 0.98, 21):
            assert map_value(MapParams(a), 0.0) == 0.0

    def test_doubling(self):
        # alpha = 0 reduces to x -> 2x mod 1
        assert map_value(MapParams(0.0), 0.25) == pytest.approx(0.5, abs=1e-15)
        assert map_value(MapParams(0.0), 0.75) == pytest.approx(0.5, abs=1e-15)

    def test_hand_values(self):
        # first branch: x (1 + 2^a x^a); second: x - 2^a (1-x)^(a+1)
        p = MapParams(0.5)
        assert map_value(p, 0.25) == pytest.approx(0.25 * (1 + np.sqrt(2) * 0.5),
                                                   abs=1e-12)
        assert map_value(p, 0.75) == pytest.approx(0.75 - np.sqrt(2) * 0.25 ** 1.5,
                                                   abs=1e-12)

    def test_monotone_on_branches(self):
        p = MapParams(0.4)
        xs = np.linspace(1e-6, 0.5 - 1e-6, 500)
        assert np.all(np.diff(map_value(p, xs)) > 0)
        xs = np.linspace(0.5 + 1e-6, 1 - 1e-6, 500)
        vals = map_value(p, xs)
        assert np.all(np.diff(vals) > 0)

    def test_circle_continuity_at_half(self):
        p = MapParams(0.3)
        below = map_value(p, 0.5 - 1e-12)
        assert below > 1 - 1e-11 or below < 1e-11  # approaches 1 ~ 0
        assert map_value(p, 0.5) == pytest.approx(0.0, abs=1e-11)


class TestMapDerivative:
    def test_neutral(self):
        # f'(0) = 1 on a 50-value alpha grid (alpha > 0; at alpha = 0 the
        # family degenerates to the doubling map with slope 2)
        for a in np.linspace(0.02, 0.98, 50):
            assert map_derivative(MapParams(a), 0.0, 1) == 1.0
        assert map_derivative(MapParams(0.0), 0.0, 1) == 2.0

    def test_doubling_slope(self):
        assert map_derivative(MapParams(0.0), 0.3, 1) == pytest.approx(2.0)

    def test_hand_value(self):
        got = map_derivative(MapParams(0.5), 0.25, 1)
        assert got == pytest.approx(1 + 2 ** 0.5 * 1.5 * 0.25 ** 0.5, abs=1e-12)

    def test_expansion(self):
        for a in (0.1, 0.5, 0.9):
            xs = np.linspace(1e-9, 1 - 1e-9, 2001)
            assert np.all(map_derivative(MapParams(a), xs, 1) > 1.0)

    def test_endpoint_order2_raises(self):
        with pytest.raises(ValueError):
            map_derivative(MapParams(0.3), 0.5, 2)

    @pytest.mark.parametrize("order", [2, 3])
    def test_fd_crosscheck(self, order):
        p = MapParams(0.37)
        h = 1e-6
        for x in (0.2, 0.3, 0.7):
            fd = (map_derivative(p, x + h, order - 1)
                  - map_derivative(p, x - h, order - 1)) / (2 * h)
            assert map_derivative(p, x, order) == pytest.approx(fd, rel=1e-6)


class TestBranchInverse:
    def test_doubling(self):
        p = MapParams(0.0)
        assert branch_inverse(p, 1, 0.5) == pytest.approx(0.25, abs=1e-15)
        assert branch_inverse(p, 2, 0.5) == pytest.approx(0.75, abs=1e-15)

    def test_inverts_hand_value(self):
        p = MapParams(0.5)
        y = 0.25 * (1 + np.sqrt(2) * 0.5)
        assert branch_inverse(p, 1, y) == pytest.approx(0.25, abs=1e-12)

    def test_neutral_endpoint(self):
        assert branch_inverse(MapParams(0.4), 1, 1e-12) <= 1e-12

    def test_random_round_trips(self):
        # 10^4 random (alpha, branch, y) triples
        rng = np.random.default_rng(3)
        for a in rng.uniform(0.0, 0.99, 20):
            p = MapParams(float(a))
            for i in (1, 2):
                y = rng.uniform(1e-6, 1 - 1e-6, 250)
                g = branch_inverse(p, i, y)
                resid = np.abs(np.asarray(maps._branch_value(p, i, g)) - y)
                assert resid.max() <= maps.TOL_INV

    @given(a=st.floats(0.0, 0.95), y=st.floats(1e-9, 1 - 1e-9),
           i=st.sampled_from([1, 2]))
    @settings(max_examples=150, deadline=None)
    def test_round_trip_property(self, a, y, i):
        p = MapParams(a)
        g = branch_inverse(p, i, y)
        lo, hi = p.branch_endpoints[i - 1], p.branch_endpoints[i]
        assert lo <= g <= hi
        assert abs(maps._branch_value(p, i, g) - y) <= maps.TOL_INV

    def test_derivative_fd(self):
        p = MapParams(0.45)
        h = 1e-6
        for i in (1, 2):
            for x in (0.2, 0.6):
                fd = (branch_inverse(p, i, x + h)
                      - branch_inverse(p, i, x - h)) / (2 * h)
                assert branch_inverse_derivative(p, i, x, 1) == pytest.approx(
                    fd, rel=1e-8)


class TestPartitionSequences:
    def test_single_inverse_step(self):
        p = MapParams(0.5)
        y = 0.25 * (1 + np.sqrt(2) * 0.5)
        seqs = partition_sequences(p, 1, z0=y)
        assert seqs.z[0] == pytest.approx(0.25, abs=1e-12)

    def test_monotone(self):
        seqs = partition_sequences(MapParams(0.6), 200)
        assert np.all(np.diff(seqs.z) < 0)
        assert np.all(np.diff(seqs.z_prime_gap) < 0)

    def test_dynamics_consistency(self):
        p = MapParams(0.3)
        seqs = partition_sequences(p, 50)
        for n in range(1, 50):
            assert map_value(p, seqs.z[n]) == pytest.approx(seqs.z[n - 1],
                                                            abs=1e-12)

    def test_asymptotic_exponent(self):
        # z_n ~ n^(-1/alpha); slope on n in [100, 10000]
        seqs = partition_sequences(MapParams(0.5), 10 ** 4)
        assert seqs.fit_exponent() == pytest.approx(-2.0, abs=0.1)

    def test_bad_z0(self):
        with pytest.raises(ValueError):
            partition_sequences(MapParams(0.3), 10, z0=0.7)


class TestParameterVelocity:
    def test_endpoint_zero(self):
        # both one-sided limits at the branch endpoint vanish
        for a in (0.0, 0.3, 0.8):
            p = MapParams(a)
            assert abs(parameter_velocity(p, np.nextafter(0.5, 0))) <= 1e-12
            assert abs(parameter_velocity(p, np.nextafter(0.5, 1))) <= 1e-12
            assert parameter_velocity(p, 0.0) == 0.0

    def test_hand_value(self):
        assert parameter_velocity(MapParams(0.0), 0.25) == pytest.approx(
            0.25 * np.log(0.5), abs=1e-12)

    def test_fd_in_alpha(self):
        h = 1e-6
        for x in (0.1, 0.3, 0.6, 0.9):
            fd = (map_value(MapParams(0.4 + h), x)
                  - map_value(MapParams(0.4 - h), x)) / (2 * h)
            assert parameter_velocity(MapParams(0.4), x) == pytest.approx(
                fd, rel=1e-7, abs=1e-12)


class TestPullbackVelocity:
    def test_composition(self):
        p = MapParams(0.5)
        y = 0.25 * (1 + np.sqrt(2) * 0.5)
        assert pullback_velocity(p, 1, y, 0) == pytest.approx(
            parameter_velocity(p, 0.25), abs=1e-12)

    def test_vanishes_at_branch_image(self):
        # x -> 1 along branch 1 pulls back to the endpoint 1/2 where the
        # velocity vanishes
        p = MapParams(0.35)
        assert abs(pullback_velocity(p, 1, 1 - 1e-9, 0)) < 1e-9

    def test_zero_raises(self):
        with pytest.raises(ValueError):
            pullback_velocity(MapParams(0.3), 1, 0.0)
        with pytest.raises(ValueError):
            pullback_velocity(MapParams(0.3), 1, 0.3, order=4)

    @pytest.mark.parametrize("order", [1, 2, 3])
    @pytest.mark.parametrize("i", [1, 2])
    def test_fd_crosscheck(self, order, i):
        p = MapParams(0.2)
        h = 1e-6
        for x in (0.3, 0.55):
            fd = (pullback_velocity(p, i, x + h, order - 1)
                  - pullback_velocity(p, i, x - h, order - 1)) / (2 * h)
            assert pullback_velocity(p, i, x, order) == pytest.approx(
                fd, rel=1e-5)

    @pytest.mark.parametrize("order", [0, 1, 2, 3])
    def test_envelope_bounded_toward_zero(self, order):
        # the measured envelope constant must not grow materially when
        # the sample range is pushed a decade closer to the singularity
        p = MapParams(0.3)
        for i in (1, 2):
            c4 = envelope_constant(p, i, order, x_lo=1e-4)
            c5 = envelope_constant(p, i, order, x_lo=1e-5)
            c6 = envelope_constant(p, i, order, x_lo=1e-6)
            assert np.isfinite(c4)
            assert c5 <= 1.2 * c4
            assert c6 <= 1.2 * c5


class TestDalphaBranchInverse:
    def test_hand_value(self):
        # doubling map: -v(1/4) / f'(1/4) = -0.25 ln(1/2) / 2
        got = dalpha_branch_inverse(MapParams(0.0), 1, 0.5)
        assert got == pytest.approx(-0.25 * np.log(0.5) / 2.0, abs=1e-10)
        assert got == pytest.approx(0.0866434, abs=1e-6)

    def test_vanishes_with_velocity(self):
        assert abs(dalpha_branch_inverse(MapParams(0.4), 1, 1 - 1e-9)) < 1e-9

    def test_fd_crosscheck(self):
        h = 1e-5
        for i in (1, 2):
            for x in (0.2, 0.4, 0.8):
                fd = (branch_inverse(MapParams(0.3 + h), i, x)
                      - branch_inverse(MapParams(0.3 - h), i, x)) / (2 * h)
                assert dalpha_branch_inverse(MapParams(0.3), i, x) == \
                    pytest.approx(fd, rel=1e-4)

    def test_commutation(self):
        # d_alpha(g') agrees with (d_alpha g)' away from the singularity
        p = MapParams(0.3)
        h = 1e-5
        for i in (1, 2):
            for x in (0.25, 0.5, 0.75):
                dag_prime = (branch_inverse_derivative(MapParams(0.3 + h), i, x, 1)
                             - branch_inverse_derivative(MapParams(0.3 - h), i, x, 1)
                             ) / (2 * h)
                dgx = (dalpha_branch_inverse(p, i, x + h)
                       - dalpha_branch_inverse(p, i, x - h)) / (2 * h)
                assert dag_prime == pytest.approx(dgx, rel=1e-3)
                closed = dalpha_branch_inverse_derivative(p, i, x)
                assert closed == pytest.approx(dag_prime, rel=1e-4)
