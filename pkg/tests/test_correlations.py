"""Correlation sequences and decay-rate fits."""

import numpy as np
import pytest

from intermap.correlations import (DegenerateFitError, correlation_sequence,
                                   fit_decay, smooth_bump)
from intermap.maps import MapParams


def psi_cos(x):
    return np.cos(2.0 * np.pi * np.asarray(x, dtype=float))


def psi_one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def zero_mean_bump(grid):
    phi = smooth_bump(grid.centers, 0.5, 0.3)
    return phi - np.sum(phi * grid.widths)


class TestCorrelationSequence:
    def test_mass_conservation_floor(self, operator_cache):
        mat, res = operator_cache(0.3, "medium")
        g = res.density.grid
        seq = correlation_sequence(MapParams(0.3), zero_mean_bump(g), psi_one,
                                   g, n_max=50, matrix=mat)
        assert np.all(seq <= 1e-10)

    def test_doubling_invariant_trial_is_silent(self, operator_cache):
        # at alpha = 0 the density is 1, so the h-1 trial is numerically
        # zero and so is its correlation sequence
        mat, res = operator_cache(0.0, "medium")
        g = res.density.grid
        phi = res.density.values - 1.0
        phi -= np.sum(phi * g.widths)
        seq = correlation_sequence(MapParams(0.0), phi, psi_cos, g, n_max=50,
                                   matrix=mat)
        assert np.all(seq <= 1e-8)

    def test_decreasing_beyond_burn_in(self, operator_cache):
        mat, res = operator_cache(0.5, "medium", tol=1e-9)
        g = res.density.grid
        phi = res.density.values - 1.0
        phi -= np.sum(phi * g.widths)
        seq = correlation_sequence(MapParams(0.5), phi, psi_cos, g, n_max=500,
                                   matrix=mat)
        med = np.array([np.median(seq[max(0, i - 2):i + 3])
                        for i in range(len(seq))])
        assert np.all(np.diff(med[10:]) <= 1e-12)

    def test_rejects_nonzero_mean(self, operator_cache):
        mat, res = operator_cache(0.3, "medium")
        g = res.density.grid
        with pytest.raises(ValueError):
            correlation_sequence(MapParams(0.3), np.ones(g.size), psi_cos, g,
                                 n_max=10, matrix=mat)


class TestFitDecay:
    def test_singular_trial_slow_rate(self, operator_cache):
        # h - 1 carries the neutral-point charge: rate 1 - 1/alpha
        mat, res = operator_cache(0.5, "medium", tol=1e-9)
        g = res.density.grid
        phi = res.density.values - 1.0
        phi -= np.sum(phi * g.widths)
        seq = correlation_sequence(MapParams(0.5), phi, psi_cos, g,
                                   n_max=2000, matrix=mat)
        fit = fit_decay(seq, window=(50, 2000), alpha=0.5)
        assert fit.exponent == pytest.approx(-1.0, abs=0.25)

    def test_bump_trial_sharp_rate(self, operator_cache):
        # a trial supported away from the neutral point loses the
        # charge and decays at the faster sharp rate ~ n^(-1/alpha);
        # the fit must land at least as steep as the generic rate
        mat, res = operator_cache(0.5, "medium", tol=1e-9)
        g = res.density.grid
        seq = correlation_sequence(MapParams(0.5), zero_mean_bump(g), psi_cos,
                                   g, n_max=2000, matrix=mat)
        fit = fit_decay(seq, window=(50, 2000), alpha=0.5)
        assert fit.exponent <= -1.0 + 0.25
        assert fit.exponent == pytest.approx(-2.0, abs=0.5)

    def test_geometric_input_prefers_geometric(self):
        n = np.arange(1, 400)
        seq = 2.0 ** -n
        fit = fit_decay(seq, window=(10, 300))
        assert fit.prefers_geometric
        assert fit.geometric_rate == pytest.approx(0.5, rel=1e-6)

    def test_degenerate_window(self):
        with pytest.raises(DegenerateFitError):
            fit_decay(np.ones(30), window=(25, 29))

    def test_csv(self, operator_cache):
        mat, res = operator_cache(0.5, "medium", tol=1e-9)
        g = res.density.grid
        seq = correlation_sequence(MapParams(0.5), zero_mean_bump(g), psi_cos,
                                   g, n_max=200, matrix=mat)
        fit = fit_decay(seq, window=(20, 200), alpha=0.5)
        lines = fit.to_csv().strip().split("\n")
        assert lines[0] == "n,correlation"
        assert len(lines) == len(fit.n) + 1


def test_rate_ordering(operator_cache):
    # slower decay for stickier maps
    exps = {}
    for alpha, tol in ((0.3, 1e-10), (0.5, 1e-9)):
        mat, res = operator_cache(alpha, "medium", tol=tol)
        g = res.density.grid
        phi = res.density.values - 1.0
        phi -= np.sum(phi * g.widths)
        seq = correlation_sequence(MapParams(alpha), phi, psi_cos, g,
                                   n_max=1500, matrix=mat)
        exps[alpha] = fit_decay(seq, window=(50, 1500), alpha=alpha).exponent
    assert exps[0.3] < exps[0.5]
