import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkdv_lab.asymptotics import (
    FitError,
    RegionError,
    compensated_W,
    decaying_norms,
    fit_decay_exponent,
    frequency_error,
    oscillatory_error,
    oscillatory_region_norms,
    partition,
    perturbation_shift,
    region_report,
    self_similar_error,
    self_similar_region_norms,
    write_region_reports,
)
from hkdv_lab.evolution import Perturbation
from hkdv_lab.linear_dispersion import DispersionModel, linear_oscillatory_leading, propagate
from hkdv_lab.self_similar import solve_Q_picard
from hkdv_lab.spectral_core import Field, Grid

M = 4


def gauss_hat(xi):
    return np.exp(-(np.asarray(xi) ** 2) / 2)


class TestPartition:
    def test_boundary_at_t1(self):
        part = partition(1.0, 4, 0.01)
        assert part.boundary == pytest.approx(1.0)

    def test_rho_and_exponent(self):
        part = partition(10.0, 4, 0.01)
        assert part.rho == pytest.approx(0.02875)
        assert part.boundary_exponent == pytest.approx(0.33625)
        assert part.boundary == pytest.approx(10.0**0.33625)

    def test_perturbed(self):
        assert perturbation_shift(4, 4.2) == pytest.approx(0.075)
        part = partition(2.0, 4, 0.01, Perturbation(4.2, 0.5))
        assert part.shift == pytest.approx(0.075)
        assert part.rho == pytest.approx(0.01)

    def test_large_p_has_no_shift(self):
        assert perturbation_shift(4, 6.0) == 0.0

    @pytest.mark.parametrize("eps", [0.0, 0.125, 0.2])
    def test_epsilon_range(self, eps):
        with pytest.raises(RegionError):
            partition(2.0, 4, eps)

    def test_early_time(self):
        with pytest.raises(RegionError):
            partition(0.5, 4, 0.01)

    def test_shift_too_large(self):
        with pytest.raises(RegionError):
            partition(2.0, 4, 0.01, Perturbation(4.0, 1.0))

    @settings(max_examples=20, deadline=None)
    @given(t=st.floats(1.0, 1e4), eps=st.floats(0.001, 0.12))
    def test_regions_partition_the_line(self, t, eps):
        part = partition(t, 4, eps)
        x = np.linspace(-3 * part.boundary, 3 * part.boundary, 101)
        total = sum(mask.astype(int) for mask in part.masks(x))
        np.testing.assert_array_equal(total, 1)
        assert part.boundary > 0


class TestRegionNorms:
    def test_zero(self):
        u = Field.zeros(Grid(256, 64.0))
        part = partition(2.0, M, 0.05)
        assert decaying_norms(u, part) == (0.0, 0.0)
        assert self_similar_region_norms(u, part) == (0.0, 0.0)
        assert oscillatory_region_norms(u, part) == (0.0, 0.0)

    def test_constant_self_similar_region(self):
        g = Grid(256, 64.0)
        part = partition(16.0, M, 0.05)
        sup, _ = self_similar_region_norms(Field(g, np.ones(g.n)), part)
        assert sup == pytest.approx(2.0)

    def test_empty_region(self):
        part = partition(1e6, M, 0.01)
        with pytest.raises(RegionError):
            decaying_norms(Field.zeros(Grid(64, 32.0)), part)


class TestErrors:
    def test_exact_self_similar_profile(self):
        q = solve_Q_picard(0.05, M)
        # the interpolant drops the Nyquist mode, so the exact profile must not carry one
        spec = q.Q.spectrum.copy()
        spec[q.grid_y.nyquist_mask] = 0
        q = dataclasses.replace(q, Q=Field.from_spectrum(q.grid_y, spec, real=True))
        t = 16.0
        s = t ** (1 / M)
        grid = Grid(q.grid_y.n, q.grid_y.length * s)
        u = Field(grid, q.Q.values / s)
        part = partition(t, M, 0.05)
        sup, l2 = self_similar_error(u, q, part)
        assert sup < 1e-10 and l2 < 1e-10

    def test_self_similar_window_check(self):
        q = solve_Q_picard(0.05, M, window=0.1)
        u = Field.zeros(Grid(q.grid_y.n, q.grid_y.length * 2))
        with pytest.raises(RegionError):
            self_similar_error(u, q, partition(16.0, M, 0.05))

    def test_exact_oscillatory_term(self):
        g = Grid(4096, 1024.0)
        t = 8.0
        part = partition(t, M, 0.05)
        right = part.masks(g.x)[2]
        vals = np.zeros(g.n)
        vals[right] = linear_oscillatory_leading(gauss_hat, t, g.x[right], M)
        sup, l2 = oscillatory_error(Field(g, vals), gauss_hat, part)
        assert sup == 0.0 and l2 == 0.0

    def test_exact_frequency_profile(self):
        g = Grid(1024, 256.0)
        t = 4.0
        u = propagate(Field.from_function(g, lambda x: np.exp(-(x**2) / 2)), t, DispersionModel(M))
        W = compensated_W(u, t, M)
        sup, l2 = frequency_error(u, W, partition(t, M, 0.05))
        assert sup < 1e-14 and l2 < 1e-14

    def test_compensated_W_recovers_data(self):
        g = Grid(1024, 256.0)
        u0 = Field.from_function(g, lambda x: np.exp(-(x**2) / 2))
        t = 3.0
        W = compensated_W(propagate(u0, t, DispersionModel(M)), t, M)
        np.testing.assert_allclose(W.values, gauss_hat(W.xi), atol=1e-12)

    def test_table_beyond_band(self):
        g = Grid(1024, 256.0)
        t = 1.0
        u = propagate(Field.from_function(g, lambda x: np.exp(-(x**2) / 2)), t, DispersionModel(M))
        W = compensated_W(u, t, M)
        sup, l2 = oscillatory_error(u, W, partition(t, M, 0.05))
        assert np.isfinite(sup) and np.isfinite(l2)


class TestReport:
    def test_report_and_json(self, tmp_path):
        g = Grid(1024, 256.0)
        t = 4.0
        u = propagate(Field.from_function(g, lambda x: 0.1 * np.exp(-(x**2) / 2)), t, DispersionModel(M))
        W = compensated_W(u, t, M)
        rep = region_report(u, partition(t, M, 0.05), W=W, bound=1.0)
        assert rep.is_finite()
        assert rep.verdicts["err_xi"]["pass"]
        assert set(rep.region_norms()) == {
            "decaying_sup", "decaying_l2", "self_similar_sup", "self_similar_l2", "oscillatory_sup", "oscillatory_l2"
        }
        path = write_region_reports(tmp_path / "r.json", [rep], extra={"eps": 0.05})
        data = json.loads(path.read_text())
        assert data["eps"] == 0.05 and data["reports"][0]["t"] == t


class TestFit:
    def test_exact_power(self):
        t = np.geomspace(1, 1000, 12)
        fit = fit_decay_exponent(list(zip(t, 3 * t**-0.25)))
        assert fit.slope == pytest.approx(-0.25, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
        assert fit.stderr < 1e-12 and fit.n == 12

    def test_log_periodic_perturbation(self):
        t = np.geomspace(1, 1000, 40)
        v = t**-0.5 * (1 + 0.1 * np.sin(np.log(t)))
        assert fit_decay_exponent(list(zip(t, v))).slope == pytest.approx(-0.5, abs=0.03)

    @pytest.mark.parametrize(
        "series",
        [
            [(1.0, 1.0)] * 3,
            list(zip(np.geomspace(1, 10, 8), np.ones(8))),
            list(zip(np.geomspace(1, 100, 8), -np.ones(8))),
            [(1.0, 2.0, 3.0)] * 8,
        ],
    )
    def test_rejects(self, series):
        with pytest.raises(FitError):
            fit_decay_exponent(series)
