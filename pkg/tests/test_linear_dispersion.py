import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import airy, gamma

from hkdv_lab.fitting import fit_decay_exponent
from hkdv_lab.linear_dispersion import (
    DispersionModel,
    q0_at_zero,
    q0_derivative_envelope_check,
    q0_eval,
    linear_decay_report,
    linear_oscillatory_leading,
    propagate,
    tabulate_q0,
)
from hkdv_lab.spectral_core import Field, Grid, norm


class TestModel:
    @pytest.mark.parametrize("m", [3, 4, 5, 6])
    def test_symbol_hermitian(self, m):
        xi = np.linspace(-3, 3, 13)
        s = DispersionModel(m).symbol(xi)
        np.testing.assert_allclose(s[::-1], np.conj(s), atol=1e-13)

    @pytest.mark.parametrize("m", [2, 3.5])
    def test_bad_order(self, m):
        with pytest.raises(ValueError):
            DispersionModel(m)


class TestPropagate:
    def test_zero_time_identity(self):
        g = Grid(64, 10.0)
        f = Field.from_function(g, lambda x: np.exp(-(x**2)))
        assert propagate(f, 0.0, DispersionModel(4)) is f

    @pytest.mark.parametrize("m", [4, 5])
    def test_single_mode_phase(self, m):
        g = Grid(64, 2 * math.pi)
        k, t = 3.0, 0.37
        f = Field.from_function(g, lambda x: np.exp(1j * k * x))
        out = propagate(f, t, DispersionModel(m))
        np.testing.assert_allclose(out.values, np.exp(-1j * t * k**m / m) * f.values, atol=1e-12)

    def test_unitary_at_large_time(self):
        g = Grid(512, 100.0)
        f = Field(g, np.random.default_rng(0).standard_normal(g.n))
        interior = Field.from_spectrum(g, np.where(g.nyquist_mask, 0, f.spectrum))
        out = propagate(f, 1000.0, DispersionModel(4))
        assert norm(out) == pytest.approx(norm(interior), rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(t1=st.floats(0.1, 5.0), t2=st.floats(0.1, 5.0))
    def test_group_property(self, t1, t2):
        g = Grid(128, 40.0)
        f = Field.from_function(g, lambda x: np.exp(-(x**2) / 4))
        model = DispersionModel(4)
        a = propagate(propagate(f, t1, model), t2, model)
        b = propagate(f, t1 + t2, model)
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)


class TestQ0:
    def test_airy_at_zero(self):
        assert q0_eval(0.0, 3).value == pytest.approx(0.3550280539, abs=1e-8)

    def test_m5_closed_form(self):
        closed = 5 ** 0.2 * gamma(1.2) * math.cos(math.pi / 10) / math.pi
        assert q0_eval(0.0, 5).value == pytest.approx(closed, abs=1e-8)

    @pytest.mark.parametrize("m", [3, 4, 5, 6])
    def test_closed_form_helper(self, m):
        assert q0_at_zero(m) == pytest.approx(float(q0_eval(0.0, m).value), abs=1e-8)

    def test_left_decay(self):
        assert abs(q0_eval(-20.0, 4).value) <= 1e-6

    def test_airy_profile(self):
        # Q_0 for m = 3 is Ai(-y)
        y = np.array([-4.0, -1.0, 0.5, 2.0, 7.5, 15.0])
        np.testing.assert_allclose(q0_eval(y, 3).value, airy(-y)[0], atol=1e-9)

    def test_linear_profile_equation(self):
        # |d|^{m-1} Q_0 = y Q_0
        y = np.array([-3.0, -0.5, 0.0, 1.0, 4.0, 9.0])
        lhs = q0_eval(y, 4, k=3, absolute=True).value
        np.testing.assert_allclose(lhs, y * q0_eval(y, 4).value, atol=1e-8)

    def test_envelope_at_origin(self):
        rep = q0_derivative_envelope_check(4, 0, [0.0])
        assert rep["sup_ratio"] == pytest.approx(abs(q0_at_zero(4)), abs=1e-9)

    def test_envelope_m3_bounded(self):
        rep = q0_derivative_envelope_check(3, 0, np.linspace(-50, 50, 401))
        assert rep["sup_ratio"] <= 1.0

    def test_envelope_stable_under_wider_range(self):
        a = q0_derivative_envelope_check(4, 1, np.linspace(-50, 50, 201))
        b = q0_derivative_envelope_check(4, 1, np.linspace(-100, 100, 401))
        assert abs(b["sup_ratio"] / a["sup_ratio"] - 1) < 0.05

    def test_envelope_rejects_bad_k(self):
        with pytest.raises(ValueError):
            q0_derivative_envelope_check(4, 3, [0.0])

    def test_rejects_small_m(self):
        with pytest.raises(ValueError):
            q0_eval(0.0, 2)

    def test_tabulate(self, tmp_path):
        path = tabulate_q0(tmp_path / "q0.csv", 4, [0.0, 1.0])
        lines = path.read_text().splitlines()
        assert lines[0] == "m,y,Q0,abs_err_estimate"
        assert len(lines) == 3


@pytest.fixture(scope="module")
def solution():
    g = Grid(2**16, 2**14)
    u0 = Field.from_function(g, lambda x: np.exp(-(x**2) / 2))
    t = 8.0
    return g, propagate(u0, t, DispersionModel(4)), t


class TestLeadingTerm:
    M = 4

    def test_zero_data(self):
        out = linear_oscillatory_leading(lambda xi: np.zeros_like(xi), 2.0, np.array([1.0, 5.0]), 4)
        np.testing.assert_array_equal(out, 0.0)

    def test_rejects_nonpositive_x(self):
        with pytest.raises(ValueError):
            linear_oscillatory_leading(lambda xi: xi, 1.0, np.array([0.0]), 4)

    def _rel_error(self, solution, z):
        g, ut, t = solution
        x0 = z * t ** (1 / self.M)
        sel = np.abs(g.x - x0) <= 2.0
        lead = linear_oscillatory_leading(lambda xi: np.exp(-(xi**2) / 2), t, g.x[sel], self.M)
        return np.max(np.abs(ut.values[sel] - lead)) / np.max(np.abs(ut.values[sel]))

    def test_ten_percent_at_z50(self, solution):
        assert self._rel_error(solution, 50.0) <= 0.10

    def test_error_decreases(self, solution):
        errs = [self._rel_error(solution, z) for z in (20.0, 40.0, 80.0)]
        assert errs[0] > errs[1] > errs[2]


class TestDecayReport:
    def test_exact_power_law(self):
        t = np.geomspace(1, 1000, 10)
        fit = fit_decay_exponent(list(zip(t, t ** (-1 / 3))))
        assert fit.slope == pytest.approx(-1 / 3, abs=1e-12)

    def test_gaussian_m4(self):
        g = Grid(2**20, 2.0**20 * 0.45)
        u0 = Field.from_function(g, lambda x: np.exp(-(x**2) / 0.5))
        rep = linear_decay_report(u0, DispersionModel(4), np.geomspace(10, 1000, 7), ks=[0, 1])
        assert rep[0]["slope"] == pytest.approx(-0.25, abs=0.02)
        assert rep[1]["slope"] == pytest.approx(-0.50, abs=0.02)
        assert [t for t, _ in rep[0]["series"]] == pytest.approx(list(np.geomspace(10, 1000, 7)))

    def test_time_validation(self):
        g = Grid(64, 10.0)
        u0 = Field.zeros(g)
        with pytest.raises(ValueError):
            linear_decay_report(u0, DispersionModel(4), [0.5, 10, 100])
        with pytest.raises(ValueError):
            linear_decay_report(u0, DispersionModel(4), [1, 2, 3])
