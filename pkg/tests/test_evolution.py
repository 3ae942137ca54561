import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkdv_lab.evolution import (
    BoundaryWarning,
    NonlinearitySpec,
    Perturbation,
    SolverState,
    bootstrap_weight_exponent,
    bootstrap_weighted_sup,
    conserved_quantities,
    dyadic_schedule,
    evolve,
    outer_mass_fraction,
    rhs_nonlinear,
    sigma_norm,
    step,
)
from hkdv_lab.linear_dispersion import DispersionModel, propagate
from hkdv_lab.spectral_core import Field, Grid, fractional_derivative, norm

M = 4
MODEL = DispersionModel(M)
NONLIN = NonlinearitySpec(M)


def gaussian(grid, amp=0.5, width=2.0):
    return Field.from_function(grid, lambda x: amp * np.exp(-(x**2) / (2 * width**2)))


class TestPerturbation:
    def test_odd_form(self):
        f = Perturbation(4.5, 2.0)
        np.testing.assert_allclose(f(np.array([-2.0, 0.0, 2.0])), [-2 * 2**4.5, 0, 2 * 2**4.5])

    def test_plain_form_and_antiderivative(self):
        f = Perturbation(5, 1.5, form="plain")
        u = np.linspace(-1, 1, 11)
        np.testing.assert_allclose(f(u), 1.5 * u**5)
        np.testing.assert_allclose(f.antiderivative(u), 1.5 * u**6 / 6)

    def test_antiderivative_matches_numerical(self):
        f = Perturbation(4.2, 0.7)
        u = np.linspace(-1.2, 1.2, 9)
        h = 1e-6
        num = (f.antiderivative(u + h) - f.antiderivative(u - h)) / (2 * h)
        np.testing.assert_allclose(num, f(u), atol=1e-8)

    def test_derivative_bound_zero_input(self):
        assert Perturbation(5.0, 1.0).derivative_bound_check(np.zeros(4)) == 0.0

    def test_needs_p_above_m(self):
        with pytest.raises(ValueError):
            NonlinearitySpec(4, perturbation=Perturbation(3.5, 1.0))


class TestRhs:
    def test_zero(self):
        g = Grid(64, 20.0)
        assert norm(rhs_nonlinear(Field.zeros(g), NONLIN), "linf") == 0

    def test_constant(self):
        g = Grid(64, 20.0)
        out = rhs_nonlinear(Field(g, np.full(g.n, 0.3)), NONLIN)
        assert norm(out, "linf") < 1e-14

    def test_mean_zero(self):
        g = Grid(128, 40.0)
        out = rhs_nonlinear(gaussian(g), NonlinearitySpec(M, perturbation=Perturbation(5.0, 1.0)))
        assert abs(np.sum(out.values) * g.dx) < 1e-14

    def test_matches_pointwise_derivative(self):
        g = Grid(256, 60.0)
        u = gaussian(g)
        exact = M * u.values ** (M - 1) * (-g.x / 4) * u.values
        np.testing.assert_allclose(rhs_nonlinear(u, NONLIN).values, exact, atol=1e-12)


class TestStepAndEvolve:
    def test_zero_data_stays_zero(self):
        g = Grid(64, 32.0)
        traj = evolve(SolverState(0.0, Field.zeros(g), MODEL, NONLIN), 5.0)
        assert norm(traj.snapshots[-1].u, "linf") == 0

    def test_linear_only_matches_propagator(self):
        g = Grid(512, 256.0)
        u0 = gaussian(g)
        lin = NonlinearitySpec(M, strength=0.0)
        traj = evolve(SolverState(0.0, u0, MODEL, lin), 10.0)
        np.testing.assert_allclose(traj.snapshots[-1].u.values, propagate(u0, 10.0, MODEL).values, atol=1e-10)

    def test_endpoints_without_observers(self):
        g = Grid(64, 32.0)
        traj = evolve(SolverState(0.0, gaussian(g, 0.1), MODEL, NONLIN), 2.0)
        np.testing.assert_allclose(traj.times, [0.0, 2.0])

    def test_schedule_and_observers(self):
        g = Grid(64, 32.0)
        seen = []

        def obs(snap, _state):
            seen.append(snap.t)
            return {"l2": norm(snap.u)}

        traj = evolve(SolverState(0.0, gaussian(g, 0.1), MODEL, NONLIN), 4.0, observers=[obs])
        np.testing.assert_allclose(traj.times, [0.0] + dyadic_schedule(0.0, 4.0))
        assert seen == list(traj.times)
        assert all("l2" in d for d in traj.diagnostics)

    def test_backward_reverses_forward(self):
        g = Grid(128, 64.0)
        u0 = gaussian(g, 0.3)
        fwd = evolve(SolverState(0.0, u0, MODEL, NONLIN), 1.0, tol=1e-12)
        back = evolve(SolverState(1.0, fwd.snapshots[-1].u, MODEL, NONLIN), 0.0, tol=1e-12)
        np.testing.assert_allclose(back.snapshots[-1].u.values, u0.values, atol=1e-10)

    def test_fourth_order(self):
        g = Grid(64, 64.0)
        u0 = gaussian(g, 0.5, 2.0)
        state = SolverState(0.0, u0, MODEL, NONLIN)

        def run(dt):
            return evolve(state, 2.0, dt_fixed=dt).snapshots[-1].u.values

        ref = run(0.01)
        e1 = np.max(np.abs(run(0.2) - ref))
        e2 = np.max(np.abs(run(0.1) - ref))
        assert math.log2(e1 / e2) == pytest.approx(4.0, abs=0.4)

    def test_step_rejects_zero(self):
        g = Grid(16, 8.0)
        with pytest.raises(ValueError):
            step(SolverState(0.0, Field.zeros(g), MODEL, NONLIN), 0.0)

    def test_evolve_rejects_same_time(self):
        g = Grid(16, 8.0)
        with pytest.raises(ValueError):
            evolve(SolverState(1.0, Field.zeros(g), MODEL, NONLIN), 1.0)

    def test_wrap_flag(self):
        g = Grid(64, 16.0)
        u0 = Field.from_function(g, lambda x: 0.1 * np.exp(-((x - 7) ** 2)))
        traj = evolve(SolverState(0.0, u0, MODEL, NONLIN), 0.5)
        assert traj.wrap_fraction_max > 0.5
        assert traj.flags and "wrap-around" in traj.flags[0]

    def test_adaptive_step_stats(self):
        g = Grid(64, 32.0)
        st0 = SolverState(0.0, gaussian(g), MODEL, NONLIN)
        st1, suggested = step(st0, 0.5, tol=1e-12)
        assert st1.stats.accepted == 1
        assert 0 < st1.stats.dt <= 0.5
        assert suggested > 0


class TestSchedule:
    def test_quarter_octaves(self):
        s = dyadic_schedule(0.0, 2.0)
        np.testing.assert_allclose(s, 2.0 ** (np.arange(5) / 4))

    def test_appends_end(self):
        assert dyadic_schedule(0.0, 3.0)[-1] == 3.0

    def test_restart_is_strict(self):
        s = dyadic_schedule(2.0, 4.0)
        np.testing.assert_allclose(s, 2.0 ** (1 + np.arange(1, 5) / 4))

    def test_degenerate(self):
        assert dyadic_schedule(5.0, 5.0) == [5.0]


class TestConserved:
    def test_cos_mass_and_momentum(self):
        g = Grid(64, 2 * math.pi)
        c = conserved_quantities(Field.from_function(g, np.cos), 3)
        assert c.mass == pytest.approx(0.0, abs=1e-14)
        assert c.momentum == pytest.approx(math.pi, rel=1e-14)

    def test_energy_direct_oracle(self):
        # band-limited data: u^{m+1} is resolved, so the potential is a plain sum
        g = Grid(64, 2 * math.pi)
        u = Field.from_function(g, lambda x: 0.3 * np.cos(x) + 0.2 * np.sin(2 * x))
        m = 3
        kinetic = (0.3**2 * 1 + 0.2**2 * 2**2) * math.pi / (2 * m)
        potential = np.sum(u.values ** (m + 1)) * g.dx / (m + 1)
        assert conserved_quantities(u, m).energy == pytest.approx(kinetic - potential, rel=1e-13)

    def test_perturbation_energy(self):
        g = Grid(64, 2 * math.pi)
        u = Field.from_function(g, lambda x: 0.3 * np.cos(x))
        pert = Perturbation(5, 2.0, form="plain")
        base = conserved_quantities(u, 4).energy
        with_p = conserved_quantities(u, 4, pert).energy
        assert base - with_p == pytest.approx(np.sum(pert.antiderivative(u.values)) * g.dx, rel=1e-12)

    def test_conserved_along_flow(self):
        g = Grid(256, 128.0)
        u0 = gaussian(g, 0.4)
        traj = evolve(SolverState(0.0, u0, MODEL, NONLIN), 5.0, tol=1e-12)
        a = conserved_quantities(u0, M)
        b = conserved_quantities(traj.snapshots[-1].u, M)
        assert b.mass == pytest.approx(a.mass, abs=1e-12)
        assert b.momentum == pytest.approx(a.momentum, rel=1e-9)
        assert b.energy == pytest.approx(a.energy, rel=1e-7)


class TestVectorFields:
    def test_J_at_time_zero(self):
        from hkdv_lab.evolution import vector_fields

        g = Grid(128, 64.0)
        u = gaussian(g)
        vf = vector_fields(SolverState(0.0, u, MODEL, NonlinearitySpec(M, strength=0.0)))
        np.testing.assert_allclose(vf.Ju.values, g.x * u.values, atol=1e-15)
        np.testing.assert_allclose(vf.Lambda_u.values, vf.Ju.values, atol=1e-15)

    def test_J_commutes_with_linear_flow(self):
        from hkdv_lab.evolution import vector_fields

        g = Grid(2048, 1024.0)
        u0 = gaussian(g, 1.0, 1.0)
        lin = NonlinearitySpec(M, strength=0.0)
        t = 0.5
        ut = propagate(u0, t, MODEL)
        J_t = vector_fields(SolverState(t, ut, MODEL, lin)).Ju
        J_0 = propagate(Field(g, g.x * u0.values), t, MODEL)
        np.testing.assert_allclose(J_t.values, J_0.values, atol=1e-7)

    def test_boundary_warning(self):
        from hkdv_lab.evolution import vector_fields

        g = Grid(64, 16.0)
        u = Field.from_function(g, lambda x: np.exp(-((x - 7) ** 2)))
        with pytest.warns(BoundaryWarning):
            vector_fields(SolverState(0.0, u, MODEL, NONLIN))

    def test_no_warning_for_centered(self):
        from hkdv_lab.evolution import vector_fields

        g = Grid(256, 128.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            vector_fields(SolverState(1.0, gaussian(g), MODEL, NONLIN))


class TestBootstrap:
    def test_exponent(self):
        assert bootstrap_weight_exponent(4, 0) == pytest.approx(1 / 3)
        assert bootstrap_weight_exponent(4, 2) == pytest.approx(-1 / 3)

    def test_zero(self):
        assert bootstrap_weighted_sup(Field.zeros(Grid(64, 10.0)), 2.0, 1, 4) == 0.0

    @pytest.mark.parametrize("k,t", [(3, 1.0), (0, 0.5)])
    def test_validation(self, k, t):
        with pytest.raises(ValueError):
            bootstrap_weighted_sup(Field.zeros(Grid(64, 10.0)), t, k, 4)

    def test_constant_at_t1(self):
        g = Grid(64, 10.0)
        u = Field(g, np.ones(g.n))
        expect = np.max((1 + g.x**2) ** (1 / 6))
        assert bootstrap_weighted_sup(u, 1.0, 0, 4) == pytest.approx(expect)


class TestSizes:
    def test_sigma_norm_zero(self):
        assert sigma_norm(Field.zeros(Grid(64, 10.0)), 4) == 0

    @settings(max_examples=10, deadline=None)
    @given(c=st.floats(0.1, 10.0))
    def test_sigma_norm_homogeneous(self, c):
        g = Grid(128, 40.0)
        u = gaussian(g, 1.0)
        assert sigma_norm(u * c, 4) == pytest.approx(c * sigma_norm(u, 4), rel=1e-12)

    def test_outer_fraction(self):
        g = Grid(256, 20.0)
        u = Field(g, np.ones(g.n))
        assert outer_mass_fraction(u) == pytest.approx(0.2, abs=0.01)
        assert outer_mass_fraction(Field.zeros(g)) == 0.0

    def test_fractional_energy_matches_spectrum(self):
        g = Grid(64, 2 * math.pi)
        u = Field.from_function(g, lambda x: np.cos(2 * x))
        d = fractional_derivative(u, 1.5)
        assert np.sum(d.values**2) * g.dx == pytest.approx(2**3 * math.pi, rel=1e-13)
