"""The acceptance suite: thirteen numbered checks with fixed tolerances.

Each ``criterion_N`` returns a :class:`CriterionResult`. Fitted series are kept
in ``details["series"]`` exactly as handed to the fitter, so plot data can be
emitted from the result alone.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import airy

from .asymptotics import compensated_W, partition, perturbation_shift, region_report
from .config import ExperimentConfig
from .evolution import SolverState, conserved_quantities, evolve
from .experiments import (
    FREE,
    PERTURBED,
    PRODUCTION,
    ZERO_MASS,
    initial_data,
    nonlinearity,
    simulate,
)
from .fitting import fit_decay_exponent
from .linear_dispersion import DispersionModel, propagate, q0_eval
from .self_similar import (
    compare_Q,
    extract_Q,
    profile_residual,
    residual_via_lambda,
    solve_Q_picard,
    to_self_similar,
)
from .spectral_core import Field, Grid, derivative, fractional_derivative, norm
from .wave_packets import PacketParams, freq_compare, gamma_flatness, packet_linear_residual

C_STAR_M4 = 145.25  # measured Omega threshold for the default bump, m = 4


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:>2}. {self.title}: {self.summary}"

    def to_dict(self) -> dict:
        return asdict(self)


def _mass(u: Field) -> float:
    return float(np.sum(u.values) * u.grid.dx)


def _run_valid(traj) -> tuple[bool, list[str]]:
    return not traj.flags, list(traj.flags)


# ---------------------------------------------------------------------------
# 1-3: linear layer


def criterion_1() -> CriterionResult:
    grid = Grid(256, 8 * math.pi)
    k0 = 5 * grid.dxi
    spec = np.zeros(grid.n, dtype=np.complex128)
    spec[5] = math.sqrt(2 * math.pi) / grid.dxi  # exactly exp(i k0 x) on the grid
    wave = Field.from_spectrum(grid, spec, real=False)
    errs = {}
    for a in (0.5, 1.0, 2.5, 3.0):
        out = fractional_derivative(wave, a)
        errs[f"abs_d^{a}"] = float(np.max(np.abs(out.values - k0**a * wave.values)) / k0**a)
    for m in (4, 5):
        t = 0.7
        out = propagate(wave, t, DispersionModel(m))
        exact = np.exp(-1j * t * k0**m / m) * wave.values
        errs[f"propagator_m{m}"] = float(np.max(np.abs(out.values - exact)))
    rng = np.random.default_rng(0)
    u = Field(grid, rng.standard_normal(grid.n))
    e_x = np.sum(u.values**2) * grid.dx
    e_xi = np.sum(np.abs(u.spectrum) ** 2) * grid.dxi
    errs["parseval"] = float(abs(e_x - e_xi) / e_x)
    back = grid.synthesize(grid.analyze(u.values))
    errs["round_trip"] = float(np.max(np.abs(back - u.values)) / np.max(np.abs(u.values)))
    worst = max(errs.values())
    return CriterionResult(1, "spectral exactness", worst <= 1e-12, f"worst error {worst:.2e} (tol 1e-12)",
                           {"errors": errs})


def criterion_2() -> CriterionResult:
    errs = {}
    for m in (3, 4, 5, 6):
        closed = m ** (1 / m) * math.gamma(1 + 1 / m) * math.cos(math.pi / (2 * m)) / math.pi
        errs[f"q0_0_m{m}"] = abs(float(q0_eval(0.0, m).value) - closed)
    errs["airy_literal"] = abs(float(q0_eval(0.0, 3).value) - 0.3550280539)
    errs["airy_scipy"] = abs(float(q0_eval(0.0, 3).value) - float(airy(0.0)[0]))
    golden_ok = max(errs.values()) <= 1e-8
    conv = _convolution_identity_error()
    passed = golden_ok and conv <= 1e-6
    return CriterionResult(
        2, "Q_0 golden values", passed,
        f"closed-form error {max(errs.values()):.2e} (tol 1e-8), convolution error {conv:.2e} (tol 1e-6)",
        {"errors": errs, "convolution": conv},
    )


def _convolution_identity_error(m: int = 4, t: float = 0.25) -> float:
    """max_j |U(t)u_0(x_j) - sum_i t^{-1/m} Q_0(t^{-1/m}(x_j - x_i)) u_0(x_i) dx| on a 512-point grid."""
    grid = Grid(512, 128.0)
    u0 = Field.from_function(grid, lambda x: np.exp(-(x**2) / 2))
    ut = propagate(u0, t, DispersionModel(m))
    support = np.abs(grid.x) <= 9.0
    xs, ws = grid.x[support], u0.values[support] * grid.dx
    idx = np.searchsorted(grid.x, np.linspace(-8.0, 8.0, 9))
    s = t ** (-1.0 / m)
    worst = 0.0
    for j in idx:
        kernel = s * q0_eval(s * (grid.x[j] - xs), m).value
        worst = max(worst, abs(ut.values[j] - float(kernel @ ws)))
    return worst


def linear_decay_series(m: int, times, sigma: float = 0.5, ks=(0, 1)) -> dict[int, list]:
    """sup_x |d^k U(t) u_0| for a narrow Gaussian, on a box sized for each t.

    The box holds every frequency with |u_0_hat| above e^{-3.1} of its peak for
    the whole time, and the grid resolves up to sigma*xi = 3 with margin.
    """
    out = {k: [] for k in ks}
    model = DispersionModel(m)
    for t in times:
        speed = (2.5 / sigma) ** (m - 1)
        length = 2.0 * (speed * t + 20 * sigma + 5 * t ** (1.0 / m))
        dx = math.pi * sigma / 3.0
        n = 1 << int(math.ceil(math.log2(length / dx)))
        g = Grid(n, n * dx)
        ut = propagate(Field.from_function(g, lambda x: np.exp(-(x**2) / (2 * sigma**2))), float(t), model)
        for k in ks:
            out[k].append((float(t), norm(derivative(ut, k) if k else ut, "linf")))
    return out


def criterion_3() -> CriterionResult:
    times = np.geomspace(10.0, 1000.0, 9)
    slopes, series, ok = {}, {}, True
    for m in (4, 5):
        for k, ser in linear_decay_series(m, times).items():
            fit = fit_decay_exponent(ser)
            expected = -(k + 1) / m
            slopes[f"m{m}_k{k}"] = {"slope": fit.slope, "expected": expected}
            series[f"m{m}_k{k}"] = ser
            ok &= abs(fit.slope - expected) <= 0.02
    worst = max(abs(v["slope"] - v["expected"]) for v in slopes.values())
    return CriterionResult(3, "linear decay rates", ok, f"worst |slope - expected| {worst:.4f} (tol 0.02)",
                           {"slopes": slopes, "series": series})


# ---------------------------------------------------------------------------
# 4-5: solver


def conservation_drifts(cfg: ExperimentConfig, dts=(1.0, 0.5, 0.25), t_end: float = 100.0) -> dict:
    u0 = initial_data(cfg)
    nl = nonlinearity(cfg)
    c0 = conserved_quantities(u0, cfg.m, nl.perturbation)
    rows = []
    for dt in dts:
        traj = evolve(SolverState(0.0, u0, DispersionModel(cfg.m), nl), t_end, adaptive=False, dt_fixed=dt)
        c = conserved_quantities(traj.snapshots[-1].u, cfg.m, nl.perturbation)
        rows.append({
            "dt": dt,
            "mass": abs(c.mass - c0.mass) / abs(c0.mass),
            "momentum": abs(c.momentum - c0.momentum) / abs(c0.momentum),
            "energy": abs(c.energy - c0.energy) / abs(c0.energy),
            "flags": traj.flags,
        })
    return {"rows": rows, "initial": asdict(c0)}


def _conservation_verdict(d: dict) -> tuple[bool, str]:
    rows = d["rows"]
    worst = {q: max(r[q] for r in rows) for q in ("mass", "momentum", "energy")}
    within = worst["mass"] <= 1e-12 and worst["momentum"] <= 1e-8 and worst["energy"] <= 1e-6
    # energy carries the time-stepping error; mass and momentum sit at roundoff
    ratios = [rows[i]["energy"] / rows[i + 1]["energy"] for i in range(len(rows) - 1)]
    shrink = all(16 / 1.5 <= r <= 16 * 1.5 for r in ratios)
    valid = not any(r["flags"] for r in rows)
    d["energy_halving_ratios"] = ratios
    summary = (f"drifts mass {worst['mass']:.1e} momentum {worst['momentum']:.1e} energy {worst['energy']:.1e}; "
               f"energy halving ratios {', '.join(f'{r:.1f}' for r in ratios)} (target ~16)")
    return within and shrink and valid, summary


def criterion_4(cfg: ExperimentConfig = PRODUCTION) -> CriterionResult:
    d = conservation_drifts(cfg)
    ok, summary = _conservation_verdict(d)
    return CriterionResult(4, "conservation", ok, summary, d)


def observed_order(dt: float = 0.04, t_end: float = 4.0) -> dict:
    grid = Grid(64, 64.0)
    u0 = Field.from_function(grid, lambda x: 0.5 * np.exp(-(x**2) / 8))
    model = DispersionModel(4)
    nl = nonlinearity(ExperimentConfig())

    def solve(h):
        return evolve(SolverState(0.0, u0, model, nl), t_end, adaptive=False, dt_fixed=h).snapshots[-1].u.values

    ref = solve(dt / 8)
    e1 = float(np.max(np.abs(solve(dt) - ref)))
    e2 = float(np.max(np.abs(solve(dt / 2) - ref)))
    return {"dt": dt, "err_dt": e1, "err_dt_half": e2, "order": math.log2(e1 / e2)}


def criterion_5() -> CriterionResult:
    d = observed_order()
    ok = 3.7 <= d["order"] <= 4.3
    return CriterionResult(5, "solver order", ok, f"observed order {d['order']:.3f} (target [3.7, 4.3])", d)


# ---------------------------------------------------------------------------
# 6-8: packets and the self-similar residual


def _flatness(traj, epsilon: float, velocities=(0.5, 1.0, 2.0)) -> tuple[bool, dict]:
    snaps = [s for s in traj.snapshots if s.t >= 1.0]
    out, ok = {}, True
    for v in velocities:
        r = gamma_flatness(snaps, v, traj.model.m, epsilon, c_star=C_STAR_M4)
        out[str(v)] = {"C_fit": r["C_fit"], "in_omega_count": int(sum(r["in_omega"])),
                       "series": list(zip(r["t"], r["drift"]))}
        ok &= r["C_fit"] <= 10.0
    return ok, out


def criterion_6(cfg: ExperimentConfig = PRODUCTION) -> CriterionResult:
    traj = simulate(cfg)
    ok, d = _flatness(traj, cfg.epsilon, cfg.velocities)
    valid, flags = _run_valid(traj)
    worst = max(v["C_fit"] for v in d.values())
    return CriterionResult(6, "gamma flatness", ok and valid, f"largest fitted C {worst:.3f} (tol 10)",
                           {"velocities": d, "flags": flags})


def weighted_freq_residual(traj, v: float) -> list[tuple[float, float]]:
    m = traj.model.m
    a = (m - 2) / (4 * (m - 1))
    rows = []
    for s in traj.snapshots:
        if s.t < 1.0:
            continue
        p = PacketParams(s.t, v, m)
        rows.append((s.t, p.tau**a * freq_compare(s.u, p)))
    return rows


def criterion_7() -> CriterionResult:
    free, prod = simulate(FREE), simulate(PRODUCTION)
    eps = PRODUCTION.epsilon
    d, ok = {}, True
    for v in PRODUCTION.velocities:
        wf = np.array(weighted_freq_residual(free, v))
        wp = np.array(weighted_freq_residual(prod, v))
        band = float(wf[:, 1].max() / wf[0, 1])
        nl_ratio = float(wp[:, 1].max() / eps)
        d[str(v)] = {"free_band": band, "nonlinear_over_eps": nl_ratio,
                     "free_series": wf.tolist(), "nonlinear_series": wp.tolist()}
        ok &= band <= 5.0 and nl_ratio <= 10.0
    ok &= not free.flags and not prod.flags
    bands = max(x["free_band"] for x in d.values())
    nl = max(x["nonlinear_over_eps"] for x in d.values())
    return CriterionResult(7, "frequency identity", ok,
                           f"free-run band max w(t)/w(1) = {bands:.2f} (tol 5); nonlinear max = {nl:.2f} eps (tol 10)",
                           {"velocities": d})


def profile_residual_series(traj, lam_form: bool = False) -> list[tuple[float, float]]:
    """(t, profile residual) for t >= 1 on the natural y-grid of each snapshot.

    With ``lam_form`` the residual is computed from Lambda u in x, with the
    perturbation removed.
    """
    m = traj.model.m
    rows = []
    for s in traj.snapshots:
        if s.t < 1.0:
            continue
        if lam_form:
            r = residual_via_lambda(SolverState(s.t, s.u, traj.model, traj.nonlin))
        else:
            r = profile_residual(to_self_similar(s.u, s.t, m), m)
        rows.append((s.t, r))
    return rows


def criterion_8(cfg: ExperimentConfig = PRODUCTION) -> CriterionResult:
    traj = simulate(cfg)
    ser = profile_residual_series(traj)
    fit = fit_decay_exponent(ser)
    target = -1.0 / (2 * cfg.m)
    ok = abs(fit.slope - target) <= 0.05 and not traj.flags
    return CriterionResult(8, "self-similar residual", ok,
                           f"fitted exponent {fit.slope:.4f} (target {target:.4f} +- 0.05)",
                           {"slope": fit.slope, "stderr": fit.stderr, "series": ser})


# ---------------------------------------------------------------------------
# 9-11: profile and regions


def criterion_9() -> CriterionResult:
    traj = simulate(PRODUCTION)
    m, eps = PRODUCTION.m, PRODUCTION.epsilon
    mass0 = _mass(traj.snapshots[0].u)
    qe = extract_Q(traj, m)
    qp = solve_Q_picard(mass0, m)
    sup, l2 = compare_Q(qe, qp, 5.0)
    mass_errs = {"extract": abs(qe.mass - mass0) / abs(mass0), "picard": abs(qp.mass - mass0) / abs(mass0)}
    ok = sup <= 5e-3 * eps and max(mass_errs.values()) <= 1e-3 and qp.residual <= 1e-6 and not traj.flags
    return CriterionResult(
        9, "Q cross-validation", ok,
        f"sup difference {sup:.2e} (tol {5e-3 * eps:.1e}); mass errors {max(mass_errs.values()):.1e} (tol 1e-3); "
        f"Picard residual {qp.residual:.1e} (tol 1e-6)",
        {"sup": sup, "l2": l2, "mass": mass0, "mass_errors": mass_errs, "picard_residual": qp.residual,
         "picard_diffs": qp.diagnostics.get("iteration_diffs"),
         "extraction_spread": qe.diagnostics.get("extrapolation_spread")},
    )


def criterion_10() -> CriterionResult:
    zero, gauss = simulate(ZERO_MASS), simulate(PRODUCTION)
    m = ZERO_MASS.m
    qz, qg = extract_Q(zero, m), extract_Q(gauss, m)
    ratio = qz.sup(5.0) / qg.sup(5.0)
    full = [(s.t, norm(s.u, "linf")) for s in zero.snapshots if s.t >= 1.0]
    late = [r for r in full if r[0] >= 10.0]
    slope = fit_decay_exponent(late).slope
    slope_full = fit_decay_exponent(full).slope
    limit = -1.0 / m - 0.02
    ok = ratio <= 1e-2 and slope <= limit and not zero.flags
    return CriterionResult(
        10, "zero-mass check", ok,
        f"||Q||_inf ratio {ratio:.1e} (tol 1e-2); sup|u| exponent on [10, {late[-1][0]:g}] {slope:.3f} "
        f"(tol <= {limit:.2f}; {slope_full:.3f} on [1, {full[-1][0]:g}])",
        {"q_sup_zero": qz.sup(5.0), "q_sup_gaussian": qg.sup(5.0), "ratio": ratio, "slope": slope,
         "slope_from_t1": slope_full, "series": late},
    )


REGION_NORMS = ("decaying_sup", "decaying_l2", "self_similar_sup", "self_similar_l2",
                "oscillatory_sup", "oscillatory_l2")


def region_tables(traj, epsilon: float, const: float, perturbation=None, Q=None, W=None) -> list[dict]:
    rows = []
    m = traj.model.m
    for s in traj.snapshots:
        if s.t < 1.0:
            continue
        rep = region_report(s.u, partition(s.t, m, epsilon, perturbation, const=const), Q=Q, W=W)
        row = {"t": s.t, **rep.region_norms()}
        if rep.self_similar_error is not None:
            row["self_similar_error_sup"], row["self_similar_error_l2"] = rep.self_similar_error
        if rep.err_x is not None:
            row["err_x_sup"], row["err_x_l2"] = rep.err_x
            row["err_xi_sup"], row["err_xi_l2"] = rep.err_xi
        rows.append(row)
    return rows


def criterion_11() -> CriterionResult:
    traj = simulate(PRODUCTION)
    m, eps = PRODUCTION.m, PRODUCTION.epsilon
    last = traj.snapshots[-1]
    Q, W = extract_Q(traj, m), compensated_W(last.u, last.t, m)
    tables = {c: region_tables(traj, eps, c, Q=Q, W=W) for c in (1.0, 2.0)}
    d, ok = {}, True
    for name in REGION_NORMS:
        a = np.array([r[name] for r in tables[1.0]])
        b = np.array([r[name] for r in tables[2.0]])
        band = (float((a / a[0]).min()), float((a / a[0]).max()))
        band2 = (float((b / b[0]).min()), float((b / b[0]).max()))
        shift = float(b.max() / a.max() - 1.0)  # change of the O(eps) constant sup_t value(t)
        in_band = all(0.2 <= x <= 5.0 for x in band + band2)
        robust = abs(shift) <= 0.10
        d[name] = {"band": band, "band_x2": band2, "constant": float(a.max()), "constant_x2": float(b.max()),
                   "relative_shift": shift, "in_band": in_band, "robust": robust}
        ok &= in_band and robust
    ok &= not traj.flags
    failing = [k for k, v in d.items() if not (v["in_band"] and v["robust"])]
    worst = max(abs(v["relative_shift"]) for v in d.values())
    summary = f"bands within [1/5, 5]: {all(v['in_band'] for v in d.values())}; largest x2 shift {worst:.1%} (tol 10%)"
    if failing:
        summary += f"; failing: {', '.join(failing)}"
    return CriterionResult(11, "region reports", ok, summary, {"norms": d, "tables": tables})


# ---------------------------------------------------------------------------
# 12-13


def packet_budget_series(v: float = 32.0, m: int = 4, times=None) -> dict:
    times = np.geomspace(10.0, 1000.0, 9) if times is None else times
    rows = [packet_linear_residual(PacketParams(float(t), v, m)) for t in times]
    return {
        "l1": [(float(t), r.l1) for t, r in zip(times, rows)],
        "budget": [(float(t), r.budget) for t, r in zip(times, rows)],
        "ratio": [(float(t), r.ratio) for t, r in zip(times, rows)],
    }


def criterion_12(v: float = 32.0) -> CriterionResult:
    s = packet_budget_series(v)
    predicted = fit_decay_exponent(s["budget"]).slope
    l1 = fit_decay_exponent(s["l1"]).slope
    ratio = fit_decay_exponent(s["ratio"]).slope
    ok = abs(l1 - predicted) <= 0.1 and abs(ratio) <= 0.1
    return CriterionResult(
        12, "packet residual scaling", ok,
        f"||L Psi||_L1 slope {l1:.3f} (predicted {predicted:.3f}); budget-ratio slope {ratio:.3f} (predicted 0); tol 0.1",
        {"v": v, "l1_slope": l1, "predicted": predicted, "ratio_slope": ratio, "series": s},
    )


def criterion_13() -> CriterionResult:
    cfg = PERTURBED
    traj = simulate(cfg)
    pert = nonlinearity(cfg).perturbation
    cons = conservation_drifts(cfg)
    ok4, s4 = _conservation_verdict(cons)
    ok6, d6 = _flatness(traj, cfg.epsilon, cfg.velocities)
    ser = profile_residual_series(traj, lam_form=True)
    fit = fit_decay_exponent(ser)
    target = -1.0 / (2 * cfg.m)
    ok8 = abs(fit.slope - target) <= 0.05
    shift = perturbation_shift(cfg.m, pert.p)
    # zero when eps sits on the edge 1/(2m) - a of the admissible range
    rho_tilde = round((1.0 / cfg.m) * (1.0 / (2 * cfg.m) - shift - cfg.epsilon), 12)
    ok = ok4 and ok6 and ok8 and not traj.flags
    worst_c = max(v["C_fit"] for v in d6.values())
    return CriterionResult(
        13, "perturbation path", ok,
        f"[4] {'ok' if ok4 else 'FAIL'}: {s4}; [6] {'ok' if ok6 else 'FAIL'}: largest C {worst_c:.3f}; "
        f"[8] {'ok' if ok8 else 'FAIL'}: exponent {fit.slope:.4f} (target {target:.4f} +- 0.05)",
        {"rho_tilde": rho_tilde, "shift": shift, "conservation": cons, "flatness": d6,
         "residual_slope": fit.slope, "series": ser},
    )


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11, 12: criterion_12, 13: criterion_13,
}


def run_criterion(i: int) -> CriterionResult:
    if i not in CRITERIA:
        raise KeyError(f"no criterion {i}; known: {sorted(CRITERIA)}")
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = CRITERIA[i]()
    res.seconds = time.perf_counter() - start
    return res


def run_acceptance(ids=None) -> list[CriterionResult]:
    return [run_criterion(i) for i in (sorted(CRITERIA) if ids is None else ids)]


__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_acceptance", "C_STAR_M4"]
