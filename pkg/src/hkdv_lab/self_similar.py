"""Self-similar variables and the profile Q.

With U(t, y) = t^{1/m} u(t, t^{1/m} y) the limit Q = lim U(t) solves

    |d/dy|^{m-1} Q - y Q - m Q^m = 0,   int Q dy = int u_0 dx.

Q decays only like |y|^{-(m-2)/(2(m-1))} on the right, so profiles are held
as samples on a finite y-box and every residual or comparison is taken on a
window well inside that box.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .evolution import SolverState, Trajectory, step, vector_fields
from .linear_dispersion import q0_eval
from .spectral_core import (
    Field,
    Grid,
    derivative,
    power_on_padded,
    eval_uniform,
    fractional_derivative,
    make_grid,
    norm,
    sigma_lp,
    spectrum_at,
)
from .fitting import FitError, fit_decay_exponent

__all__ = [
    "ProfileError",
    "SupportOverflowError",
    "PicardDivergenceError",
    "ProfileQ",
    "default_y_grid",
    "default_window",
    "to_self_similar",
    "natural_y_grid",
    "profile_residual",
    "residual_via_lambda",
    "evolution_identity_error",
    "extract_Q",
    "solve_Q_picard",
    "compare_Q",
    "write_profile_csv",
]


class ProfileError(ValueError):
    pass


class SupportOverflowError(ProfileError):
    pass


class PicardDivergenceError(RuntimeError):
    pass


@dataclass
class ProfileQ:
    grid_y: Grid
    Q: Field
    mass: float
    provenance: Literal["pde_extracted", "picard"]
    residual: float
    window: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def y(self) -> np.ndarray:
        return self.grid_y.x

    def sup(self, window: float | None = None) -> float:
        w = self.window if window is None else window
        return norm(self.Q, "linf", region=np.abs(self.y) <= w)


def default_y_grid() -> Grid:
    return make_grid(4096, 256.0)


def default_window(grid_y: Grid, m: int) -> float:
    """Half-width that the tapered far-field band of the Picard solver cannot reach."""
    return 0.5 * _taper_band(grid_y, m)[0] ** (m - 1)


def natural_y_grid(u: Field, t: float, m: int) -> Grid:
    return Grid(u.grid.n, u.grid.length * t ** (-1.0 / m))


def to_self_similar(u: Field, t: float, m: int, grid_y: Grid | None = None) -> Field:
    """U(y) = t^{1/m} u(t^{1/m} y).

    Without ``grid_y`` the samples are reused on the rescaled box, which is
    exact. Otherwise the band-limited interpolant is sampled at the mapped
    points; the mapped y-box must lie inside the computational box.
    """
    if t < 1:
        raise ProfileError("self-similar variables need t >= 1")
    s = t ** (1.0 / m)
    if grid_y is None:
        return Field(natural_y_grid(u, t, m), s * u.values)
    half = 0.5 * u.grid.length
    if s * 0.5 * grid_y.length > half * (1 + 1e-12):
        raise SupportOverflowError(
            f"y-box maps to |x| <= {s * 0.5 * grid_y.length:.4g}, beyond the x-box half-width {half:.4g}"
        )
    vals = eval_uniform(u, s * grid_y.x[0], s * grid_y.dx, grid_y.n)
    return Field(grid_y, s * vals)


def _windowed(f: Field, window: float | None) -> np.ndarray:
    if window is None:
        return f.values
    return f.values[np.abs(f.grid.x) <= window]


def _profile_operator(U: Field, m: int) -> Field:
    return fractional_derivative(U, m - 1) - Field(U.grid, U.grid.x * U.values + m * U.values**m)


def profile_residual(U: Field, m: int, window: float | None = None, linear_mass: float | None = None) -> float:
    """|| |d_y|^{m-1} U - y U - m U^m ||_{L^2}, optionally on |y| <= window.

    Profiles are not square integrable, and on a periodic box the nonlocal
    |d_y|^{m-1} of their truncated tail pollutes the whole window. With
    ``linear_mass`` (requires ``window``) the exact homogeneous solution
    linear_mass * Q_0 is taken out of the linear part, where it contributes
    zero, and the remainder is smoothly cut off beyond twice the window.
    """
    if linear_mass is None:
        r = _profile_operator(U, m)
    else:
        if window is None:
            raise ValueError("linear_mass needs a window")
        y = U.grid.x
        V = U.values - linear_mass * _q0_samples(m, U.grid.n, U.grid.length)
        V = Field(U.grid, V * sigma_lp(y / (2.0 * window)))
        r = fractional_derivative(V, m - 1) - Field(U.grid, y * V.values + m * U.values**m)
    r = _windowed(r, window)
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * U.grid.dx))


def residual_via_lambda(state: SolverState) -> float:
    """The profile residual at time t computed from Lambda u in x.

    Equals t^{-1/(2m)} || Lambda u - m t F(u) ||_{L^2_x}; the F term is
    removed because the profile operator carries only u^m.
    """
    t, m = state.t, state.model.m
    with np.errstate(all="ignore"):
        diag = vector_fields(state, warn_threshold=np.inf)
    lam = diag.Lambda_u
    pert = state.nonlin.perturbation
    if pert is not None:
        lam = lam - Field(lam.grid, m * t * power_on_padded(state.u.values, pert.p, fn=pert))
    return t ** (-0.5 / m) * norm(lam)


def evolution_identity_error(state: SolverState, h: float = 1e-3) -> float:
    """Relative mismatch in d_t U = (1/m) t^{-1} d_y[(Lambda u)(t, t^{1/m} y)].

    d_t U is a fourth-order central difference of exact solver steps, mapped
    to the y-box of the central time.
    """
    t, m = state.t, state.model.m
    if t - 2 * h < 1:
        raise ProfileError("need t - 2h >= 1")
    # a box slightly inside every neighbour's rescaled x-box
    grid_y = Grid(state.u.grid.n, 0.9 * state.u.grid.length * t ** (-1.0 / m))
    vals = {}
    for k in (-2, -1, 1, 2):
        st, _ = step(state, k * h, adaptive=False)
        vals[k] = to_self_similar(st.u, t + k * h, m, grid_y).values
    dU = (vals[-2] - 8 * vals[-1] + 8 * vals[1] - vals[2]) / (12 * h)
    lam = vector_fields(state, warn_threshold=np.inf).Lambda_u
    a = t ** (1.0 / m)
    lam_y = Field(grid_y, eval_uniform(lam, a * grid_y.x[0], a * grid_y.dx, grid_y.n))
    rhs = derivative(lam_y).values / (m * t)
    return float(np.max(np.abs(dU - rhs)) / max(np.max(np.abs(rhs)), 1e-300))


# --------------------------------------------------------------------------
# extraction from PDE data


def _extrapolate(sv: np.ndarray, data: np.ndarray, degree: int) -> np.ndarray:
    """Least-squares polynomial in s (scaled to s/max s) evaluated at s = 0."""
    V = np.vander(sv / sv.max(), degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, data, rcond=None)
    return coef[0]


def extract_Q(
    trajectory: Trajectory,
    m: int,
    grid_y: Grid | None = None,
    t_min: float | None = None,
    degree: int = 8,
    window: float | None = None,
    region_rho: float | None = None,
    region_const: float = 1.0,
) -> ProfileQ:
    """Q from late-time snapshots by extrapolation in s = t^{-1/m}.

    U(t, y) is fitted pointwise by a polynomial of ``degree`` in s over the
    snapshots with t >= t_min (default t_last/16) and evaluated at s = 0;
    for the free flow U is a power series in s, so this removes the slow
    approach of U(t) to its limit. The spread between the degree and
    degree-1 extrapolants is kept as an error estimate. The Cauchy
    diagnostics ||U(2t) - U(t)||_inf on |y| <= C t^{(m-1)rho} cover every
    snapshot pair (t, 2t).
    """
    snaps = [s for s in trajectory.snapshots if s.t >= 1.0]
    if not snaps:
        raise ProfileError("trajectory has no snapshots with t >= 1")
    ts = np.array([s.t for s in snaps])
    if math.log10(ts.max() / ts.min()) < 1.5 - 1e-12:
        raise ProfileError("trajectory must span at least 1.5 decades in t")
    grid_y = default_y_grid() if grid_y is None else grid_y
    window = default_window(grid_y, m) if window is None else window
    t_last = ts.max()
    t_min = t_last / 16.0 if t_min is None else t_min
    use = [s for s in snaps if s.t >= t_min * (1 - 1e-12)]
    if len(use) < degree + 2:
        raise ProfileError(f"need at least {degree + 2} snapshots in the fit window, got {len(use)}")

    Us = np.array([to_self_similar(s.u, s.t, m, grid_y).values for s in use])
    sv = np.array([s.t ** (-1.0 / m) for s in use])
    Q = Field(grid_y, _extrapolate(sv, Us, degree))
    lower = _extrapolate(sv, Us, degree - 1)
    inwin = np.abs(grid_y.x) <= window
    spread = float(np.max(np.abs(Q.values - lower)[inwin]))

    # mass: extrapolate the exact box sums int U dy = int u dx
    masses = np.array([float(np.sum(s.u.values) * s.u.grid.dx) for s in use])
    mass = float(_extrapolate(sv, masses, degree))

    cauchy = _cauchy_series(snaps, m, grid_y, region_rho, region_const)
    diag = {
        "t_window": [float(use[0].t), float(t_last)],
        "degree": degree,
        "n_snapshots": len(use),
        "extrapolation_spread": spread,
        "box_mass": float(np.sum(Q.values) * grid_y.dx),
        "cauchy": cauchy,
    }
    res = profile_residual(Q, m, window, linear_mass=mass)
    return ProfileQ(grid_y, Q, mass, "pde_extracted", res, window, diag)


def _cauchy_series(snaps, m, grid_y, rho, const) -> dict:
    by_t = {round(s.t, 9): s for s in snaps}
    series = []
    for s in snaps:
        s2 = by_t.get(round(2 * s.t, 9))
        if s2 is None:
            continue
        U1 = to_self_similar(s.u, s.t, m, grid_y)
        U2 = to_self_similar(s2.u, s2.t, m, grid_y)
        yb = const * s.t ** ((m - 1) * rho) if rho is not None else default_window(grid_y, m)
        mask = np.abs(grid_y.x) <= yb
        series.append((float(s.t), float(np.max(np.abs(U2.values - U1.values)[mask]))))
    out: dict = {"series": series}
    # judged on the late half: early differences may grow before the decay sets in
    vals = [v for _, v in series][len(series) // 2 :]
    out["decreasing"] = bool(len(vals) >= 2 and all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:])))
    try:
        fit = fit_decay_exponent(series)
        out["slope"], out["stderr"] = fit.slope, fit.stderr
    except FitError as exc:
        out["slope"], out["fit_error"] = None, str(exc)
    if not out["decreasing"]:
        out["warning"] = "Cauchy differences are not decreasing"
    return out


# --------------------------------------------------------------------------
# Picard solver on the Fourier side


@lru_cache(maxsize=8)
def _q0_samples(m: int, n: int, length: float) -> np.ndarray:
    g = Grid(n, length)
    vals = q0_eval(g.x, m, strict=False).value
    vals.setflags(write=False)
    return vals


def _taper_band(grid_y: Grid, m: int) -> tuple[float, float]:
    # spectral content at eta maps to y ~ eta^{m-1}; keep it inside the box
    eta_c = (0.9 * 0.5 * grid_y.length) ** (1.0 / (m - 1))
    return TAPER_ONSET * eta_c, eta_c


TAPER_ONSET = 0.5


def _taper(eta: np.ndarray, eta0: float, eta_c: float) -> np.ndarray:
    """Smooth 1 -> 0 over eta0 <= |eta| <= eta_c."""
    return sigma_lp(1.0 + (np.abs(eta) - eta0) / (eta_c - eta0))


def _nl_correction(N: Field, m: int, nodes: int = 16) -> Field:
    """Q_nl^(eta) = i m e^{-i phi(eta)} int_0^eta e^{i phi(s)} N^(s) ds, tapered; N = Q^m."""
    g = N.grid
    eta0, eta_c = _taper_band(g, m)
    kmax = int(math.ceil(eta_c / g.dxi))
    edges = g.dxi * np.arange(kmax + 1)
    z, w = np.polynomial.legendre.leggauss(nodes)
    a, b = edges[:-1, None], edges[1:, None]
    s = (0.5 * (b - a) * (z + 1) + a).ravel()
    ws = (0.5 * (b - a) * w).ravel()
    phi = lambda e: e * np.abs(e) ** (m - 1) / m
    Nh = spectrum_at(N, s)
    panel = (ws * np.exp(1j * phi(s)) * Nh).reshape(kmax, nodes).sum(axis=1)
    C = np.concatenate([[0.0], np.cumsum(panel)])
    pos = 1j * m * np.exp(-1j * phi(edges)) * C * _taper(edges, eta0, eta_c)
    spec = np.zeros(g.n, dtype=np.complex128)
    kk = np.arange(kmax + 1)
    keep = kk < g.n // 2
    spec[kk[keep]] = pos[keep]
    neg = kk[keep][1:]
    spec[(-neg) % g.n] = np.conj(pos[keep][1:])
    spec[g.n // 2] = 0.0
    return Field.from_spectrum(g, spec, real=True)


def solve_Q_picard(
    mass: float,
    m: int,
    grid_y: Grid | None = None,
    iters: int = 12,
    tol: float = 1e-15,
    window: float | None = None,
    nonlinear: bool = True,
) -> ProfileQ:
    """Fixed point of the integrating-factor form of the profile equation.

    Q = mass Q_0 + Q_nl where mass Q_0 solves the homogeneous equation with
    Q^(0) = mass/sqrt(2 pi) and Q_nl carries the nonlinear Duhamel term with
    Q_nl^(0) = 0. Q_0 is sampled by contour quadrature; Q_nl lives on the grid
    with its spectrum tapered so far-field oscillations stay inside the box.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    grid_y = default_y_grid() if grid_y is None else grid_y
    window = default_window(grid_y, m) if window is None else window
    lin = mass * _q0_samples(m, grid_y.n, grid_y.length)
    Q = Field(grid_y, lin)
    diffs: list[float] = []
    inwin = np.abs(grid_y.x) <= window
    if nonlinear and mass != 0.0:
        floor = 1e-15 * max(float(np.max(np.abs(lin))), 1e-300)
        for _ in range(iters):
            N = Field(grid_y, Q.values**m)
            Qn = Field(grid_y, lin + _nl_correction(N, m).values)
            d = float(np.max(np.abs(Qn.values - Q.values)[inwin]))
            diffs.append(d)
            Q = Qn
            if not np.isfinite(d) or (len(diffs) >= 3 and d > diffs[0] and d > floor):
                raise PicardDivergenceError(f"Picard differences grow: {diffs}")
            if d <= max(tol, floor):
                break
    ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > 0 and b > 1e3 * 1e-16 * np.max(np.abs(lin))]
    diag = {
        "iteration_diffs": diffs,
        "contraction_ratios": ratios,
        "taper_band": list(_taper_band(grid_y, m)),
        "box_mass": float(np.sum(Q.values) * grid_y.dx),
    }
    res = profile_residual(Q, m, window, linear_mass=mass)
    return ProfileQ(grid_y, Q, float(mass), "picard", res, window, diag)


def compare_Q(q1: ProfileQ, q2: ProfileQ, window: float) -> tuple[float, float]:
    """(sup, L2) of q1 - q2 on |y| <= window."""
    if q1.grid_y != q2.grid_y:
        raise ProfileError("profiles live on different y-grids")
    d = (q1.Q - q2.Q).values[np.abs(q1.y) <= window]
    if d.size == 0:
        raise ProfileError("comparison window is empty")
    return float(np.max(np.abs(d))), float(np.sqrt(np.sum(d**2) * q1.grid_y.dx))


def write_profile_csv(path: str | Path, profiles: Sequence[ProfileQ], window: float | None = None) -> Path:
    """Rows (y, Q, provenance, mass, residual) for |y| <= window."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "Q", "provenance", "mass", "residual"])
        for q in profiles:
            win = q.window if window is None else window
            mask = np.abs(q.y) <= win
            for y, v in zip(q.y[mask], q.Q.values[mask]):
                w.writerow([repr(float(y)), repr(float(v)), q.provenance, repr(q.mass), repr(q.residual)])
    return path
