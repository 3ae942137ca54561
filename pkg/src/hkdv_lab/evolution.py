"""Nonlinear time integration of

    u_t + (1/m)|d_x|^{m-1} d_x u = d_x(u^m + F(u))

with an integrating-factor RK4 scheme (exact linear part), plus conserved
quantities and the vector-field diagnostics J u, Lambda u and the X, X~ norms.

The solver works on rfft coefficients of the real field; Field objects are
only built at snapshot times.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .linear_dispersion import DispersionModel
from .spectral_core import (
    Field,
    Grid,
    dealiased_power,
    derivative,
    exponential_filter,
    fractional_derivative,
    multiplier_apply,
    norm,
    power_on_padded,
)


class IntegrationError(RuntimeError):
    pass


class BoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Perturbation:
    """Short-range term F(u) = c |u|^{p-1} u ("odd") or c u^p ("plain", integer p)."""

    p: float
    coefficient: float
    form: Literal["odd", "plain"] = "odd"

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.form == "plain":
            return self.coefficient * u ** int(self.p)
        return self.coefficient * np.abs(u) ** (self.p - 1.0) * u

    def antiderivative(self, u: np.ndarray) -> np.ndarray:
        """G with G' = F and G(0) = 0."""
        if self.form == "plain":
            q = int(self.p)
            return self.coefficient * u ** (q + 1) / (q + 1)
        return self.coefficient * np.abs(u) ** (self.p + 1.0) / (self.p + 1.0)

    def derivative_bound_check(self, u: np.ndarray) -> float:
        """max_j sup |F^{(j)}(u)| / |u|^{p-j} over the samples, j = 0..3."""
        a = np.abs(np.asarray(u, dtype=float))
        a = a[a > 0]
        if a.size == 0:
            return 0.0
        p, c = self.p, abs(self.coefficient)
        worst = 0.0
        coef = 1.0
        for j in range(4):
            # |d^j/du^j |u|^{p-1}u| = p(p-1)...(p-j+1) |u|^{p-j}
            worst = max(worst, c * abs(coef))
            coef *= p - j
        return worst


@dataclass(frozen=True)
class NonlinearitySpec:
    m: int
    strength: float = 1.0
    perturbation: Perturbation | None = None

    def __post_init__(self):
        if self.perturbation is not None and not self.perturbation.p > self.m:
            raise ValueError("short-range perturbation needs p > m")


def _nonlinear_samples(values: np.ndarray, nonlin: NonlinearitySpec) -> np.ndarray:
    """Band-truncated u^m + F(u) on the original grid (no derivative)."""
    out = np.zeros_like(values)
    if nonlin.strength != 0.0:
        out += nonlin.strength * power_on_padded(values, nonlin.m)
    if nonlin.perturbation is not None:
        pert = nonlin.perturbation
        out += power_on_padded(values, pert.p, fn=pert)
    return out


def rhs_nonlinear(u: Field, nonlin: NonlinearitySpec) -> Field:
    """d_x (u^m + F(u)) with dealiased products."""
    vals = _nonlinear_samples(u.values, nonlin)
    if not np.all(np.isfinite(vals)):
        raise OverflowError("nonlinear term overflowed")
    return derivative(Field(u.grid, vals))


@dataclass(frozen=True)
class StepStats:
    dt: float = 0.0
    accepted: int = 0
    rejected: int = 0
    filtered: bool = False


@dataclass(frozen=True)
class SolverState:
    t: float
    u: Field
    model: DispersionModel
    nonlin: NonlinearitySpec
    stats: StepStats = StepStats()


class _Kernel:
    """rfft-space IFRK4 machinery for one grid and model."""

    def __init__(self, grid: Grid, model: DispersionModel, nonlin: NonlinearitySpec, filt: bool = False):
        self.grid = grid
        self.n = grid.n
        self.k = grid.dxi * np.arange(self.n // 2 + 1)
        self.omega = self.k ** model.m / model.m
        self.ik = 1j * self.k
        self.ik[-1] = 0.0
        self.nonlin = nonlin
        self.active = nonlin.strength != 0.0 or nonlin.perturbation is not None
        self.filter = None
        if filt:
            full = exponential_filter(grid)
            self.filter = full[: self.n // 2 + 1]
        self._E_cache: dict[float, np.ndarray] = {}

    def E(self, h: float) -> np.ndarray:
        e = self._E_cache.get(h)
        if e is None:
            e = np.exp(-1j * self.omega * h)
            if len(self._E_cache) > 64:
                self._E_cache.clear()
            self._E_cache[h] = e
        return e

    def N(self, uh: np.ndarray) -> np.ndarray:
        if not self.active:
            return np.zeros_like(uh)
        u = np.fft.irfft(uh, self.n)
        w = _nonlinear_samples(u, self.nonlin)
        return self.ik * np.fft.rfft(w)

    def rk4(self, uh: np.ndarray, dt: float) -> np.ndarray:
        E1 = self.E(0.5 * dt)
        E2 = self.E(dt)
        if not self.active:
            out = E2 * uh
        else:
            k1 = self.N(uh)
            k2 = self.N(E1 * (uh + 0.5 * dt * k1))
            k3 = self.N(E1 * uh + 0.5 * dt * k2)
            k4 = self.N(E2 * uh + dt * E1 * k3)
            out = E2 * uh + (dt / 6.0) * (E2 * k1 + 2.0 * E1 * (k2 + k3) + k4)
        out[-1] = 0.0
        if self.filter is not None:
            out = out * self.filter
        return out

    def to_values(self, uh: np.ndarray) -> np.ndarray:
        return np.fft.irfft(uh, self.n)


def _kernel_for(state: SolverState, filt: bool) -> _Kernel:
    return _Kernel(state.u.grid, state.model, state.nonlin, filt)


def step(
    state: SolverState,
    dt: float,
    tol: float = 1e-9,
    adaptive: bool = True,
    dt_min: float = 1e-10,
    filt: bool = False,
    _kernel: _Kernel | None = None,
) -> tuple[SolverState, float]:
    """Advance by ``dt`` (sign gives direction).

    With ``adaptive`` the step is checked by step doubling against ``tol``
    (max-norm, absolute); rejected steps are halved until accepted. Returns the
    new state and the suggested next step size.
    """
    if dt == 0:
        raise ValueError("dt must be nonzero")
    ker = _kernel or _kernel_for(state, filt)
    uh = np.fft.rfft(state.u.values)
    uh[-1] = 0.0
    stats = state.stats
    rejected = stats.rejected
    h = dt
    if not adaptive:
        new = ker.rk4(uh, h)
        err = 0.0
        suggested = h
    else:
        while True:
            if abs(h) < dt_min:
                raise IntegrationError(f"step size underflow at t={state.t:.6g} (dt={h:.3g})")
            full = ker.rk4(uh, h)
            half = ker.rk4(ker.rk4(uh, 0.5 * h), 0.5 * h)
            err = float(np.max(np.abs(ker.to_values(full - half))))
            if not np.isfinite(err):
                h *= 0.5
                rejected += 1
                continue
            if err <= tol:
                new = half
                break
            h *= 0.5
            rejected += 1
        factor = 2.0 if err == 0 else min(2.0, max(0.5, 0.9 * (tol / err) ** 0.2))
        suggested = h * factor
    u_new = Field(state.u.grid, ker.to_values(new))
    new_stats = StepStats(dt=h, accepted=stats.accepted + 1, rejected=rejected, filtered=ker.filter is not None)
    return SolverState(state.t + h, u_new, state.model, state.nonlin, new_stats), suggested


@dataclass(frozen=True)
class Snapshot:
    t: float
    u: Field


Observer = Callable[[Snapshot, SolverState], dict | None]


@dataclass
class Trajectory:
    snapshots: list[Snapshot] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    model: DispersionModel | None = None
    nonlin: NonlinearitySpec | None = None
    stats: StepStats = StepStats()
    wrap_fraction_max: float = 0.0
    flags: list[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def at(self, t: float, rtol: float = 1e-9) -> Snapshot:
        for s in self.snapshots:
            if abs(s.t - t) <= rtol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")

    def window(self, t_lo: float, t_hi: float) -> list[Snapshot]:
        return [s for s in self.snapshots if t_lo - 1e-12 <= s.t <= t_hi + 1e-12]


def dyadic_schedule(t_start: float, t_end: float, per_octave: int = 4, t_first: float = 1.0) -> list[float]:
    """Times t_first * 2^{j/per_octave} strictly after t_start and up to t_end, plus t_end."""
    out = []
    if t_end <= t_start:
        return [t_end]
    j = int(math.floor(per_octave * math.log2(max(t_start, 1e-300) / t_first))) - 1 if t_start > 0 else None
    if j is None:
        j = -10 * per_octave
    while True:
        t = t_first * 2.0 ** (j / per_octave)
        if t > t_end * (1 + 1e-12):
            break
        if t > t_start * (1 + 1e-12) and t >= t_first * (1 - 1e-12):
            out.append(t)
        j += 1
    if not out or abs(out[-1] - t_end) > 1e-12 * t_end:
        out.append(t_end)
    return out


def outer_mass_fraction(u: Field, outer: float = 0.1) -> float:
    """Share of int u^2 in the outer ``outer`` fraction of the box (both ends)."""
    x = u.grid.x
    half = 0.5 * u.grid.length
    mask = np.abs(x) > half * (1.0 - 2.0 * outer) - 1e-12
    total = float(np.sum(u.values**2))
    if total == 0:
        return 0.0
    return float(np.sum(u.values[mask] ** 2)) / total


def evolve(
    state: SolverState,
    t_end: float,
    observers: Sequence[Observer] = (),
    schedule: Sequence[float] | None = None,
    dt0: float = 0.05,
    tol: float = 1e-9,
    adaptive: bool = True,
    dt_fixed: float | None = None,
    filt: bool = False,
    wrap_threshold: float = 1e-8,
    dt_max: float = 1.0,
) -> Trajectory:
    """Integrate to ``t_end``, recording snapshots at ``schedule`` times.

    Without observers only the endpoints are recorded. Observers receive each
    snapshot and may return a dict of diagnostics, stored in order.
    ``dt_fixed`` switches to fixed steps (the last step to each target is
    shortened to land on it).
    """
    if t_end == state.t:
        raise ValueError("t_end must differ from the current time")
    direction = 1.0 if t_end > state.t else -1.0
    if schedule is None:
        schedule = dyadic_schedule(state.t, t_end) if (observers and direction > 0) else [t_end]
    targets = sorted({float(t) for t in schedule if direction * (t - state.t) > 0} | {float(t_end)},
                     key=lambda s: direction * s)
    ker = _kernel_for(state, filt)
    traj = Trajectory(model=state.model, nonlin=state.nonlin)

    def record(st: SolverState):
        snap = Snapshot(st.t, st.u)
        traj.snapshots.append(snap)
        frac = outer_mass_fraction(st.u)
        traj.wrap_fraction_max = max(traj.wrap_fraction_max, frac)
        diag = {"t": st.t, "wrap_fraction": frac}
        for obs in observers:
            d = obs(snap, st)
            if d:
                diag.update(d)
        traj.diagnostics.append(diag)

    record(state)
    h = direction * abs(dt_fixed if dt_fixed is not None else dt0)
    st = state
    for target in targets:
        while direction * (target - st.t) > 1e-12 * max(1.0, abs(target)):
            remaining = target - st.t
            hh = h if abs(h) < abs(remaining) else remaining
            if dt_fixed is not None:
                st, _ = step(st, hh, adaptive=False, _kernel=ker)
            else:
                st, suggested = step(st, hh, tol=tol, adaptive=adaptive, _kernel=ker)
                if abs(hh) == abs(h) or abs(suggested) < abs(h):
                    h = direction * min(abs(suggested), dt_max)
        st = SolverState(target, st.u, st.model, st.nonlin, st.stats)
        record(st)
    traj.stats = st.stats
    if traj.wrap_fraction_max > wrap_threshold:
        traj.flags.append(
            f"wrap-around: outer-box L2 fraction {traj.wrap_fraction_max:.2e} exceeds {wrap_threshold:.0e}"
        )
    return traj


@dataclass(frozen=True)
class ConservedTriple:
    mass: float
    momentum: float
    energy: float


def conserved_quantities(u: Field, m: int, perturbation: Perturbation | None = None) -> ConservedTriple:
    """Mass, momentum int u^2 and energy.

    The potential part uses int u * P(u^m), which is exact for band-limited u
    and matches the quantity conserved by the truncated system.
    """
    dx = u.grid.dx
    mass = float(np.sum(u.values) * dx)
    momentum = float(np.sum(u.values**2) * dx)
    d = fractional_derivative(u, 0.5 * (m - 1))
    kinetic = float(np.sum(d.values**2) * dx) / (2 * m)
    potential = float(np.sum(u.values * power_on_padded(u.values, m)) * dx) / (m + 1)
    energy = kinetic - potential
    if perturbation is not None:
        energy -= float(np.sum(power_on_padded(u.values, perturbation.p + 1, fn=perturbation.antiderivative)) * dx)
    return ConservedTriple(mass, momentum, energy)


@dataclass(frozen=True)
class VectorFieldDiag:
    Ju: Field
    Lambda_u: Field
    X_norm: float
    Xt_norm: float


def boundary_fraction(u: Field) -> float:
    return outer_mass_fraction(u, 0.1)


def vector_fields(state: SolverState, warn_threshold: float = 1e-8) -> VectorFieldDiag:
    """J u = x u - t|d|^{m-1} u and Lambda u = J u + m t (u^m + F(u))."""
    u, t, m = state.u, state.t, state.model.m
    if boundary_fraction(u) >= warn_threshold:
        warnings.warn("solution has non-negligible mass near the box edge", BoundaryWarning, stacklevel=2)
    x = u.grid.x
    Ju = Field(u.grid, x * u.values)
    if t != 0:
        Ju = Ju - t * fractional_derivative(u, m - 1)
    nl = _nonlinear_samples(u.values, NonlinearitySpec(m, state.nonlin.strength, state.nonlin.perturbation))
    Lam = Ju + Field(u.grid, m * t * nl)
    s = (m - 1) / (2 * m)
    X = math.sqrt(norm(u, "hs", s=s) ** 2 + norm(Lam) ** 2)
    if t > 0:
        a = t ** (1.0 / m)
        smooth = multiplier_apply(u, (1.0 + (a * u.grid.xi) ** 2) ** -0.5)
        Xt = norm(Ju) + a * norm(smooth)
    else:
        Xt = norm(Ju)
    return VectorFieldDiag(Ju, Lam, X, Xt)


def bootstrap_weight_exponent(m: int, k: int) -> float:
    return -k / (m - 1) + (m - 2) / (2 * (m - 1))


def bootstrap_weighted_sup(u: Field, t: float, k: int, m: int) -> float:
    """t^{(k+1)/m} || <t^{-1/m}x>^{-k/(m-1)+(m-2)/(2(m-1))} d^k u ||_inf."""
    if not 0 <= k <= m - 2:
        raise ValueError("k must lie in 0..m-2")
    if t < 1:
        raise ValueError("t must be >= 1")
    dk = derivative(u, k) if k else u
    z = t ** (-1.0 / m) * u.grid.x
    w = (1.0 + z * z) ** (0.5 * bootstrap_weight_exponent(m, k))
    return float(t ** ((k + 1) / m) * np.max(np.abs(w * dk.values)))


def sigma_norm(u: Field, m: int) -> float:
    """||u||_{H^{(m-1)/(2m)}} + ||x u||_{L^2}: the data-size parameter."""
    return norm(u, "hs", s=(m - 1) / (2 * m)) + norm(Field(u.grid, u.grid.x * u.values))


def power_check(u: Field, p: int) -> Field:
    """Convenience alias used by diagnostics."""
    return dealiased_power(u, p)
