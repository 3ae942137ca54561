"""Wave packets Psi_v, the output gamma(t, v) and the packet approximation checks.

A packet travels along the ray x = v t at frequency xi_v = v^{1/(m-1)}:

    Psi_v(t, x) = chi(lambda (x - v t)) exp(i phi(t, x)),
    lambda = t^{-1/2} v^{-(m-2)/(2(m-1))},

and gamma(t, v) = int u conj(Psi_v) dx. The dimensionless packet parameter
tau = t^{(m-1)/m} v controls every error term; alpha = xi_v / lambda equals
tau^{m/(2(m-1))}.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .fitting import fit_decay_exponent
from .spectral_core import SQRT_2PI, Field, Grid, eval_at, spectrum_at

__all__ = [
    "BumpChi",
    "PacketParams",
    "PacketProbe",
    "PacketConstants",
    "phase",
    "packet",
    "gamma",
    "gamma_series",
    "gamma_dot",
    "gamma_flatness",
    "packet_linear_residual",
    "freq_compare",
    "phys_compare",
    "extract_W",
    "WTable",
    "chi1",
    "chi1_integral",
    "measure_constants",
    "write_probe_table",
    "plane_wave_residual",
    "leading_residual_coefficient",
]


class PacketSupportError(ValueError):
    pass


@dataclass(frozen=True)
class BumpChi:
    """chi(z) = c exp(-1/(1 - (2z)^2)) on |z| < 1/2, normalized to unit mass."""

    quad_nodes: int = 256

    @cached_property
    def c(self) -> float:
        def f(z):
            return math.exp(-1.0 / (1.0 - 4.0 * z * z)) if abs(z) < 0.5 else 0.0

        val, _ = quad(f, -0.5, 0.5, epsabs=1e-14, epsrel=1e-12, limit=200)
        return 1.0 / val

    def __call__(self, z, deriv: int = 0) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        inside = np.abs(z) < 0.5
        zi = z[inside]
        s = 1.0 - 4.0 * zi * zi
        base = self.c * np.exp(-1.0 / s)
        if deriv == 0:
            val = base
        elif deriv == 1:
            val = base * (-8.0 * zi / s**2)
        elif deriv == 2:
            g1 = -8.0 * zi / s**2
            g2 = -8.0 / s**2 - 128.0 * zi * zi / s**3
            val = base * (g2 + g1 * g1)
        elif deriv == 3:
            g1 = -8.0 * zi / s**2
            g2 = -8.0 / s**2 - 128.0 * zi * zi / s**3
            g3 = -384.0 * zi / s**3 - 3072.0 * zi**3 / s**4
            val = base * (g3 + 3 * g1 * g2 + g1**3)
        else:
            raise ValueError("derivatives up to order 3 are implemented")
        out[inside] = val
        return out

    def rule(self, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes on [-1/2, 1/2] with weights times chi."""
        return _bump_rule(self.c, n or self.quad_nodes)

    def l2_sq(self) -> float:
        z, wc = self.rule()
        return float(np.sum(wc * self(z)))

    def l1(self) -> float:
        z, wc = self.rule()
        return float(np.sum(wc))


@lru_cache(maxsize=16)
def _bump_rule(c: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.legendre.leggauss(n)
    z = 0.5 * z
    w = 0.5 * w * c * np.exp(-1.0 / (1.0 - 4.0 * z * z))
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


DEFAULT_CHI = BumpChi()


def phase(t, x, m: int):
    """phi(t, x) = ((m-1)/m) t^{-1/(m-1)} |x|^{m/(m-1)} - pi/4."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("phase needs t > 0")
    return (m - 1) / m * t ** (-1.0 / (m - 1)) * np.abs(x) ** (m / (m - 1)) - math.pi / 4


@dataclass(frozen=True)
class PacketParams:
    t: float
    v: float
    m: int

    def __post_init__(self):
        if not self.t > 0 or not self.v > 0:
            raise ValueError("packets need t > 0 and v > 0")

    @property
    def lam(self) -> float:
        return self.t**-0.5 * self.v ** (-(self.m - 2) / (2 * (self.m - 1)))

    @property
    def lam_scaled(self) -> float:
        """Second form t^{-1/m} tau^{-(m-2)/(2(m-1))}; equal to lam."""
        return self.t ** (-1.0 / self.m) * self.tau ** (-(self.m - 2) / (2 * (self.m - 1)))

    @property
    def xi_v(self) -> float:
        return self.v ** (1.0 / (self.m - 1))

    @property
    def tau(self) -> float:
        return self.t ** ((self.m - 1) / self.m) * self.v

    @property
    def alpha(self) -> float:
        return self.xi_v / self.lam

    @property
    def center(self) -> float:
        return self.v * self.t

    @property
    def support(self) -> tuple[float, float]:
        half = 0.5 / self.lam
        return self.center - half, self.center + half

    def in_omega(self, c_star: float) -> bool:
        return self.tau >= c_star

    def omega_floor(self, c_star: float) -> float:
        return c_star * self.t ** (-(self.m - 1) / self.m)


def _check_support(grid: Grid, params: PacketParams) -> None:
    a, b = params.support
    if a <= -0.5 * grid.length or b >= 0.5 * grid.length - grid.dx:
        raise PacketSupportError(f"packet support [{a:.4g}, {b:.4g}] leaves the box")


def packet(grid: Grid, params: PacketParams, chi: BumpChi = DEFAULT_CHI) -> Field:
    _check_support(grid, params)
    x = grid.x
    vals = chi(params.lam * (x - params.center)) * np.exp(1j * phase(params.t, x, params.m))
    return Field(grid, vals)


def _nodes_for(params: PacketParams) -> int:
    width = 1.0 / params.lam
    return int(64 + 8 * math.ceil(width * (1.0 + 2.0 * params.xi_v)))


def gamma(u: Field, params: PacketParams, chi: BumpChi = DEFAULT_CHI, method: str = "quadrature") -> complex:
    """gamma(t, v) = int u conj(Psi_v) dx.

    ``quadrature`` integrates the band-limited interpolant of u against the
    packet with Gauss-Legendre nodes on the packet support (robust when the
    packet spans few grid cells); ``grid`` sums over grid samples.
    """
    _check_support(u.grid, params)
    if method == "grid":
        psi = packet(u.grid, params, chi)
        return complex(np.sum(u.values * np.conj(psi.values)) * u.grid.dx)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    z, wc = chi.rule(_nodes_for(params))
    x = params.center + z / params.lam
    ux = eval_at(u, x)
    ph = np.exp(-1j * phase(params.t, x, params.m))
    return complex(np.sum(wc * ux * ph) / params.lam)


def gamma_series(snapshots, v: float, m: int, chi: BumpChi = DEFAULT_CHI, t_min: float = 1.0):
    """(t, gamma(t, v)) along recorded snapshots with t >= t_min."""
    ts, gs = [], []
    for s in snapshots:
        if s.t >= t_min - 1e-12:
            ts.append(s.t)
            gs.append(gamma(s.u, PacketParams(s.t, v, m), chi))
    return np.asarray(ts), np.asarray(gs)


def gamma_dot(ts: np.ndarray, gs: np.ndarray) -> np.ndarray:
    """d gamma/dt on a log-uniform schedule, Richardson-combined central differences.

    Interior points use (4 D_h - D_2h)/3 in s = log t where both stencils fit,
    plain D_h otherwise; endpoints use one-sided second-order differences.
    """
    s = np.log(np.asarray(ts, dtype=float))
    ds = np.diff(s)
    if s.size < 3 or np.ptp(ds) > 1e-8 * ds.mean():
        raise ValueError("gamma_dot needs at least 3 log-uniform samples")
    h = ds.mean()
    g = np.asarray(gs)
    d = np.empty_like(g)
    d[1:-1] = (g[2:] - g[:-2]) / (2 * h)
    d[0] = (-3 * g[0] + 4 * g[1] - g[2]) / (2 * h)
    d[-1] = (3 * g[-1] - 4 * g[-2] + g[-3]) / (2 * h)
    if g.size >= 5:
        d2 = (g[4:] - g[:-4]) / (4 * h)
        d[2:-2] = (4 * d[2:-2] - d2) / 3
    return d / np.exp(s)


def gamma_flatness(snapshots, v: float, m: int, epsilon: float, chi: BumpChi = DEFAULT_CHI,
                   c_star: float | None = None) -> dict:
    """Measure |gamma(t,v) - gamma(1,v)| against eps * tau^{-(m-2)/(4(m-1))}.

    The fitted constant is the largest ratio over t > 1. Omega(t) membership of
    every sample is recorded when ``c_star`` is given.
    """
    ts, gs = gamma_series(snapshots, v, m, chi)
    if ts.size < 2 or abs(ts[0] - 1.0) > 1e-9:
        raise ValueError("gamma_flatness needs a snapshot at t = 1 and later ones")
    a = (m - 2) / (4 * (m - 1))
    tau = ts ** ((m - 1) / m) * v
    drift = np.abs(gs - gs[0])
    scale = epsilon * tau ** (-a) if epsilon > 0 else np.ones_like(tau)
    ratio = drift[1:] / scale[1:]
    out = {
        "v": v,
        "t": ts.tolist(),
        "gamma_re": gs.real.tolist(),
        "gamma_im": gs.imag.tolist(),
        "drift": drift.tolist(),
        "C_fit": float(ratio.max()) if ratio.size else 0.0,
    }
    if c_star is not None:
        out["in_omega"] = [bool(tt >= c_star) for tt in tau]
    return out


@dataclass(frozen=True)
class PacketResidual:
    l1: float  # principal part (d_t + (i/m)(-i d_x)^m) Psi_v
    budget: float  # t^{-1} lambda^{-1}
    ratio: float
    relative: float  # l1 / ||d_t Psi||_{L1}
    minus_l1: float  # negative-frequency correction, zero for odd m
    stencil_err: float


def _psi_at(t: float, v: float, m: int, x: np.ndarray, chi: BumpChi) -> np.ndarray:
    p = PacketParams(t, v, m)
    return chi(p.lam * (x - p.center)) * np.exp(1j * phase(t, x, m))


def packet_linear_residual(params: PacketParams, chi: BumpChi = DEFAULT_CHI, zeta_max: float = 6000.0,
                           h: float | None = None, rtol: float = 1e-3) -> PacketResidual:
    """L1 norms of L Psi_v = d_t Psi_v + (1/m)|d|^{m-1} d Psi_v split by frequency sign.

    For positive frequencies the operator coincides with the local
    d_t + (i/m)(-i d_x)^m; this principal part is evaluated on a local grid
    around the packet that resolves its spectrum up to |xi - xi_v| = zeta_max
    lambda, with d_t from Richardson-extrapolated central differences at fixed
    x. The remaining negative-frequency part is reported as ``minus_l1``.
    """
    m, lam = params.m, params.lam
    half = 0.5 / lam
    box = 4.0 * half
    xi_top = 1.2 * (1.5 ** (1.0 / (m - 1))) * params.xi_v + zeta_max * lam
    n = 1 << int(math.ceil(math.log2(max(64.0, box * xi_top / math.pi))))
    grid = Grid(n, box)
    x = params.center + grid.x
    if h is None:
        rate = max(xi_top ** m / m, params.v * lam, 1e-12)
        h = min(0.003 / ((1.5 ** (1.0 / (m - 1)) * params.xi_v) ** m / m + params.v * lam), 1e-3 * params.t)
        h = max(h, 1e-12 / rate)

    def d_central(hh):
        return (_psi_at(params.t + hh, params.v, m, x, chi) - _psi_at(params.t - hh, params.v, m, x, chi)) / (2 * hh)

    d1, d2 = d_central(h), d_central(0.5 * h)
    dt = (4 * d2 - d1) / 3
    stencil_err = float(np.sum(np.abs(dt - d2)) * grid.dx)
    psi_hat = grid.analyze(_psi_at(params.t, params.v, m, x, chi))
    xi = grid.xi
    local = grid.synthesize((1j / m) * xi**m * psi_hat)
    principal = dt + local
    corr = np.where(xi < 0, (1j / m) * (xi * np.abs(xi) ** (m - 1) - xi**m), 0.0) * psi_hat
    minus = grid.synthesize(corr)
    l1 = float(np.sum(np.abs(principal)) * grid.dx)
    dt_l1 = float(np.sum(np.abs(dt)) * grid.dx)
    if stencil_err > rtol * l1:
        raise ValueError(f"time stencil too coarse: stencil error {stencil_err:.2e} vs residual {l1:.2e}")
    budget = 1.0 / (params.t * lam)
    return PacketResidual(l1, budget, l1 / budget, l1 / dt_l1, float(np.sum(np.abs(minus)) * grid.dx), stencil_err)


def leading_residual_coefficient(alpha: float, m: int, chi: BumpChi = DEFAULT_CHI, n: int = 20001) -> float:
    """int |d_z chi~_0(z, alpha)| dz: the predicted budget ratio of the principal residual.

    chi~_0 = (z/2) chi - i((m-1)/2) a^{-(m-2)/(m-1)} |z+a|^{(m-2)/(m-1)} chi'
             - ((m-1)(m-2)/6) a^{-2(m-2)/(m-1)} |z+a|^{(m-3)/(m-1)} chi''
    """
    z = np.linspace(-0.5, 0.5, n)
    p1, p2 = (m - 2) / (m - 1), (m - 3) / (m - 1)
    w = z + alpha
    c1 = -1j * (m - 1) / 2 * alpha ** (-p1)
    c2 = -(m - 1) * (m - 2) / 6 * alpha ** (-2 * p1)
    d = 0.5 * (chi(z) + z * chi(z, 1))
    d = d + c1 * (p1 * w ** (p1 - 1) * chi(z, 1) + w**p1 * chi(z, 2))
    d = d + c2 * (p2 * w ** (p2 - 1) * chi(z, 2) + w**p2 * chi(z, 3))
    return float(np.trapezoid(np.abs(d), z))


def plane_wave_residual(grid: Grid, k: float, t: float, m: int, h: float = 1e-3) -> float:
    """max |L e^{ikx - (it/m) k^m}|, which vanishes for an exact solution."""

    def make(tt):
        return Field(grid, np.exp(1j * (k * grid.x - tt * k**m / m)))

    dt = (4 * (make(t + h / 2).values - make(t - h / 2).values) / h
          - (make(t + h).values - make(t - h).values) / (2 * h)) / 3
    f = make(t)
    spec = f.spectrum * (1j / m) * grid.xi * np.abs(grid.xi) ** (m - 1)
    spec[grid.nyquist_mask] = 0.0
    return float(np.max(np.abs(dt + grid.synthesize(spec))))


def freq_compare(u: Field, params: PacketParams, chi: BumpChi = DEFAULT_CHI) -> float:
    """|u_hat(t, xi_v) - sqrt(m-1) exp(-(i/m) t xi_v^m) gamma(t, v)|."""
    m = params.m
    uh = complex(spectrum_at(u, params.xi_v)[0])
    g = gamma(u, params, chi)
    return abs(uh - math.sqrt(m - 1) * np.exp(-1j * params.t * params.xi_v**m / m) * g)


def _positive_derivative_at(u: Field, x: float, k: int) -> complex:
    grid = u.grid
    pos = grid.xi > 0
    pos &= ~grid.nyquist_mask
    xi = grid.xi[pos]
    spec = u.spectrum[pos] * (1j * xi) ** k
    return complex(np.sum(spec * np.exp(1j * xi * x)) * grid.dxi / SQRT_2PI)


def phys_compare(u: Field, params: PacketParams, k: int, chi: BumpChi = DEFAULT_CHI) -> complex:
    """R_k = d^k u^+(t, vt) - i^k lambda v^{k/(m-1)} e^{i phi(t, vt)} gamma(t, v)."""
    m = params.m
    if not 0 <= k <= m - 2:
        raise ValueError("k must lie in 0..m-2")
    x = params.center
    if not -0.5 * u.grid.length <= x < 0.5 * u.grid.length:
        raise PacketSupportError("ray point outside the box")
    lead = (1j**k) * params.lam * params.v ** (k / (m - 1)) * np.exp(1j * phase(params.t, x, m))
    return _positive_derivative_at(u, x, k) - lead * gamma(u, params, chi)


@dataclass
class PacketProbe:
    t: float
    v: float
    xi_v: float
    lam: float
    gamma: complex
    freq_residual: float
    phys_residual: list[float]
    in_omega: bool
    gamma_dot_est: complex = complex("nan")


def probe(u: Field, t: float, v: float, m: int, c_star: float, chi: BumpChi = DEFAULT_CHI) -> PacketProbe:
    p = PacketParams(t, v, m)
    g = gamma(u, p, chi)
    return PacketProbe(
        t=t, v=v, xi_v=p.xi_v, lam=p.lam, gamma=g,
        freq_residual=freq_compare(u, p, chi),
        phys_residual=[abs(phys_compare(u, p, k, chi)) for k in range(m - 1)],
        in_omega=p.in_omega(c_star),
    )


def write_probe_table(path: str | Path, probes: Sequence[PacketProbe]) -> Path:
    path = Path(path)
    kmax = max((len(p.phys_residual) for p in probes), default=0)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "v", "xi_v", "lambda", "re_gamma", "im_gamma", "freq_residual"]
                   + [f"phys_residual_{k}" for k in range(kmax)] + ["in_omega"])
        for p in probes:
            w.writerow([repr(p.t), repr(p.v), repr(p.xi_v), repr(p.lam), repr(p.gamma.real), repr(p.gamma.imag),
                        repr(p.freq_residual)] + [repr(r) for r in p.phys_residual] + [int(p.in_omega)])
    return path


@dataclass
class WTable:
    """Sampled W(xi) on xi >= 0 with W(0) = int u_0 and W(-xi) = conj W(xi)."""

    xi: np.ndarray
    values: np.ndarray
    below_floor: np.ndarray
    m: int

    @cached_property
    def _interp(self):
        return PchipInterpolator(self.xi, self.values.real), PchipInterpolator(self.xi, self.values.imag)

    def __call__(self, xi) -> np.ndarray:
        q = np.asarray(xi, dtype=float)
        a = np.abs(q)
        if np.any(a > self.xi[-1] * (1 + 1e-12)):
            raise ValueError(f"W queried beyond its table (|xi| > {self.xi[-1]:.4g})")
        re_i, im_i = self._interp
        out = re_i(a) + 1j * im_i(a)
        return np.where(q < 0, np.conj(out), out)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2(self) -> float:
        """L2 over the real line from the tabulated samples (trapezoid, both halves)."""
        return float(np.sqrt(2.0 * np.trapezoid(np.abs(self.values) ** 2, self.xi)))


def extract_W(u1: Field, xi_grid: Sequence[float], m: int, mass: float, chi: BumpChi = DEFAULT_CHI,
              c_star: float | None = None) -> WTable:
    """W(xi) = sqrt(m-1) gamma(1, xi^{m-1}) for xi > 0, anchored by W(0) = mass."""
    xs = np.unique(np.asarray([x for x in xi_grid if x > 0], dtype=float))
    if xs.size == 0:
        raise ValueError("xi_grid must contain positive frequencies")
    vals = [math.sqrt(m - 1) * gamma(u1, PacketParams(1.0, x ** (m - 1), m), chi) for x in xs]
    floor = c_star if c_star is not None else measure_constants(m).C_star
    below = xs ** (m - 1) < floor
    return WTable(
        xi=np.concatenate([[0.0], xs]),
        values=np.concatenate([[complex(mass)], np.asarray(vals)]),
        below_floor=np.concatenate([[False], below]),
        m=m,
    )


# chi_1 of the packet Fourier transform and the constants C_1, C_2, C_*


def _R(z: np.ndarray, alpha: float, m: int, n: int = 40) -> np.ndarray:
    th, tw = np.polynomial.legendre.leggauss(n)
    th = 0.5 * (th + 1.0)
    tw = 0.5 * tw
    s = np.asarray(z) / alpha
    integ = np.sum(tw * (1 - th) ** 2 * (th * s[..., None] + 1.0) ** (-(2 * m - 3) / (m - 1)), axis=-1)
    return -(m - 2) / (2 * (m - 1) ** 2) * np.asarray(z) ** 3 / alpha * integ


def _chirp_poly(zeta, alpha: float, m: int):
    s = zeta / alpha
    return alpha * alpha / m * ((1 + s) ** m - 1 - m * s)


def _chirp_poly_d(zeta, alpha: float, m: int):
    s = zeta / alpha
    return alpha * ((1 + s) ** (m - 1) - 1)


def _fourier_g(zeta: np.ndarray, alpha: float, m: int, chi: BumpChi, n: int = 400) -> np.ndarray:
    z, wc = chi.rule(n)
    g = wc * np.exp(1j * z**2 / (2 * (m - 1)) + 1j * _R(z, alpha, m))
    zeta = np.asarray(zeta)
    flat = zeta.ravel()
    out = np.empty(flat.size, dtype=np.complex128)
    for i in range(0, flat.size, 4096):
        out[i : i + 4096] = np.exp(-1j * np.outer(flat[i : i + 4096], z)) @ g
    return (out / SQRT_2PI).reshape(zeta.shape)


def chi1(zeta, alpha: float, m: int, chi: BumpChi = DEFAULT_CHI) -> np.ndarray:
    """chi_1(zeta, alpha): the packet spectrum in units of its own scale.

    F[Psi_v](xi) = (m-1)^{-1/2} lambda^{-1} chi_1((xi - xi_v)/lambda, xi_v/lambda) e^{-(i/m) t xi^m}.
    Accepts complex zeta (the function is entire).
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    zeta = np.asarray(zeta)
    pref = math.sqrt(m - 1) * np.exp(-1j * math.pi / 4)
    return pref * np.exp(1j * _chirp_poly(zeta, alpha, m)) * _fourier_g(zeta, alpha, m, chi)


def chi1_integral(alpha: float, m: int, chi: BumpChi = DEFAULT_CHI, delta: float = 1.0,
                  panels: int = 400, nodes: int = 16) -> complex:
    """int chi_1(zeta, alpha) d zeta along the shifted contour zeta = s + i mu(s).

    mu = delta tanh(P'(s)) makes the polynomial chirp decay like exp(-delta |P'|)
    while the Fourier factor grows at most like exp(delta/2).
    """
    S = 1.0
    while delta * min(abs(_chirp_poly_d(S, alpha, m)), abs(_chirp_poly_d(-S, alpha, m))) < 60:
        S *= 1.2
    edges = np.linspace(-S, S, panels + 1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * np.diff(edges)
    s = (edges[:-1, None] + half[:, None] * (x + 1)).ravel()
    ws = (half[:, None] * w).ravel()
    dp = _chirp_poly_d(s, alpha, m)
    mu = delta * np.tanh(dp)
    # d/ds P'(s) = (m-1) (1 + s/alpha)^{m-2}
    ddp = (m - 1) * (1 + s / alpha) ** (m - 2)
    e = np.exp(-2.0 * np.abs(dp))
    dmu = delta * ddp * 4.0 * e / (1.0 + e) ** 2  # sech^2 without overflow
    zeta = s + 1j * mu
    return complex(np.sum(ws * chi1(zeta, alpha, m, chi) * (1 + 1j * dmu)))


@dataclass(frozen=True)
class PacketConstants:
    m: int
    C1: float
    C2: float
    C_star: float
    alphas: tuple = field(default=(), repr=False)
    c1_samples: tuple = field(default=(), repr=False)
    c2_samples: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"m": self.m, "C1": self.C1, "C2": self.C2, "C_star": self.C_star}


@lru_cache(maxsize=8)
def measure_constants(m: int, chi: BumpChi = DEFAULT_CHI, zeta_max: float = 200.0, dzeta: float = 0.02,
                      alphas: tuple = tuple(np.geomspace(1.0, 1e3, 13))) -> PacketConstants:
    """C_1 = sup_a a |int chi_1 - 1|, C_2 = sup_a sup_zeta <zeta>^2 |chi_1| over a grid of alpha."""
    zeta = np.arange(-zeta_max, zeta_max + dzeta / 2, dzeta)
    c1s, c2s = [], []
    for a in alphas:
        c1s.append(a * abs(chi1_integral(a, m, chi) - 1.0))
        # |chi_1| on the real line is sqrt(m-1) |F g|
        c2s.append(float(np.max((1 + zeta**2) * np.abs(_fourier_g(zeta, a, m, chi)))) * math.sqrt(m - 1))
    C1, C2 = max(c1s), max(c2s)
    C_star = (2 * (C1 + C2 + 1)) ** (2 * (m - 1) / m)
    return PacketConstants(m, C1, C2, C_star, tuple(alphas), tuple(c1s), tuple(c2s))


def flatness_fit(result: dict, m: int) -> dict:
    """Log-log slope of the gamma drift, where enough positive samples exist."""
    ts = np.asarray(result["t"])[1:]
    d = np.asarray(result["drift"])[1:]
    keep = d > 0
    try:
        fit = fit_decay_exponent(list(zip(ts[keep], d[keep])), min_decades=1.0)
        return {"slope": fit.slope, "stderr": fit.stderr}
    except ValueError:
        return {"slope": float("nan"), "stderr": float("nan")}
