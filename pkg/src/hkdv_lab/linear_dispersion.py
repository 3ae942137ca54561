"""Free evolution and the generalized Airy function Q_0.

Q_0(y) = (1/2pi) int exp(i(y xi - xi|xi|^{m-1}/m)) dxi is evaluated from the
half-line integral

    I_k(y) = int_0^inf xi^k exp(i psi(xi)) dxi,   psi(xi) = y xi - xi^m / m,

by deforming the contour: for y > 0 the stationary point xi* = y^{1/(m-1)} is
covered by a real Gauss-Legendre segment [0, xi_1] and the remaining tail is
rotated onto the ray xi_1 + r exp(-i theta), on which Im psi increases
monotonically for 0 < theta <= pi/(2m).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from .fitting import PowerFit, fit_decay_exponent
from .spectral_core import Field, derivative, multiplier_apply, norm

__all__ = [
    "DispersionModel",
    "OscQuadParams",
    "QuadratureError",
    "propagate",
    "half_line_integral",
    "q0_eval",
    "q0_at_zero",
    "q0_derivative_envelope_check",
    "linear_oscillatory_leading",
    "linear_decay_report",
    "tabulate_q0",
]


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class DispersionModel:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise ValueError(f"m must be an integer >= 3, got {self.m}")

    def symbol(self, xi: np.ndarray) -> np.ndarray:
        """Fourier symbol of (1/m)|d/dx|^{m-1} d/dx."""
        return (1j / self.m) * xi * np.abs(xi) ** (self.m - 1)

    def dispersion(self, xi: np.ndarray) -> np.ndarray:
        """Real frequency omega(xi) = xi|xi|^{m-1}/m."""
        return xi * np.abs(xi) ** (self.m - 1) / self.m

    def group_velocity(self, xi: np.ndarray) -> np.ndarray:
        return np.abs(xi) ** (self.m - 1)


@dataclass(frozen=True)
class OscQuadParams:
    ray_angle: float | None = None  # default pi/(2m)
    nodes: int = 32
    split_point: float = 1.0
    tol: float = 1e-9

    def angle(self, m: int) -> float:
        th = self.ray_angle if self.ray_angle is not None else math.pi / (2 * m)
        if not 0 < th <= math.pi / (2 * m) + 1e-15:
            raise ValueError("ray_angle must lie in (0, pi/(2m)]")
        return th

    def __post_init__(self):
        if self.nodes < 32:
            raise ValueError("nodes must be >= 32")


def propagate(f: Field, t: float, model: DispersionModel) -> Field:
    """U(t) f = exp(-t (1/m)|d|^{m-1} d) f."""
    if t == 0:
        return f
    return multiplier_apply(f, np.exp(-1j * t * model.dispersion(f.grid.xi)))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _panel_rule(edges: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = _gauss_legendre(n)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return (a + half * (z + 1.0)).ravel(), (half * w).ravel()


def _segment_edges(length: float, y: float, m: int) -> np.ndarray:
    # phase speed |psi'| <= max(|y|, length^{m-1}); keep <= 2pi phase per panel
    speed = max(abs(y), length ** (m - 1), 1.0)
    npan = max(1, int(math.ceil(length * speed / (2 * math.pi))))
    return np.linspace(0.0, length, npan + 1)


def _ray_edges(xi1: float, y: float, m: int, k: int, theta: float) -> np.ndarray:
    """Panel edges in r along xi1 + r e^{-i theta} up to negligible integrand."""
    e = np.exp(-1j * theta)
    edges = [0.0]
    r = 0.0
    while True:
        z = xi1 + r * e
        speed = abs(y) + abs(z) ** (m - 1) + 1.0
        h = min(1.0, 2 * math.pi / speed)
        r += h
        edges.append(r)
        z = xi1 + r * e
        im = (y * z - z**m / m).imag
        if im - k * math.log(abs(z) + 1e-300) > 45.0 or r > 1e6:
            break
    return np.asarray(edges)


def _half_line_single(y: float, m: int, k: int, q: OscQuadParams, n: int) -> complex:
    theta = q.angle(m)
    e = np.exp(-1j * theta)
    total = 0.0 + 0.0j
    if y > 0:
        xs = y ** (1.0 / (m - 1))
        width = ((m - 1) * max(xs, 1.0) ** (m - 2)) ** -0.5
        xi1 = xs + q.split_point * width
        nodes, wts = _panel_rule(_segment_edges(xi1, y, m), n)
        total += np.sum(wts * nodes**k * np.exp(1j * (y * nodes - nodes**m / m)))
    else:
        xi1 = 0.0
    r, wr = _panel_rule(_ray_edges(xi1, y, m, k, theta), n)
    z = xi1 + r * e
    total += e * np.sum(wr * z**k * np.exp(1j * (y * z - z**m / m)))
    return complex(total)


class HalfLine(NamedTuple):
    value: np.ndarray
    abs_err: np.ndarray


def half_line_integral(
    y: float | Sequence[float] | np.ndarray, m: int, k: int = 0, q: OscQuadParams = OscQuadParams()
) -> HalfLine:
    """I_k(y) = int_0^inf xi^k exp(i(y xi - xi^m/m)) dxi with an error estimate.

    The estimate is the difference between the n-node and n/2-node panel rules.
    """
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    val = np.empty(ys.size, dtype=np.complex128)
    err = np.empty(ys.size)
    for i, yi in enumerate(ys):
        hi = _half_line_single(float(yi), m, k, q, q.nodes)
        lo = _half_line_single(float(yi), m, k, q, q.nodes // 2)
        val[i] = hi
        err[i] = abs(hi - lo)
    return HalfLine(val.reshape(np.shape(y)), err.reshape(np.shape(y)))


class Q0Result(NamedTuple):
    value: np.ndarray
    abs_err: np.ndarray


def q0_eval(
    y,
    m: int,
    q: OscQuadParams = OscQuadParams(),
    k: int = 0,
    absolute: bool = False,
    strict: bool = True,
) -> Q0Result:
    """Q_0 and its derivatives.

    ``k`` selects d^k/dy^k, or |d/dy|^k when ``absolute`` is set (symbol
    |xi|^k); the latter is what enters |d/dy|^{m-1} Q_0 - y Q_0 = 0.
    With ``strict`` an error estimate above ``q.tol`` raises QuadratureError.
    """
    if m < 3:
        raise ValueError("m must be >= 3")
    hl = half_line_integral(y, m, k, q)
    factor = 1.0 if absolute else 1j**k
    value = (factor * hl.value).real / np.pi
    err = hl.abs_err / np.pi
    if strict and np.any(err > q.tol):
        worst = float(np.max(err))
        raise QuadratureError(f"Q_0 quadrature error estimate {worst:.2e} exceeds {q.tol:.1e}")
    return Q0Result(value, err)


def q0_at_zero(m: int) -> float:
    """Closed form Q_0(0) = m^{1/m} Gamma(1+1/m) cos(pi/(2m)) / pi."""
    return m ** (1.0 / m) * float(gamma_fn(1.0 + 1.0 / m)) * math.cos(math.pi / (2 * m)) / math.pi


def q0_envelope_exponent(m: int, k: int) -> float:
    return k / (m - 1) - (m - 2) / (2 * (m - 1))


def q0_derivative_envelope_check(
    m: int, k: int, samples: Iterable[float], q: OscQuadParams = OscQuadParams()
) -> dict:
    """sup |Q_0^{(k)}(y)| / <y>^{k/(m-1) - (m-2)/(2(m-1))} over the samples."""
    if not 0 <= k <= m - 2:
        raise ValueError("k must lie in 0..m-2")
    ys = np.asarray(list(samples), dtype=float)
    vals = q0_eval(ys, m, q, k=k).value
    env = (1.0 + ys**2) ** (0.5 * q0_envelope_exponent(m, k))
    ratio = np.abs(vals) / env
    i = int(np.argmax(ratio))
    sup = float(ratio[i])
    return {
        "m": m,
        "k": k,
        "sup_ratio": sup,
        "argmax_y": float(ys[i]),
        "n_samples": int(ys.size),
        "pass": bool(np.isfinite(sup)),
    }


def linear_oscillatory_leading(
    u0_hat: Callable[[np.ndarray], np.ndarray], t: float, x, m: int
) -> np.ndarray:
    """Stationary-phase leading term of U(t)u_0 for x > 0.

    c_0 t^{-1/m} (t^{-1/m}x)^{-(m-2)/(2(m-1))} Re{u0_hat(xi_x) e^{i phi(t,x)}}
    with xi_x = (x/t)^{1/(m-1)} and c_0 = 2/sqrt(m-1).
    """
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0):
        raise ValueError("leading oscillatory term is defined for x > 0 only")
    c0 = 2.0 / math.sqrt(m - 1)
    xi = (xs / t) ** (1.0 / (m - 1))
    phi = (m - 1) / m * t ** (-1.0 / (m - 1)) * xs ** (m / (m - 1)) - math.pi / 4
    amp = c0 * t ** (-1.0 / m) * (t ** (-1.0 / m) * xs) ** (-(m - 2) / (2 * (m - 1)))
    return amp * np.real(u0_hat(xi) * np.exp(1j * phi))


def linear_decay_report(
    u0: Field,
    model: DispersionModel,
    times: Sequence[float],
    ks: Sequence[int] | None = None,
) -> dict[int, dict]:
    """Fit sup_x |d^k U(t) u0| ~ t^slope for each k."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 1):
        raise ValueError("times must lie in [1, inf)")
    if np.log10(times.max() / times.min()) < 1.5 - 1e-12:
        raise ValueError("times must span at least 1.5 decades")
    ks = list(range(model.m - 1)) if ks is None else list(ks)
    out = {}
    for k in ks:
        series = []
        for t in times:
            ut = propagate(u0, float(t), model)
            dk = derivative(ut, k) if k else ut
            series.append((float(t), norm(dk, "linf")))
        fit: PowerFit = fit_decay_exponent(series)
        out[k] = {
            "slope": fit.slope,
            "stderr": fit.stderr,
            "expected": -(k + 1) / model.m,
            "series": series,
        }
    return out


def tabulate_q0(path: str | Path, m: int, ys: Sequence[float], q: OscQuadParams = OscQuadParams()) -> Path:
    """Write (m, y, Q0, abs_err_estimate) rows."""
    path = Path(path)
    res = q0_eval(np.asarray(ys, dtype=float), m, q, strict=False)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "y", "Q0", "abs_err_estimate"])
        for y, v, e in zip(ys, res.value, res.abs_err):
            w.writerow([m, repr(float(y)), repr(float(v)), repr(float(e))])
    return path
