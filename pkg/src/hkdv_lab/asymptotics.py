"""Three-region description of u(t) at large t.

The line splits at x_b = c t^{1/m} t^{(m-1) rho} into a decaying region
(x < -x_b), a self-similar region (|x| <= x_b) and an oscillatory region
(x > x_b). Every norm reported here carries the weights of the corresponding
asymptotic statement, so bounded values mean O(eps) constants.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .evolution import Perturbation
from .fitting import FitError, PowerFit, fit_decay_exponent
from .linear_dispersion import linear_oscillatory_leading
from .self_similar import ProfileQ
from .spectral_core import Field, eval_at
from .wave_packets import WTable

__all__ = [
    "RegionPartition",
    "RegionReport",
    "RegionError",
    "perturbation_shift",
    "partition",
    "decaying_norms",
    "self_similar_region_norms",
    "oscillatory_region_norms",
    "self_similar_error",
    "oscillatory_error",
    "frequency_error",
    "compensated_W",
    "region_report",
    "write_region_reports",
    "fit_decay_exponent",
    "FitError",
    "PowerFit",
]


class RegionError(ValueError):
    pass


def perturbation_shift(m: int, p: float) -> float:
    """a = max((2m + 1 - 2p)/(2m), 0)."""
    return max((2 * m + 1 - 2 * p) / (2 * m), 0.0)


@dataclass(frozen=True)
class RegionPartition:
    t: float
    m: int
    epsilon: float
    rho: float
    shift: float  # a; zero without perturbation
    const: float
    boundary: float  # x_b
    freq_floor: float  # xi_b

    @property
    def boundary_exponent(self) -> float:
        return 1.0 / self.m + (self.m - 1) * self.rho

    def masks(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Indicators of the decaying, self-similar and oscillatory regions."""
        left = x < -self.boundary
        right = x > self.boundary
        return left, ~(left | right), right


def partition(
    t: float, m: int, epsilon: float, perturbation: Perturbation | None = None, const: float = 1.0
) -> RegionPartition:
    if t < 1:
        raise RegionError("regions are defined for t >= 1")
    if not 0 < epsilon < 1 / (2 * m):
        raise RegionError(f"epsilon must lie in (0, 1/(2m)) = (0, {1 / (2 * m):.4g}), got {epsilon}")
    a = 0.0
    if perturbation is not None:
        a = perturbation_shift(m, perturbation.p)
        if not a < 1 / (2 * m):
            raise RegionError("perturbation shift must be below 1/(2m)")
    rho = (1.0 / m) * (1.0 / (2 * m) - a - epsilon)
    if not rho > 0:
        raise RegionError(f"rho = {rho:.4g} is not positive")
    xb = const * t ** (1.0 / m) * t ** ((m - 1) * rho)
    xib = const * t ** (-1.0 / m) * t ** ((1.0 / m) * (1.0 / (2 * m) - epsilon))
    return RegionPartition(t, m, epsilon, rho, a, const, xb, xib)


def _norms(vals: np.ndarray, dx: float) -> tuple[float, float]:
    if vals.size == 0:
        raise RegionError("region is empty on this grid")
    return float(np.max(np.abs(vals))), float(np.sqrt(np.sum(np.abs(vals) ** 2) * dx))


def decaying_norms(u: Field, part: RegionPartition) -> tuple[float, float]:
    """(|| t^{1/m} <z>^{(2m-3)/(2(m-1))} u ||_inf, || t^{1/(2m)} <z> u ||_2) on x < -x_b, z = t^{-1/m} x."""
    t, m = part.t, part.m
    x = u.grid.x
    left = part.masks(x)[0]
    if not left.any():
        raise RegionError("decaying region is empty on this grid")
    z = t ** (-1.0 / m) * x[left]
    br = np.sqrt(1 + z * z)
    v = u.values[left]
    sup = float(np.max(t ** (1.0 / m) * br ** ((2 * m - 3) / (2 * (m - 1))) * np.abs(v)))
    l2 = float(np.sqrt(np.sum((t ** (0.5 / m) * br * np.abs(v)) ** 2) * u.grid.dx))
    return sup, l2


def self_similar_region_norms(u: Field, part: RegionPartition) -> tuple[float, float]:
    """(|| t^{1/m} u ||_inf, || t^{1/(2m)} u ||_2) on |x| <= x_b."""
    mid = part.masks(u.grid.x)[1]
    sup, l2 = _norms(u.values[mid], u.grid.dx)
    return part.t ** (1.0 / part.m) * sup, part.t ** (0.5 / part.m) * l2


def _envelope(part: RegionPartition, x: np.ndarray) -> np.ndarray:
    # t^{-1/m} (t^{-1/m} x)^{-(m-2)/(2(m-1))}: amplitude of the oscillatory leading term
    t, m = part.t, part.m
    return t ** (-1.0 / m) * (t ** (-1.0 / m) * x) ** (-(m - 2) / (2 * (m - 1)))


def oscillatory_region_norms(u: Field, part: RegionPartition) -> tuple[float, float]:
    """(|| u / envelope ||_inf, || u ||_2) on x > x_b."""
    x = u.grid.x
    right = part.masks(x)[2]
    if not right.any():
        raise RegionError("oscillatory region is empty on this grid")
    sup = float(np.max(np.abs(u.values[right]) / _envelope(part, x[right])))
    return sup, _norms(u.values[right], u.grid.dx)[1]


def self_similar_error(u: Field, Q: ProfileQ, part: RegionPartition) -> tuple[float, float]:
    """Normalized || u - t^{-1/m} Q(t^{-1/m} x) || on |x| <= x_b.

    The sup is divided by t^{-1/m - (m-3/2) rho}, the L2 norm by
    t^{-1/(2m) - (m-1) rho}.
    """
    t, m, rho = part.t, part.m, part.rho
    x = u.grid.x
    mid = part.masks(x)[1]
    y = t ** (-1.0 / m) * x[mid]
    if np.max(np.abs(y)) > Q.window:
        raise RegionError(f"self-similar region |y| <= {np.max(np.abs(y)):.4g} exceeds the profile window")
    qv = eval_at(Q.Q, y)
    diff = u.values[mid] - t ** (-1.0 / m) * qv
    sup, l2 = _norms(diff, u.grid.dx)
    return sup / t ** (-1.0 / m - (m - 1.5) * rho), l2 / t ** (-0.5 / m - (m - 1) * rho)


def oscillatory_error(u: Field, W: WTable | Callable, part: RegionPartition) -> tuple[float, float]:
    """Weighted norms of err_x = u - leading term on x > x_b.

    Weights t^{1/m} z^{3(m-2)/(4(m-1))} (sup) and t^{1/(2m)} z^{(m-2)/(2(m-1))}
    (L2), z = t^{-1/m} x.
    """
    t, m = part.t, part.m
    x = u.grid.x
    right = part.masks(x)[2]
    if not right.any():
        raise RegionError("oscillatory region is empty on this grid")
    xr = x[right]
    lead = np.zeros(xr.size)
    # a table only covers the resolved band; beyond it the leading term is zero
    xi_max = W.xi[-1] if isinstance(W, WTable) else np.inf
    inside = (xr / t) ** (1.0 / (m - 1)) <= xi_max
    if inside.any():
        lead[inside] = linear_oscillatory_leading(W, t, xr[inside], m)
    err = u.values[right] - lead
    z = t ** (-1.0 / m) * xr
    sup = float(np.max(t ** (1.0 / m) * z ** (3 * (m - 2) / (4 * (m - 1))) * np.abs(err)))
    l2 = float(np.sqrt(np.sum((t ** (0.5 / m) * z ** ((m - 2) / (2 * (m - 1))) * err) ** 2) * u.grid.dx))
    return sup, l2


def frequency_error(u: Field, W: WTable | Callable, part: RegionPartition) -> tuple[float, float]:
    """Weighted norms of err_xi = u_hat - W e^{-(i/m) t xi^m} over grid modes xi >= xi_b.

    Weights (t^{1/m} xi)^{(m-2)/4} (sup) and t^{1/(2m)} (t^{1/m} xi)^{(m-2)/2} (L2).
    """
    t, m = part.t, part.m
    g = u.grid
    sel = (g.xi >= part.freq_floor) & ~g.nyquist_mask
    xi = g.xi[sel]
    if xi.size == 0:
        raise RegionError("frequency region is empty on this grid")
    err = u.spectrum[sel] - W(xi) * np.exp(-1j * t * xi**m / m)
    z = t ** (1.0 / m) * xi
    sup = float(np.max(z ** ((m - 2) / 4) * np.abs(err)))
    l2 = float(np.sqrt(np.sum((t ** (0.5 / m) * z ** ((m - 2) / 2) * np.abs(err)) ** 2) * g.dxi))
    return sup, l2


def compensated_W(u: Field, t: float, m: int) -> WTable:
    """W(xi) = e^{(i/m) t xi^m} u_hat(t, xi) on the nonnegative grid modes."""
    g = u.grid
    k = np.arange(g.n // 2)
    xi = g.xi[k]
    vals = np.exp(1j * t * xi**m / m) * u.spectrum[k]
    return WTable(xi=xi, values=vals, below_floor=np.zeros(xi.size, dtype=bool), m=m)


@dataclass
class RegionReport:
    t: float
    partition: dict
    decaying: tuple[float, float]
    self_similar: tuple[float, float]
    oscillatory: tuple[float, float]
    self_similar_error: tuple[float, float] | None = None
    err_x: tuple[float, float] | None = None
    err_xi: tuple[float, float] | None = None
    verdicts: dict = field(default_factory=dict)

    def region_norms(self) -> dict[str, float]:
        return {
            "decaying_sup": self.decaying[0],
            "decaying_l2": self.decaying[1],
            "self_similar_sup": self.self_similar[0],
            "self_similar_l2": self.self_similar[1],
            "oscillatory_sup": self.oscillatory[0],
            "oscillatory_l2": self.oscillatory[1],
        }

    def is_finite(self) -> bool:
        vals = list(self.decaying) + list(self.self_similar) + list(self.oscillatory)
        for extra in (self.self_similar_error, self.err_x, self.err_xi):
            if extra is not None:
                vals += list(extra)
        return bool(np.all(np.isfinite(vals)))

    def to_dict(self) -> dict:
        return asdict(self)


def region_report(
    u: Field,
    part: RegionPartition,
    Q: ProfileQ | None = None,
    W: WTable | Callable | None = None,
    bound: float | None = None,
) -> RegionReport:
    """All region norms at one time; with ``bound`` each error norm gets a PASS/FAIL verdict."""
    rep = RegionReport(
        t=part.t,
        partition={**asdict(part), "boundary_exponent": part.boundary_exponent},
        decaying=decaying_norms(u, part),
        self_similar=self_similar_region_norms(u, part),
        oscillatory=oscillatory_region_norms(u, part),
    )
    if Q is not None:
        rep.self_similar_error = self_similar_error(u, Q, part)
    if W is not None:
        rep.err_x = oscillatory_error(u, W, part)
        rep.err_xi = frequency_error(u, W, part)
    if bound is not None:
        for name in ("err_x", "err_xi"):
            val = getattr(rep, name)
            if val is not None:
                rep.verdicts[name] = {"bound": bound, "value": max(val), "pass": bool(max(val) <= bound)}
    return rep


def write_region_reports(path: str | Path, reports: list[RegionReport], extra: dict | None = None) -> Path:
    path = Path(path)
    payload = {"reports": [r.to_dict() for r in reports]}
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")
