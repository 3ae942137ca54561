"""Periodic pseudospectral foundation.

The real line is replaced by the box ``[-L/2, L/2)`` sampled at ``n`` points.
Spectra use the unitary convention

    u_hat(xi) = (2 pi)^(-1/2) * dx * sum_j u(x_j) exp(-i x_j xi),

so that discrete Parseval reads ``sum |u|^2 dx == sum |u_hat|^2 dxi``.
Arrays of modes follow numpy's FFT ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal

import numpy as np
from scipy.signal import czt

SQRT_2PI = np.sqrt(2.0 * np.pi)


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n: int
    length: float

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise GridError(f"n must be a power of two >= 16, got {self.n}")
        if not self.length > 0:
            raise GridError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.length

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.n)

    @cached_property
    def xi(self) -> np.ndarray:
        """Angular frequencies in FFT order."""
        return self.dxi * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.n // 2] = True
        return mask

    @cached_property
    def _shift(self) -> np.ndarray:
        # exp(-i x_0 xi_k) = (-1)^k for x_0 = -L/2
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.where(k.astype(int) % 2 == 0, 1.0, -1.0)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        return (self.dx / SQRT_2PI) * self._shift * np.fft.fft(values)

    def synthesize(self, spectrum: np.ndarray) -> np.ndarray:
        return (self.dxi * self.n / SQRT_2PI) * np.fft.ifft(self._shift * spectrum)

    def to_dict(self) -> dict:
        return {"n": self.n, "length": self.length}


def make_grid(n: int, length: float) -> Grid:
    return Grid(int(n), float(length))


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a function on a grid, real or complex.

    The spectrum is computed on first access and cached; fields are never
    mutated in place.
    """

    grid: Grid
    values: np.ndarray
    _spectrum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        vals = vals.astype(np.complex128 if np.iscomplexobj(vals) else np.float64, copy=True)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return cls(grid, f(grid.x))

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum: np.ndarray, real: bool = True) -> "Field":
        vals = grid.synthesize(spectrum)
        if real:
            vals = vals.real
        return cls(grid, vals, np.array(spectrum, dtype=np.complex128))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    @cached_property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is not None:
            return self._spectrum
        return self.grid.analyze(self.values)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c) -> "Field":
        if isinstance(c, Field):
            return Field(self.grid, self.values * c.values)
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__


def multiplier_apply(
    f: Field, symbol: Callable[[np.ndarray], np.ndarray] | np.ndarray, real: bool | None = None
) -> Field:
    """Multiply the spectrum of ``f`` by ``symbol(xi)``; the Nyquist mode is zeroed.

    ``real`` defaults to ``f.is_real``. A real result requires a Hermitian
    symbol, ``symbol(-xi) == conj(symbol(xi))``.
    """
    grid = f.grid
    s = symbol(grid.xi) if callable(symbol) else np.asarray(symbol)
    s = np.broadcast_to(np.asarray(s, dtype=np.complex128), grid.xi.shape)
    if not np.all(np.isfinite(s)):
        raise ValueError("symbol is not finite on every grid mode")
    if real is None:
        real = f.is_real
    if real:
        mirror = np.roll(s[::-1], 1)  # value at -xi_k
        interior = ~grid.nyquist_mask
        scale = max(1.0, float(np.max(np.abs(s[interior]))))
        if np.max(np.abs(mirror - np.conj(s))[interior]) > 1e-12 * scale:
            raise ValueError("symbol is not Hermitian; cannot produce a real field")
    spec = f.spectrum * s
    spec[grid.nyquist_mask] = 0.0
    return Field.from_spectrum(grid, spec, real=real)


def fractional_derivative(f: Field, a: float) -> Field:
    """|d/dx|^a via the symbol |xi|^a."""
    if a < 0:
        raise ValueError("order must be nonnegative")
    if a == 0:
        return multiplier_apply(f, np.ones_like(f.grid.xi))
    return multiplier_apply(f, np.abs(f.grid.xi) ** a)


def derivative(f: Field, k: int = 1) -> Field:
    return multiplier_apply(f, (1j * f.grid.xi) ** k)


def padded_size(n: int, p: float) -> int:
    """Smallest even size >= n*(p+1)/2 with only small prime factors."""
    target = int(np.ceil(n * (p + 1) / 2.0))
    m = max(target, n)
    while True:
        if m % 2 == 0:
            r = m
            for q in (2, 3, 5):
                while r % q == 0:
                    r //= q
            if r == 1:
                return m
        m += 1


def power_on_padded(
    values: np.ndarray, p: float, fn: Callable[[np.ndarray], np.ndarray] | None = None
) -> np.ndarray:
    """Band-truncated ``fn(u)`` (default ``u**p``) computed on a zero-padded grid.

    Works on raw real samples in FFT layout and returns real samples on the
    original grid. Exact for integer ``p`` whenever the input has no Nyquist
    content.
    """
    n = values.size
    npad = padded_size(n, p)
    uh = np.fft.rfft(values)
    uh[-1] = 0.0  # Nyquist
    up = np.fft.irfft(uh, npad) * (npad / n)
    wp = fn(up) if fn is not None else up**p
    wh = np.fft.rfft(wp)[: n // 2 + 1] * (n / npad)
    wh[-1] = 0.0
    return np.fft.irfft(wh, n)


def dealiased_power(f: Field, p: int) -> Field:
    if int(p) != p or p < 2:
        raise ValueError(f"power must be an integer >= 2, got {p}")
    if not f.is_real:
        raise ValueError("dealiased_power expects a real field")
    return Field(f.grid, power_on_padded(f.values, int(p)))


def sigma_lp(xi: np.ndarray) -> np.ndarray:
    """Smooth even cutoff: 1 on |xi| <= 1, 0 on |xi| >= 2."""
    a = np.abs(np.asarray(xi, dtype=float))
    s = np.clip(a - 1.0, 0.0, 1.0)

    def h(z):
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.exp(-1.0 / z[pos])
        return out

    num = h(1.0 - s)
    return num / (num + h(s))


def band_symbol(xi: np.ndarray, N: float) -> np.ndarray:
    """sigma_N(xi) = sigma(xi/N) - sigma(2 xi/N)."""
    return sigma_lp(xi / N) - sigma_lp(2.0 * xi / N)


def band_project(f: Field, N: float) -> Field:
    if not N > 0:
        raise ValueError("N must be positive")
    return multiplier_apply(f, band_symbol(f.grid.xi, N))


@dataclass(frozen=True)
class WeightSpec:
    """Weight ``<t^{-1/m} x>^beta`` or ``(t^{-1/m} x)^beta`` as function of x.

    ``one_sided`` uses ``|t^{-1/m} x|``, so it is only positive away from 0;
    callers restrict it to a region that excludes the origin.
    """

    t: float
    m: int
    exponent: float
    kind: Literal["bracket", "one_sided"] = "bracket"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = self.t ** (-1.0 / self.m) * np.asarray(x)
        if self.kind == "bracket":
            return (1.0 + z * z) ** (0.5 * self.exponent)
        return np.abs(z) ** self.exponent


NormKind = Literal["l2", "linf", "hs"]


def norm(
    f: Field,
    kind: NormKind = "l2",
    s: float = 0.0,
    weight: WeightSpec | Callable[[np.ndarray], np.ndarray] | None = None,
    region: np.ndarray | Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """L2 / Linf / H^s norms, optionally weighted and restricted to a region.

    ``region`` is a boolean mask over the grid or a predicate of x. The H^s
    norm uses the multiplier <xi>^s and ignores weight and region.
    """
    grid = f.grid
    if kind == "hs":
        spec = f.spectrum
        return float(np.sqrt(np.sum((1.0 + grid.xi**2) ** s * np.abs(spec) ** 2) * grid.dxi))
    vals = f.values
    if weight is not None:
        vals = vals * weight(grid.x)
    if region is not None:
        mask = region(grid.x) if callable(region) else np.asarray(region, dtype=bool)
        if not mask.any():
            raise ValueError("norm region is empty on this grid")
        vals = vals[mask]
    if vals.size == 0:
        return 0.0
    if kind == "l2":
        return float(np.sqrt(np.sum(np.abs(vals) ** 2) * grid.dx))
    if kind == "linf":
        return float(np.max(np.abs(vals)))
    raise ValueError(f"unknown norm kind {kind!r}")


def eval_at(f: Field, x: np.ndarray | float, chunk: int = 256) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` at arbitrary points."""
    grid = f.grid
    pts = np.atleast_1d(np.asarray(x, dtype=float))
    spec = f.spectrum.copy()
    spec[grid.nyquist_mask] = 0.0
    keep = np.abs(spec) > 1e-300
    xi, sp = grid.xi[keep], spec[keep]
    out = np.empty(pts.size, dtype=np.complex128)
    for i in range(0, pts.size, chunk):
        ph = np.exp(1j * np.outer(pts[i : i + chunk], xi))
        out[i : i + chunk] = ph @ sp
    out *= grid.dxi / SQRT_2PI
    return out.real if f.is_real else out


def eval_uniform(f: Field, start: float, step: float, count: int) -> np.ndarray:
    """Trigonometric interpolant of ``f`` at ``start + j*step``, j < count.

    Same values as ``eval_at`` on a uniform set, via a chirp-z transform.
    """
    grid = f.grid
    spec = f.spectrum.copy()
    spec[grid.nyquist_mask] = 0.0
    # ascending mode order k = -n/2 .. n/2-1
    coeffs = np.fft.fftshift(spec)
    xi = np.fft.fftshift(grid.xi)
    coeffs = coeffs * np.exp(1j * start * xi)
    w = np.exp(1j * step * grid.dxi)
    vals = czt(coeffs, m=count, w=w, a=1.0)
    j = np.arange(count)
    vals = vals * np.exp(1j * step * j * xi[0]) * (grid.dxi / SQRT_2PI)
    return vals.real if f.is_real else vals


def spectrum_at(f: Field, xi: np.ndarray | float, chunk: int = 256) -> np.ndarray:
    """Continuous transform of the sampled field at arbitrary frequencies.

    Equals the band-limited (zero-padded FFT) interpolant of the discrete
    spectrum; exact for fields that vanish at the box edges.
    """
    grid = f.grid
    q = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = f.values
    out = np.empty(q.size, dtype=np.complex128)
    for i in range(0, q.size, chunk):
        ph = np.exp(-1j * np.outer(q[i : i + chunk], grid.x))
        out[i : i + chunk] = ph @ vals
    return out * (grid.dx / SQRT_2PI)


def exponential_filter(grid: Grid, fraction: float = 1.0 / 6.0, order: int = 16) -> np.ndarray:
    """Filter acting on the top ``fraction`` of modes; 1 below that band."""
    kmax = np.max(np.abs(grid.xi))
    k0 = (1.0 - fraction) * kmax
    z = np.clip((np.abs(grid.xi) - k0) / (kmax - k0), 0.0, None)
    return np.exp(-36.0 * z**order)


def positive_part(f: Field) -> Field:
    """P^+ f: keep xi > 0 only (complex result)."""
    return multiplier_apply(f, (f.grid.xi > 0).astype(float), real=False)
