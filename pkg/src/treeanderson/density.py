"""Deterministic backend: Cauchy-projected densities on the real line.

Measures on the upper half-plane are pushed to the real line by averaging
Cauchy kernels. The projected fixed-point map then acts on densities by
K-fold convolution, convolution with the potential law and with the
Cauchy law of width ``eta``, and pushforward by ``y -> -1/(y + E)``.

Densities live on a uniform grid and carry an analytic model of the part of
the mass outside it, ``f(center + x) <= s (|x| - r)_+**-2``
(:class:`TailBound`). The same parameter arithmetic gives an explicit
certificate for concentration in the hyperbolic regime
(:func:`tail_step`, :func:`tail_certify`).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import PchipInterpolator

from .disorder import ConfigurationError, DisorderLaw
from .halfplane import EnergyPoint, free_green

__all__ = [
    "TailBound",
    "GridSpec",
    "ExteriorTable",
    "GridDensity",
    "CertificateBreakdown",
    "CertificateReport",
    "cauchy_density",
    "cauchy_grid",
    "cauchy_project",
    "law_grid",
    "law_tail",
    "grid_convolve",
    "pushforward_reciprocal",
    "density_step",
    "density_fixed_point",
    "l1_distance",
    "combine_tails",
    "hyperbolic_tau",
    "push_tail",
    "tail_step",
    "tail_certify",
    "save_density",
]

SMOOTH_CELLS = 4
# sigma_i([1, inf)) = 1/2 - arctan(1)/pi
CAUCHY_UPPER_QUARTER = 0.25


class CertificateBreakdown(ArithmeticError):
    """The contraction step is unavailable because ``|w| r >= 1``."""


@dataclass(frozen=True)
class TailBound:
    """The claim ``f(center + x) <= s (|x| - r)_+**-2``."""

    s: float
    r: float = 0.0
    center: float = 0.0

    def __post_init__(self):
        if self.s < 0 or self.r < 0:
            raise ValueError(f"tail parameters must be >= 0, got s={self.s}, r={self.r}")

    def __call__(self, x):
        u = np.abs(np.asarray(x, dtype=float) - self.center) - self.r
        with np.errstate(divide="ignore"):
            out = np.where(u > 0, self.s / np.where(u > 0, u, 1.0) ** 2, np.inf)
        return out[()] if out.ndim == 0 else out

    def mass_outside(self, lo: float, hi: float) -> float:
        """Integral of the bound over ``(-inf, lo] U [hi, inf)``."""
        right = hi - self.center - self.r
        left = self.center - lo - self.r
        if self.s == 0:
            return 0.0
        if right <= 0 or left <= 0:
            return math.inf
        return self.s / right + self.s / left

    def as_dict(self) -> dict:
        return {"s": self.s, "r": self.r, "center": self.center}


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``x_min + j dx``, ``j = 0..n_points-1``."""

    x_min: float
    dx: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 4 or self.n_points & (self.n_points - 1):
            raise ValueError(f"n_points must be a power of two >= 4, got {self.n_points}")
        if not self.dx > 0:
            raise ValueError("dx must be positive")

    @classmethod
    def symmetric(cls, half_width: float, n_points: int = 2**14) -> "GridSpec":
        """Grid on ``[-X, X)`` with 0 as node ``n_points // 2``."""
        return cls(-float(half_width), 2.0 * half_width / n_points, int(n_points))

    @classmethod
    def for_energy(cls, E: float, n_points: int = 2**14) -> "GridSpec":
        return cls.symmetric(max(8.0, 4.0 * (abs(E) + 1.0)), n_points)

    @property
    def x_max(self) -> float:
        return self.x_min + (self.n_points - 1) * self.dx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def offset(self) -> int:
        """``x_min / dx`` as an integer; grids used in convolutions need it exact."""
        k = self.x_min / self.dx
        if abs(k - round(k)) > 1e-6:
            raise ValueError("grid is not aligned with the origin")
        return int(round(k))

    def padded(self, factor: int) -> "GridSpec":
        """Same spacing, ``2*factor + 1`` times wider (rounded up to a power of two)."""
        n = 1 << int(math.ceil(math.log2(self.n_points * (2 * factor + 1))))
        extra = (n - self.n_points) // 2
        return GridSpec(self.x_min - extra * self.dx, self.dx, n)

    def contains(self, y):
        return (y >= self.x_min) & (y <= self.x_max)


@dataclass(frozen=True, eq=False)
class ExteriorTable:
    """Exact density values beyond a grid, tabulated at geometric distances.

    ``left`` and ``right`` hold values at distances ``dist`` below
    ``x_min`` and above ``x_max``; evaluation interpolates ``log f`` in
    ``log dist`` and continues with an inverse-square law past the table.
    ``mass`` is the exact mass beyond the grid the table describes.
    """

    x_min: float
    x_max: float
    dist: np.ndarray
    left: np.ndarray
    right: np.ndarray
    left_mass: float
    right_mass: float

    @property
    def mass(self) -> float:
        return self.left_mass + self.right_mass

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        d = np.where(y < self.x_min, self.x_min - y, y - self.x_max)
        d = np.maximum(d, self.dist[0])
        ld = np.log(d)
        out = np.empty_like(y)
        for side, sel in ((self.left, y < self.x_min), (self.right, y >= self.x_min)):
            logv = np.log(np.maximum(side, 1e-300))
            out[sel] = np.exp(np.interp(ld[sel], np.log(self.dist), logv))
            far = sel & (d > self.dist[-1])
            out[far] = side[-1] * (self.dist[-1] / d[far]) ** 2
        return out


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density values on a grid plus a model of the mass beyond it.

    ``tail_mass`` is the mass outside ``[x_min, x_max]``; ``tail`` gives its
    shape. Values beyond the grid are ``kappa * tail(x)`` with ``kappa``
    chosen so that they integrate to ``tail_mass``. When an exact
    :class:`ExteriorTable` is attached it supplies the shape instead.
    """

    grid: GridSpec
    values: np.ndarray
    tail: TailBound | None = None
    tail_mass: float = 0.0
    table: ExteriorTable | None = None
    _interp: object = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError("values do not match the grid")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and >= 0")
        object.__setattr__(self, "values", v)

    x_min = property(lambda self: self.grid.x_min)
    x_max = property(lambda self: self.grid.x_max)
    n_points = property(lambda self: self.grid.n_points)
    x = property(lambda self: self.grid.x)

    @property
    def grid_mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.grid.dx))

    @property
    def mass(self) -> float:
        return self.grid_mass + self.tail_mass

    @property
    def kappa(self) -> float:
        if self.tail is None or self.tail_mass <= 0:
            return 0.0
        model = self.tail.mass_outside(self.x_min, self.x_max)
        if not math.isfinite(model) or model <= 0:
            return 0.0
        return self.tail_mass / model

    def exterior(self, y):
        """Tail model values for points outside the grid."""
        if self.table is not None:
            if self.tail_mass <= 0 or self.table.mass <= 0:
                return np.zeros_like(np.asarray(y, dtype=float))
            return self.table(y) * (self.tail_mass / self.table.mass)
        if self.tail is None:
            return np.zeros_like(np.asarray(y, dtype=float))
        with np.errstate(invalid="ignore"):
            out = self.kappa * self.tail(y)
        return np.where(np.isfinite(out), out, 0.0)

    def evaluate(self, y) -> np.ndarray:
        """Density at arbitrary points: monotone cubic inside, tail model outside."""
        y = np.asarray(y, dtype=float)
        self._interpolant()
        inside = self.grid.contains(y)
        out = np.empty_like(y)
        out[inside] = np.maximum(self._interp(y[inside]), 0.0)
        out[~inside] = self.exterior(y[~inside])
        return out

    def _interpolant(self):
        if self._interp is None:
            object.__setattr__(self, "_interp", PchipInterpolator(self.x, self.values, extrapolate=False))
        return self._interp

    def cdf(self, y: float) -> float:
        """Mass on ``(-inf, y]`` from the exterior model and the interpolant's integral."""
        left = 0.0
        if self.table is not None and self.table.mass > 0:
            left = self.tail_mass * self.table.left_mass / self.table.mass
        elif self.tail is not None and self.tail_mass > 0:
            t = self.tail
            right_d, left_d = self.x_max - t.center - t.r, t.center - self.x_min - t.r
            if right_d > 0 and left_d > 0:
                left = self.tail_mass * (1 / left_d) / (1 / left_d + 1 / right_d)
            else:
                left = self.tail_mass / 2
        if y < self.x_min:
            return left
        y = min(y, self.x_max)
        anti = self._interpolant().antiderivative()
        return left + float(anti(y) - anti(self.x_min))

    def normalized(self) -> "GridDensity":
        m = self.mass
        if not m > 0:
            raise ValueError("density has no mass")
        return replace(self, values=self.values / m, tail_mass=self.tail_mass / m, _interp=None)

    def check(self, tol: float = 1e-4) -> None:
        if abs(self.mass - 1.0) > tol:
            raise ConfigurationError(f"density mass {self.mass:.8f} is not 1 within {tol}")


def _extended(f: GridDensity, target: GridSpec) -> np.ndarray:
    """Values of ``f`` on a wider grid sharing its spacing and origin."""
    k0 = f.grid.offset - target.offset
    out = f.exterior(target.x)
    out[k0:k0 + f.n_points] = f.values
    return out


def cauchy_density(z, x):
    """Density of the Cauchy law with barycenter ``z = a + ib`` at ``x``."""
    z = np.asarray(z, dtype=complex)
    a, b = z.real, z.imag
    return b / (np.pi * (b**2 + (np.asarray(x, dtype=float) - a) ** 2))


def _cauchy_upper(z, x):
    """``sigma_z((x, inf))``."""
    z = np.asarray(z, dtype=complex)
    return 0.5 - np.arctan((x - z.real) / z.imag) / np.pi


def cauchy_grid(z: complex, grid: GridSpec) -> GridDensity:
    """``sigma_z`` sampled on ``grid`` with its exact tail mass."""
    z = complex(z)
    if not z.imag > 0:
        raise ValueError("Cauchy barycenter must lie in the upper half-plane")
    return cauchy_project(np.array([z]), grid)


def cauchy_project(pool, grid: GridSpec, beta: float = 0.0, chunk: int = 512) -> GridDensity:
    """Cauchy projection ``(1/N) sum_k sigma_{g_k}`` of a pool, sampled on ``grid``.

    The tail model is centered at the pool barycenter ``c`` with
    ``r = beta**(1/4) |c|`` and ``s`` the largest value of
    ``f(x) (|x - c| - r)**2`` over probe points outside the grid. The tail
    mass is exact.
    """
    g = np.asarray(getattr(pool, "samples", pool), dtype=complex)
    center = float(np.mean(g.real))
    if not (grid.x_min <= center <= grid.x_max):
        raise ConfigurationError(
            f"pool barycenter {center:.4g} outside grid [{grid.x_min:.4g}, {grid.x_max:.4g}]"
        )
    x = grid.x
    acc = np.zeros_like(x)
    for a in range(0, g.size, chunk):
        blk = g[a:a + chunk]
        b = blk.imag[:, None]
        acc += np.sum(b / (b * b + (x[None, :] - blk.real[:, None]) ** 2), axis=0)
    vals = acc / (np.pi * g.size)

    r = beta**0.25 * abs(center)
    span = max(grid.x_max - center, center - grid.x_min)
    dist = np.geomspace(grid.dx / 4, 1e4 * span, 64)
    probes = np.concatenate([grid.x_min - dist, grid.x_max + dist])
    fp = np.zeros_like(probes)
    for a in range(0, g.size, chunk):
        fp += np.sum(cauchy_density(g[a:a + chunk, None], probes[None, :]), axis=0)
    fp /= g.size
    s = float(np.max(fp * (np.abs(probes - center) - r) ** 2))
    left_mass = float(np.mean(1.0 - _cauchy_upper(g, grid.x_min)))
    right_mass = float(np.mean(_cauchy_upper(g, grid.x_max)))
    table = ExteriorTable(grid.x_min, grid.x_max, dist, fp[:dist.size], fp[dist.size:], left_mass, right_mass)
    return GridDensity(grid, vals, TailBound(s, r, center), left_mass + right_mass, table)


def law_grid(law: DisorderLaw, grid: GridSpec) -> GridDensity:
    """Cell averages of the potential law on ``grid`` (exact total mass)."""
    if law.is_degenerate:
        vals = np.zeros(grid.n_points)
        vals[-grid.offset] = 1.0 / grid.dx
        return GridDensity(grid, vals)
    x = grid.x
    lo, hi = law.support
    if lo < grid.x_min or hi > grid.x_max:
        raise ConfigurationError("potential support does not fit on the grid")
    vals = (law.cdf(x + grid.dx / 2) - law.cdf(x - grid.dx / 2)) / grid.dx
    return GridDensity(grid, vals)


def law_tail(law: DisorderLaw, r: float | None = None, n: int = 4001) -> TailBound:
    """Measured sub-Cauchy tail of the potential density about 0.

    ``s = sup_{|x| > r} f(x) (|x| - r)**2`` on a fine scan of the support;
    ``r`` defaults to ``beta``.
    """
    r = law.beta if r is None else float(r)
    if law.is_degenerate:
        return TailBound(0.0, r, 0.0)
    a = law.half_width
    if a <= r:
        return TailBound(0.0, r, 0.0)
    x = np.linspace(r, a, n)
    xx = np.concatenate([-x, x])
    s = float(np.max(law.pdf(xx) * (np.abs(xx) - r) ** 2))
    return TailBound(s, r, 0.0)


def _cauchy_cells(eta: float, grid: GridSpec) -> np.ndarray:
    """Cell masses of ``sigma_{i eta}`` on ``grid`` divided by dx."""
    x = grid.x
    upper = _cauchy_upper(1j * eta, x - grid.dx / 2) - _cauchy_upper(1j * eta, x + grid.dx / 2)
    return upper / grid.dx


def _combine_models(*tails: TailBound | None) -> TailBound | None:
    real = [t for t in tails if t is not None]
    if not real:
        return None
    return TailBound(sum(t.s for t in real), sum(t.r for t in real), sum(t.center for t in real))


def _fft_convolve(arrays: list[np.ndarray], dx: float, n_out: int, start: int) -> np.ndarray:
    """Linear convolution of density arrays (each times dx), window ``[start, start+n_out)``."""
    total = sum(a.size for a in arrays)
    nfft = sfft.next_fast_len(total, real=True)
    prod = None
    for a in arrays:
        fa = sfft.rfft(a * dx, nfft)
        prod = fa if prod is None else prod * fa
    full = sfft.irfft(prod, nfft) / dx
    out = full[start:start + n_out]
    return np.maximum(out, 0.0)


def _finish(grid: GridSpec, values: np.ndarray, tail: TailBound | None, mass: float = 1.0) -> GridDensity:
    """Assign whatever mass the grid does not carry to the tail."""
    inner = float(np.trapezoid(values, dx=grid.dx))
    if inner > mass:
        values = values * (mass / inner)
        inner = mass
    tail_mass = mass - inner if tail is not None else 0.0
    if tail is None and inner > 0:
        values = values * (mass / inner)
    return GridDensity(grid, values, tail, tail_mass)


def grid_convolve(f: GridDensity, g: GridDensity, pad: int = 2) -> GridDensity:
    """Convolution of two densities on the same grid.

    Both factors are extended ``pad`` grid-widths to each side with their
    tail models, convolved via zero-padded FFT and cropped back to the grid.
    The result is renormalized: mass not on the grid goes to the tail, whose
    shape follows the additive Cauchy rule (``s``, ``r`` and centers add).
    """
    if f.grid != g.grid:
        raise ValueError("grid_convolve needs identical grids")
    grid = f.grid
    ext = grid.padded(pad) if (f.tail is not None or g.tail is not None) else grid
    fe, ge = _extended(f, ext), _extended(g, ext)
    start = grid.offset - 2 * ext.offset
    vals = _fft_convolve([fe, ge], grid.dx, grid.n_points, start)
    if ext is not grid:
        vals = vals + _far_field(f, g, ext, grid)
    return _finish(grid, vals, _combine_models(f.tail, g.tail), f.mass * g.mass)


def _far_field(f: GridDensity, g: GridDensity, ext: GridSpec, grid: GridSpec, n_coarse: int = 129) -> np.ndarray:
    """Part of ``(f * g)(x)`` from pairs with a factor beyond the padded window.

    For ``x`` on ``grid`` the window covers ``y`` in ``[a, b]`` with
    ``a = max(lo, x - hi)`` and ``b = min(hi, x - lo)``; the rest is
    integrated with the tail models on a coarse set of ``x`` and
    interpolated, since it varies on the scale of the window.
    """
    lo, hi = ext.x_min, ext.x_max
    xc = np.linspace(grid.x_min, grid.x_max, n_coarse)
    a = np.maximum(lo, xc - hi)
    b = np.minimum(hi, xc - lo)
    v, wq = np.polynomial.legendre.leggauss(64)
    v, wq = (v + 1) / 2, wq / 2
    scale = hi - lo
    u = scale * v / (1 - v)
    du = wq * scale / (1 - v) ** 2
    left = a[:, None] - u[None, :]
    right = b[:, None] + u[None, :]
    total = np.zeros_like(xc)
    for y in (left, right):
        vals = f.evaluate(y.ravel()).reshape(y.shape) * g.evaluate((xc[:, None] - y).ravel()).reshape(y.shape)
        total += vals @ du
    return np.interp(grid.x, xc, total)


def _smooth_seams(values: np.ndarray, inside: np.ndarray, cells: int = SMOOTH_CELLS) -> np.ndarray:
    seams = np.flatnonzero(np.diff(inside.astype(np.int8)) != 0)
    half = cells // 2
    out = values.copy()
    for i in seams:
        a, b = max(i - half + 1, 0), min(i + half + 1, values.size - 1)
        if b - a >= 2:
            out[a:b + 1] = np.linspace(values[a], values[b], b - a + 1)
    return out


def _interval_mass(f: GridDensity, lo: float, hi: float, nodes: int = 64) -> float:
    if hi <= lo:
        return 0.0
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, 9)
    a, b = edges[:-1, None], edges[1:, None]
    y = (0.5 * (b - a) * gx + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * gw).ravel()
    return float(np.sum(w * f.evaluate(y)))


def _match_near_zero(vals, x, inside, f: GridDensity, E: float, dx: float) -> None:
    """Rescale values around ``x = 0`` to the exact mass of their pre-image.

    The region runs from the seams where the pre-image leaves ``f``'s grid
    a few cells inward, past the smoothing; its pre-image is the exterior
    of ``f`` plus the part of the grid beyond ``-1/x - E``.
    """
    pos = np.flatnonzero((x > 0) & inside)
    neg = np.flatnonzero((x < 0) & inside)
    if pos.size == 0 or neg.size == 0:
        return
    margin = SMOOTH_CELLS + 2
    i_hi = min(pos[0] + margin, x.size - 1)
    i_lo = max(neg[-1] - margin, 0)
    b_hi, b_lo = x[i_hi] + dx / 2, x[i_lo] - dx / 2
    # x in (0, b_hi] maps below -1/b_hi - E; x in [b_lo, 0) maps above -1/b_lo - E
    target = f.cdf(-1.0 / b_hi - E) + (1.0 - f.cdf(-1.0 / b_lo - E) - (1.0 - f.mass))
    have = dx * float(np.sum(vals[i_lo:i_hi + 1]))
    if have > 0 and target > 0:
        vals[i_lo:i_hi + 1] *= target / have


def pushforward_reciprocal(f: GridDensity, E: float, out_grid: GridSpec | None = None) -> GridDensity:
    """Density of ``-1/(Y + E)`` for ``Y ~ f``: ``v(x) = x**-2 f(-1/x - E)``.

    Inside the pre-image of ``f``'s grid values come from monotone cubic
    interpolation; near ``x = 0`` the pre-image lies beyond the grid and
    ``f``'s tail model is used in a form that stays finite at ``x = 0``.
    The seam between the two is smoothed over a few cells. The mass of
    ``v`` beyond ``out_grid`` is the mass of ``f`` near ``-E`` and is
    computed, not assigned, so ``v.mass`` checks conservation.
    """
    grid = f.grid if out_grid is None else out_grid
    if f.tail is None and f.tail_mass > 0:
        raise ConfigurationError("density has mass beyond its grid but no tail model")
    x = grid.x
    nz = x != 0
    y = np.full_like(x, np.inf)
    y[nz] = -1.0 / x[nz] - E
    inside = f.grid.contains(y)
    vals = np.zeros_like(x)
    vals[inside] = f.evaluate(y[inside]) / x[inside] ** 2
    out = ~inside
    if f.tail is not None and np.any(out):
        t = f.tail
        xo = x[out]
        denom = np.abs(-1.0 - (E + t.center) * xo) - t.r * np.abs(xo)
        with np.errstate(divide="ignore", invalid="ignore"):
            tv = f.kappa * t.s / denom**2
        vals[out] = np.where((denom > 0) & np.isfinite(tv), tv, 0.0)
    vals = _smooth_seams(vals, inside)
    if f.tail is not None and f.tail_mass > 0:
        _match_near_zero(vals, x, inside, f, E, grid.dx)

    # mass of v beyond the output grid comes from f on (-E - 1/x_max, -E + 1/|x_min|)
    lo = -E - 1.0 / grid.x_max if grid.x_max > 0 else -math.inf
    hi = -E + 1.0 / abs(grid.x_min) if grid.x_min < 0 else math.inf
    tail_mass = _interval_mass(f, lo, -E) + _interval_mass(f, -E, hi)
    probe = f.evaluate(np.linspace(lo, hi, 33))
    tail = TailBound(float(probe.max()), 0.0, 0.0)
    return GridDensity(grid, vals, tail, tail_mass)


def density_step(
    f: GridDensity, law: DisorderLaw, energy: EnergyPoint, pad: int = 2, normalize: bool = True
) -> GridDensity:
    """One step of the projected iteration.

    ``f_next = ((f^{*K} * nu * delta_E * sigma_{i eta}) o psi) psi'``, i.e.
    the density of ``-1/(Y_1 + ... + Y_K + h + E + C)`` for independent
    ``Y_k ~ f``, ``h ~ nu`` and ``C`` Cauchy of width ``eta``.
    """
    K = energy.K
    grid = f.grid
    ext = grid.padded(pad)
    fe = _extended(f, ext)
    arrays = [fe] * K
    law_tail_model = None
    if not law.is_degenerate:
        arrays.append(law_grid(law, ext).values)
        law_tail_model = TailBound(0.0, law.half_width, 0.0)
    arrays.append(_cauchy_cells(energy.eta, ext))
    m = len(arrays)
    # output window: the ext grid itself
    start = (m - 1) * (-ext.offset)
    conv = _fft_convolve(arrays, grid.dx, ext.n_points, start)
    tail = _combine_models(*([f.tail] * K), law_tail_model, TailBound(energy.eta / np.pi, 0.0, 0.0))
    F = _finish(ext, conv, tail, 1.0)
    out = pushforward_reciprocal(F, energy.E, grid)
    return out.normalized() if normalize else out


def l1_distance(f: GridDensity, g: GridDensity) -> float:
    """Trapezoid L1 distance on the common grid plus the tail-mass difference."""
    if f.grid != g.grid:
        raise ValueError("l1_distance needs identical grids")
    return float(np.trapezoid(np.abs(f.values - g.values), dx=f.grid.dx) + abs(f.tail_mass - g.tail_mass))


@dataclass
class DensityTrace:
    steps: list = field(default_factory=list)
    change: list = field(default_factory=list)
    converged: bool = False


def density_fixed_point(
    f0: GridDensity,
    law: DisorderLaw,
    energy: EnergyPoint,
    max_steps: int = 500,
    tol: float = 1e-4,
    min_steps: int = 0,
) -> tuple[GridDensity, DensityTrace]:
    """Iterate :func:`density_step` until successive L1 changes drop below ``tol``."""
    f = f0
    trace = DensityTrace()
    for n in range(1, max_steps + 1):
        nxt = density_step(f, law, energy)
        change = l1_distance(nxt, f)
        trace.steps.append(n)
        trace.change.append(change)
        f = nxt
        if change <= tol and n >= min_steps:
            trace.converged = True
            break
    return f, trace


# -- sub-Cauchy tail certificate -------------------------------------------

def combine_tails(a: TailBound, b: TailBound, t: float) -> TailBound:
    """Tail bound of a convolution: ``(s1 + s2 + 8 s1 s2 / t, r1 + r2 + t)``."""
    if not t > 0:
        raise ValueError("t must be positive")
    cross = 8.0 * a.s * b.s / t if a.s and b.s else 0.0
    return TailBound(a.s + b.s + cross, a.r + b.r + t, a.center + b.center)


def hyperbolic_tau(w: float, r: float) -> float:
    """Contraction factor ``w**2 / (1 - |w| r)**2`` of the pushforward."""
    if abs(w) * r >= 1:
        raise CertificateBreakdown(f"|w| r = {abs(w) * r:.4g} >= 1")
    return w**2 / (1.0 - abs(w) * r) ** 2


def push_tail(tail: TailBound, w: float) -> TailBound:
    """Bound after ``x -> x**-2 f(-1/x - E)`` for a tail centered at ``K w``."""
    tau = hyperbolic_tau(w, tail.r)
    return TailBound(tau * tail.s, tau * tail.r, w)


def tail_step(tails: list[TailBound], t: float, w: float, K: int) -> TailBound:
    """Propagate sub-Cauchy bounds through one projected iteration.

    ``tails`` holds the ``K`` density bounds (centered at ``w``) followed by
    those of the potential and Cauchy kernels (centered at 0). They are
    combined left to right with :func:`combine_tails`, then pushed forward.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    acc = tails[0]
    for nxt in tails[1:]:
        acc = combine_tails(acc, nxt, t)
    if abs(acc.center - K * w) > 1e-9 * (1 + abs(K * w)):
        raise ValueError(f"combined center {acc.center} differs from K w = {K * w}")
    return push_tail(acc, w)


@dataclass
class CertificateReport:
    E: float
    K: int
    beta: float
    w: float
    t: float
    s0: float
    r0: float
    s: list
    r: list
    closes: bool
    breakdown: bool
    first_failing_step: int | None
    radius: float
    bound: float | None

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["s_final"] = self.s[-1] if self.s else None
        out["r_final"] = self.r[-1] if self.r else None
        out.pop("s")
        out.pop("r")
        return out


def tail_certify(
    energy: EnergyPoint,
    beta: float,
    nu_tail: TailBound,
    eta_tail: TailBound,
    n_steps: int = 50,
    t: float | None = None,
) -> CertificateReport:
    """Inductive sub-Cauchy certificate for ``|E| >= 2 sqrt K``.

    Seeds ``(s0, r0) = (beta**(3/4) w**2, beta**(1/4) |w|)`` around the real
    fixed point ``w = w_E`` and iterates :func:`tail_step` with
    ``t = beta**(1/2) w**2``. The induction closes when every iterate stays
    below the seed. Then the mass of the limit measure farther than
    ``2 beta**(1/4) |w|`` from ``w`` is at most
    ``2 s / (beta**(1/4) |w|) / sigma_i([1, inf))`` with ``s`` the last iterate.
    """
    K, E = energy.K, energy.E
    if abs(E) < 2 * math.sqrt(K) - 1e-12:
        raise ValueError(f"certificate needs |E| >= 2 sqrt K, got E={E}")
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    w = float(np.real(free_green(complex(E), K)))
    s0 = beta**0.75 * w * w
    r0 = beta**0.25 * abs(w)
    radius = 2 * r0
    if beta == 0:
        return CertificateReport(E, K, beta, w, 0.0, 0.0, 0.0, [0.0], [0.0], True, False, None, 0.0, 0.0)
    t = math.sqrt(beta) * w * w if t is None else float(t)
    s_seq, r_seq = [s0], [r0]
    cur = TailBound(s0, r0, w)
    closes, breakdown, failing = True, False, None
    for n in range(1, n_steps + 1):
        try:
            cur = tail_step([cur] * K + [nu_tail, eta_tail], t, w, K)
        except CertificateBreakdown:
            closes, breakdown, failing = False, True, n
            break
        s_seq.append(cur.s)
        r_seq.append(cur.r)
        if cur.s > s0 or cur.r > r0:
            closes, failing = False, n
            break
    bound = 2 * s_seq[-1] / r0 / CAUCHY_UPPER_QUARTER if closes else None
    return CertificateReport(E, K, beta, w, t, s0, r0, s_seq, r_seq, closes, breakdown, failing, radius, bound)


def save_density(f: GridDensity, path) -> tuple[Path, Path]:
    """Two-column ``x f(x)`` text file plus a JSON tail descriptor next to it."""
    path = Path(path)
    np.savetxt(path, np.column_stack([f.x, f.values]), fmt="%.12g", header="x f")
    meta = path.with_suffix(path.suffix + ".json")
    desc = f.tail.as_dict() if f.tail is not None else {"s": 0.0, "r": 0.0, "center": 0.0}
    desc["tail_mass"] = f.tail_mass
    meta.write_text(json.dumps(desc, indent=2))
    return path, meta
