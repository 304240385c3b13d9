"""Single-site potential laws and numerical checks of their hypotheses.

A :class:`DisorderLaw` describes the law of the i.i.d. potential ``V(p)``.
Three kinds are offered:

``uniform_symmetric``
    Uniform on ``[-a, a]``. In ``plain`` scaling ``a = beta`` so that
    ``E V**4 = beta**4 / 5``; in ``moment_matched`` scaling
    ``a = 5**(1/4) beta`` so that ``E V**4 = beta**4``.
``gaussian_truncated``
    Centered Gaussian with ``sigma = beta / 3**(1/4)`` cut at ``+-6 sigma``.
``table``
    Piecewise-linear density through user supplied ``(x, weight)`` nodes,
    normalized by the trapezoid rule.

``beta = 0`` is accepted for the uniform kind only and means ``V = 0``; it
has no density and exists to run the free (disorder-free) problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

__all__ = [
    "DisorderLaw",
    "ValidationReport",
    "ConfigurationError",
    "sample",
    "density",
    "validate",
    "load_table",
]

KINDS = ("uniform_symmetric", "gaussian_truncated", "table")
GAUSS_CUT = 6.0


class ConfigurationError(ValueError):
    """A law, grid or run configuration that cannot be used."""


@dataclass(frozen=True, eq=False)
class DisorderLaw:
    kind: str
    beta: float
    L: float = 2.0
    scaling: str = "plain"
    table: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown law kind {self.kind!r}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ConfigurationError(f"beta must be >= 0, got {self.beta}")
        if self.beta == 0 and self.kind != "uniform_symmetric":
            raise ConfigurationError("beta = 0 is only meaningful for the uniform kind")
        if not self.L >= 1:
            raise ConfigurationError(f"L must be >= 1, got {self.L}")
        if self.scaling not in ("plain", "moment_matched"):
            raise ConfigurationError(f"unknown scaling {self.scaling!r}")
        if self.kind == "table":
            if self.table is None:
                raise ConfigurationError("table law needs (x, weights)")
            x, w = (np.asarray(a, dtype=float) for a in self.table)
            if x.ndim != 1 or x.shape != w.shape or x.size < 2:
                raise ConfigurationError("table needs two equal-length 1-D arrays")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
                raise ConfigurationError("table contains non-finite values")
            if np.any(np.diff(x) <= 0) or np.any(w < 0):
                raise ConfigurationError("table x must increase and weights be >= 0")
            mass = np.trapezoid(w, x)
            if not mass > 0:
                raise ConfigurationError("table density is not normalizable")
            w = w / mass
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(x))])
            object.__setattr__(self, "table", (x, w))
            object.__setattr__(self, "_cum", cum)

    # -- constructors -----------------------------------------------------
    @classmethod
    def uniform(cls, beta: float, L: float = 2.0, scaling: str = "plain") -> "DisorderLaw":
        return cls("uniform_symmetric", beta, L, scaling)

    @classmethod
    def gaussian(cls, beta: float, L: float = 2.0) -> "DisorderLaw":
        return cls("gaussian_truncated", beta, L)

    @classmethod
    def free(cls) -> "DisorderLaw":
        """The zero potential."""
        return cls("uniform_symmetric", 0.0)

    @classmethod
    def from_table(cls, x, weights, beta: float, L: float = 2.0) -> "DisorderLaw":
        return cls("table", beta, L, table=(np.asarray(x, float), np.asarray(weights, float)))

    @classmethod
    def spike(cls, beta: float, width: float = 1e-9, L: float = 2.0) -> "DisorderLaw":
        """Near-atomic table law at 0; violates the regularity hypothesis."""
        x = np.array([-width, 0.0, width])
        return cls.from_table(x, [0.0, 1.0, 0.0], beta, L)

    # -- basic quantities -------------------------------------------------
    @property
    def is_degenerate(self) -> bool:
        return self.beta == 0

    @property
    def half_width(self) -> float:
        """Half-length of the support."""
        if self.kind == "uniform_symmetric":
            return self.beta * (5**0.25 if self.scaling == "moment_matched" else 1.0)
        if self.kind == "gaussian_truncated":
            return GAUSS_CUT * self.sigma
        x = self.table[0]
        return float(max(abs(x[0]), abs(x[-1])))

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "table":
            x = self.table[0]
            return float(x[0]), float(x[-1])
        a = self.half_width
        return -a, a

    @property
    def sigma(self) -> float:
        return self.beta / 3**0.25

    def pdf(self, x):
        if self.is_degenerate:
            raise ConfigurationError("the zero potential has no density")
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform_symmetric":
            a = self.half_width
            out = np.where(np.abs(x) <= a, 0.5 / a, 0.0)
        elif self.kind == "gaussian_truncated":
            s = self.sigma
            norm = special.erf(GAUSS_CUT / math.sqrt(2))
            out = np.where(
                np.abs(x) <= GAUSS_CUT * s,
                np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2 * math.pi) * norm),
                0.0,
            )
        else:
            xs, w = self.table
            out = np.interp(x, xs, w, left=0.0, right=0.0)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_degenerate:
            out = (x >= 0).astype(float)
        elif self.kind == "uniform_symmetric":
            a = self.half_width
            out = np.clip((x + a) / (2 * a), 0.0, 1.0)
        elif self.kind == "gaussian_truncated":
            u = np.clip(x / self.sigma, -GAUSS_CUT, GAUSS_CUT)
            lo = special.ndtr(-GAUSS_CUT)
            out = (special.ndtr(u) - lo) / (1 - 2 * lo)
        else:
            out = self._table_cdf(x)
        return out[()] if out.ndim == 0 else out

    def _table_cdf(self, x):
        xs, w = self.table
        cum = self._cum
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        h = xs[i + 1] - xs[i]
        u = np.clip((x - xs[i]) / h, 0.0, 1.0)
        part = h * (w[i] * u + 0.5 * (w[i + 1] - w[i]) * u**2)
        out = cum[i] + part
        out = np.where(x < xs[0], 0.0, np.where(x >= xs[-1], 1.0, out))
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` i.i.d. draws; deterministic given the generator state."""
        if n < 0:
            raise ValueError("n must be >= 0")
        if self.is_degenerate:
            return np.zeros(n)
        if self.kind == "uniform_symmetric":
            a = self.half_width
            return rng.uniform(-a, a, n)
        u = rng.random(n)
        if self.kind == "gaussian_truncated":
            lo = special.ndtr(-GAUSS_CUT)
            return self.sigma * special.ndtri(lo + u * (1 - 2 * lo))
        return self._table_quantile(u)

    def _table_quantile(self, u):
        xs, w = self.table
        cum = self._cum
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, xs.size - 2)
        h = xs[i + 1] - xs[i]
        # solve h*(w0 u' + (w1-w0) u'^2/2) = u - cum[i] for u' in [0, 1]
        target = (u - cum[i]) / h
        w0, slope = w[i], w[i + 1] - w[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.sqrt(np.maximum(w0**2 + 2 * slope * target, 0.0))
            frac = np.where(
                np.abs(slope) > 1e-12 * np.maximum(w0, 1e-300),
                2 * target / (w0 + disc),
                target / w0,
            )
        frac = np.where(np.isfinite(frac), np.clip(frac, 0.0, 1.0), 0.5)
        return xs[i] + h * frac

    def quadrature(self, order: int = 8, panels: int = 64):
        """Nodes and weights integrating against the density."""
        gx, gw = np.polynomial.legendre.leggauss(order)
        if self.kind == "table":
            edges = self.table[0]
        else:
            lo, hi = self.support
            edges = np.linspace(lo, hi, panels + 1)
        a, b = edges[:-1, None], edges[1:, None]
        nodes = (0.5 * (b - a) * gx + 0.5 * (a + b)).ravel()
        weights = (0.5 * (b - a) * gw).ravel()
        return nodes, weights * self.pdf(nodes)

    def moment(self, k: int) -> float:
        if self.is_degenerate:
            return 0.0
        x, w = self.quadrature()
        return float(np.sum(w * x**k))

    def mass_in(self, lo, hi):
        """``P(lo < V <= hi)``."""
        return self.cdf(hi) - self.cdf(lo)


def sample(law: DisorderLaw, rng: np.random.Generator, n: int) -> np.ndarray:
    return law.sample(rng, n)


def density(law: DisorderLaw, x):
    return law.pdf(x)


def load_table(path, beta: float, L: float = 2.0) -> DisorderLaw:
    """Read a whitespace-separated two-column ``x weight`` file."""
    try:
        data = np.loadtxt(Path(path), ndmin=2)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if data.shape[1] != 2:
        raise ConfigurationError(f"{path}: expected two columns, found {data.shape[1]}")
    order = np.argsort(data[:, 0], kind="stable")
    return DisorderLaw.from_table(data[order, 0], data[order, 1], beta, L)


@dataclass(frozen=True)
class HypothesisFlags:
    fourth_moment: bool
    regularity: bool
    mean_zero: bool
    subcauchy: bool

    @property
    def all(self) -> bool:
        return self.fourth_moment and self.regularity and self.mean_zero and self.subcauchy


@dataclass(frozen=True)
class ValidationReport:
    beta: float
    L: float
    tol: float
    mean: float
    fourth_moment: float
    regularity_worst_ratio: float
    subcauchy_worst_ratio: float
    passes: HypothesisFlags

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "beta", "L", "tol", "mean", "fourth_moment",
            "regularity_worst_ratio", "subcauchy_worst_ratio",
        )}
        out["passes"] = {k: getattr(self.passes, k) for k in (
            "fourth_moment", "regularity", "mean_zero", "subcauchy")}
        return out


def _scan_grid(beta: float, refine: int):
    xs = beta * np.arange(-10 * refine, 10 * refine + 1) / (2 * refine)
    # exponents -10..0 in steps of 1/refine; the hypotheses need t < s < beta
    ts = beta * 2.0 ** (-np.arange(10 * refine, 0, -1) / refine)
    return xs, ts


def validate(law: DisorderLaw, tol: float = 0.01, refine: int = 1) -> ValidationReport:
    """Check the four standing hypotheses on ``law`` numerically.

    Moments use Gauss-Legendre quadrature against the density. The
    regularity and sub-Cauchy ratios are scanned on the deterministic grid
    ``x in beta*{-10..10}/2`` and ``t, s in beta*2**{-10..-1}`` (``t < s``),
    refined ``refine`` times in both directions.

    Returns
    -------
    ValidationReport
        Measured moments, worst ratios ``(P_t/P_s)/(t/s)`` and
        ``P_t (beta**2 + x**2)/(beta t)``, and one flag per hypothesis.
    """
    if not 0 < tol <= 0.1:
        raise ValueError("tol must lie in (0, 0.1]")
    if law.is_degenerate:
        raise ConfigurationError("the zero potential has no density to validate")
    beta, L = law.beta, law.L
    mean = law.moment(1)
    m4 = law.moment(4)

    xs, ts = _scan_grid(beta, refine)
    X = xs[:, None]
    P = law.mass_in(X - ts[None, :], X + ts[None, :])  # P(|V - x| < t), shape (x, t)

    reg_worst = 0.0
    for j in range(ts.size):
        for k in range(j + 1, ts.size):
            pt, ps = P[:, j], P[:, k]
            ok = ps > 0
            if np.any(ok):
                ratio = (pt[ok] / ps[ok]) * (ts[k] / ts[j])
                reg_worst = max(reg_worst, float(ratio.max()))
    sub = P * (beta**2 + X**2) / (beta * ts[None, :])
    sub_worst = float(sub.max())

    flags = HypothesisFlags(
        fourth_moment=bool(m4 <= beta**4 * (1 + tol)),
        regularity=bool(reg_worst <= L * (1 + 1e-12)),
        mean_zero=bool(abs(mean) <= tol * beta),
        subcauchy=bool(sub_worst <= L * (1 + 1e-12)),
    )
    return ValidationReport(beta, L, tol, mean, m4, reg_worst, sub_worst, flags)
