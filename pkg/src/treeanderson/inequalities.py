"""Inequalities of the hyperbolic distance as vectorized slack functions.

Each ``*_slack`` function returns ``(rhs - lhs) / (1 + |lhs| + |rhs|)`` for
an inequality ``lhs <= rhs``; a correct inequality gives slacks that are
non-negative up to rounding. :func:`property_suite` evaluates all of them on
random tuples drawn across many scales.

The perturbation bound holds with the explicit constant ``C = 26``: for
``u = z - w`` and centered ``X`` with moments ``m2 <= m4**(1/2)``,
``E|X - u|**4 <= |u|**4 + 8 |u|**2 m2 + 3 m4``; dividing by
``(Im z Im w)**2``, bounding ``Im w / Im z <= 2 + d`` and using
``s**4 <= s**2`` and ``d <= (1 + d**2)/2`` gives
``E d(z + X, w)**2 <= (1 + 25 s**2) d**2 + 26 s**2``. The library default
:data:`PERTURB_C` is the looser 64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .halfplane import hyp_dist

__all__ = [
    "PERTURB_C",
    "INEQUALITIES",
    "contraction_slack",
    "convex_slack",
    "quasiconvex_slack",
    "iratio_slack",
    "almost_triangle_slack",
    "rconvex_slack",
    "perturb_slack",
    "random_points",
    "random_maps",
    "SuiteResult",
    "property_suite",
]

PERTURB_C = 64.0


def _rel(lhs, rhs):
    return (rhs - lhs) / (1.0 + np.abs(lhs) + np.abs(rhs))


def _apply(maps, z):
    """Maps as ``(a, b, c, d, shift)`` rows: ``z -> (az + b)/(cz + d) + shift``."""
    a, b, c, d, shift = maps
    return (a * z + b) / (c * z + d) + shift


def contraction_slack(maps, z, w):
    """``d(phi z, phi w) <= d(z, w)`` for maps of the half-plane into itself."""
    return _rel(hyp_dist(_apply(maps, z), _apply(maps, w)), hyp_dist(z, w))


def convex_slack(z1, z2, w):
    """``d((z1 + z2)/2, w) <= (d(z1, w) + d(z2, w)) / 2``."""
    return _rel(hyp_dist((z1 + z2) / 2, w), (hyp_dist(z1, w) + hyp_dist(z2, w)) / 2)


def quasiconvex_slack(z1, z2, w1, w2):
    """``d((z1 + z2)/2, (w1 + w2)/2) <= max(d(z1, w1), d(z2, w2))``."""
    return _rel(hyp_dist((z1 + z2) / 2, (w1 + w2) / 2), np.maximum(hyp_dist(z1, w1), hyp_dist(z2, w2)))


def iratio_slack(z, w):
    """``Im z / Im w + Im w / Im z <= 2 + d(z, w)``."""
    q = z.imag / w.imag
    return _rel(q + 1 / q, 2 + hyp_dist(z, w))


def almost_triangle_slack(z, w1, w2):
    """``sqrt d(z, w1) <= (1 + sqrt d(w2, w1)) sqrt d(z, w2) + sqrt 2 sqrt d(w2, w1)``."""
    a = np.sqrt(hyp_dist(w2, w1))
    return _rel(np.sqrt(hyp_dist(z, w1)), (1 + a) * np.sqrt(hyp_dist(z, w2)) + math.sqrt(2) * a)


def rconvex_slack(zs, w):
    """Quantitative convexity for the mean of ``zs`` (points along axis 0)."""
    zs = np.asarray(zs)
    K = zs.shape[0]
    diff = zs[:, None] - zs[None, :]
    pair = np.sum(np.abs(diff) ** 2, axis=(0, 1)) / 2
    spread = K * np.sum(np.abs(zs - w) ** 2, axis=0)
    dmax = np.max(hyp_dist(zs, w), axis=0)
    # all points at w: both sides vanish
    frac = np.divide(pair, spread, out=np.zeros_like(pair), where=spread > 0)
    rhs = (1 - frac) * dmax
    return _rel(hyp_dist(zs.mean(axis=0), w), rhs)


def perturb_slack(z, w, s, X, C: float = PERTURB_C):
    """Perturbation bound for the empirical law of ``X`` (samples along axis 0).

    Returns ``(slack, stderr)`` where ``slack = rhs - mean`` is normalized
    like the other slacks and ``stderr`` is the Monte Carlo error of the
    mean on the same scale. The caller guarantees ``E X = 0`` and
    ``E X**4 <= s**4 (Im w)**4`` for the law ``X`` was drawn from.
    """
    d0 = hyp_dist(z, w)
    dd = hyp_dist(z + X, w) ** 2
    mean = dd.mean(axis=0)
    se = dd.std(axis=0) / math.sqrt(dd.shape[0])
    rhs = (1 + C * s**2) * d0**2 + C * s**2
    scale = 1.0 + np.abs(mean) + np.abs(rhs)
    return (rhs - mean) / scale, se / scale


def random_points(rng: np.random.Generator, n: int, spread: float = 3.0) -> np.ndarray:
    """Half-plane points across scales: log-uniform imaginary parts, scaled real parts."""
    im = np.exp(rng.uniform(-spread, spread, n))
    re = rng.standard_normal(n) * np.exp(rng.uniform(-spread, spread, n))
    return re + 1j * im


def random_maps(rng: np.random.Generator, n: int) -> tuple:
    """Random maps ``(az + b)/(cz + d) + shift`` with ``ad - bc > 0`` and ``Im shift >= 0``."""
    m = rng.standard_normal((4, n))
    det = m[0] * m[3] - m[1] * m[2]
    # redraw badly conditioned matrices; near-singular maps only test rounding
    bad = np.abs(det) < 0.05 * np.sum(m**2, axis=0)
    while np.any(bad):
        m[:, bad] = rng.standard_normal((4, int(bad.sum())))
        det = m[0] * m[3] - m[1] * m[2]
        bad = np.abs(det) < 0.05 * np.sum(m**2, axis=0)
    m[[0, 1]] *= np.sign(det)
    shift = np.where(rng.random(n) < 0.5, 0.0, random_points(rng, n, 1.0))
    return (*m, shift)


INEQUALITIES = ("contraction", "convex", "quasiconvex", "iratio", "almost_triangle", "rconvex", "perturb")


@dataclass(frozen=True)
class SuiteResult:
    name: str
    n: int
    worst_slack: float
    passes: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "n": self.n, "worst_slack": self.worst_slack, "passes": self.passes}


def property_suite(
    n: int = 100_000,
    seed: int = 0,
    tol: float = 1e-10,
    K: int = 3,
    perturb_cases: int = 200,
    perturb_samples: int = 4000,
    C: float = PERTURB_C,
) -> list[SuiteResult]:
    """Evaluate every inequality on ``n`` random tuples.

    The perturbation bound is a Monte Carlo statement: for
    ``perturb_cases`` random ``(z, w, s)`` it draws centered uniform ``X``
    with ``E X**4 = s**4 (Im w)**4`` and passes when the estimate stays
    below the bound up to three standard errors.
    """
    rng = np.random.default_rng(seed)
    P = lambda: random_points(rng, n)  # noqa: E731
    out = []

    def record(name, slack, count=n):
        worst = float(np.min(slack))
        out.append(SuiteResult(name, count, worst, worst >= -tol))

    record("contraction", contraction_slack(random_maps(rng, n), P(), P()))
    record("convex", convex_slack(P(), P(), P()))
    record("quasiconvex", quasiconvex_slack(P(), P(), P(), P()))
    record("iratio", iratio_slack(P(), P()))
    record("almost_triangle", almost_triangle_slack(P(), P(), P()))
    record("rconvex", rconvex_slack(np.stack([P() for _ in range(K)]), P()))

    m = perturb_cases
    z = random_points(rng, m, 1.0)
    w = random_points(rng, m, 1.0)
    s = rng.uniform(0, 1, m)
    half = 5**0.25 * s * w.imag
    X = rng.uniform(-1, 1, (perturb_samples, m)) * half
    X -= X.mean(axis=0)
    # fourth moment of the sample law exactly at the hypothesis bound
    X *= (s**4 * w.imag**4 / np.mean(X**4, axis=0)) ** 0.25
    slack, se = perturb_slack(z, w, s, X, C)
    worst = float(np.min(slack + 3 * se))
    out.append(SuiteResult("perturb", m, worst, worst >= -tol))
    return out
