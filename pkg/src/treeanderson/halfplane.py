"""Upper half-plane kernel.

Points of the upper half-plane, the (non-metric) hyperbolic distance
``d(z, w) = |z - w|**2 / (Im z * Im w)``, real Moebius maps and the free
Green's function ``w_z`` of the regular tree.

All functions accept Python complex numbers, :class:`HalfPlanePoint` values
or complex numpy arrays and broadcast in the usual numpy way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HalfPlanePoint",
    "MoebiusMap",
    "EnergyPoint",
    "hyp_dist",
    "branch_sqrt",
    "free_green",
    "moebius_apply",
]

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class HalfPlanePoint:
    """A point ``re + i*im`` with ``im > 0``."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError(f"non-finite half-plane point ({self.re}, {self.im})")
        if not self.im > 0:
            raise ValueError(f"imaginary part must be positive, got {self.im}")

    @classmethod
    def from_complex(cls, z: complex) -> "HalfPlanePoint":
        z = complex(z)
        return cls(z.real, z.imag)

    def __complex__(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class EnergyPoint:
    """Spectral parameter ``z = E + i*eta`` on a tree with branching ``K``."""

    E: float
    eta: float
    K: int = 2

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K}")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)


def _as_complex(z, *, strict: bool = True) -> np.ndarray:
    if isinstance(z, HalfPlanePoint):
        return np.asarray(complex(z))
    arr = np.asarray(z, dtype=complex)
    if strict and np.any(~(arr.imag > 0)):
        raise ValueError("points must lie in the open upper half-plane")
    return arr


def _maybe_scalar(arr: np.ndarray):
    return arr[()] if arr.ndim == 0 else arr


def hyp_dist(z, w):
    """Hyperbolic distance ``|z - w|**2 / (Im z Im w)``.

    Symmetric, zero iff ``z == w`` and monotone in the hyperbolic metric,
    but not itself a metric. Ratios beyond the float range are evaluated in
    log space and returned as ``inf`` when unrepresentable.

    Parameters
    ----------
    z, w : complex, HalfPlanePoint or complex ndarray
        Points with strictly positive imaginary part.

    Returns
    -------
    float or ndarray
    """
    z = _as_complex(z)
    w = _as_complex(w)
    diff = np.abs(z - w)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        d = diff**2 / (z.imag * w.imag)
        bad = ~np.isfinite(d) | (d > 1e300)
        if np.any(bad):
            zb, wb, db = np.broadcast_arrays(z.imag, w.imag, diff)
            logd = 2 * np.log(db) - np.log(zb) - np.log(wb)
            d = np.where(bad, np.where(logd > _LOG_MAX, np.inf, np.exp(np.minimum(logd, _LOG_MAX))), d)
    return _maybe_scalar(np.asarray(d, dtype=float))


def branch_sqrt(z):
    """Square root with arguments in ``(-pi, pi]`` halved.

    Negative reals map to the positive imaginary axis, also when they carry
    a signed zero imaginary part (``-4 - 0j -> 2j``).
    """
    arr = np.asarray(z, dtype=complex)
    x = arr.real
    # -0.0 + 0.0 == +0.0 moves signed-zero negatives to the upper side of the cut
    y = arr.imag + 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.sqrt((np.abs(x) + np.hypot(x, y)) / 2)
        other = np.where(t > 0, np.abs(y) / (2 * t), 0.0)
    # the small component comes from a quotient, never from a cancelling difference
    re = np.where(x >= 0, t, other)
    im = np.where(x >= 0, np.where(t > 0, y / (2 * np.where(t > 0, t, 1.0)), 0.0), np.copysign(t, y))
    return _maybe_scalar(re + 1j * im)


def free_green(z, K: int):
    """Free punctured Green's function ``w_z`` of the ``(K+1)``-regular tree.

    ``w_z = (-z + sqrt(z + 2 sqrt K) sqrt(z - 2 sqrt K)) / (2K)`` with the
    branch of :func:`branch_sqrt`. It solves ``K w**2 + z w + 1 = 0``; the
    companion root ``(-z - s)/(2K)`` is used to evaluate the same value
    without cancellation, via ``w = 2 / (-z - s)``.

    Parameters
    ----------
    z : complex or complex ndarray
        Spectral parameter with ``Im z >= 0``; real ``z`` gives boundary values.
    K : int
        Branching number, ``K >= 2``.
    """
    if int(K) != K or K < 2:
        raise ValueError(f"K must be an integer >= 2, got {K}")
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0):
        raise ValueError("free_green needs Im z >= 0")
    two_root_k = 2.0 * math.sqrt(K)
    s = branch_sqrt(z + two_root_k) * branch_sqrt(z - two_root_k)
    plus = -z + s
    minus = -z - s
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = np.where(np.abs(plus) < np.abs(minus), 2.0 / minus, plus / (2.0 * K))
    return _maybe_scalar(stable)


@dataclass(frozen=True)
class MoebiusMap:
    """Real Moebius map ``z -> (a z + b) / (c z + d)`` with ``ad - bc > 0``.

    Coefficients are rescaled to unit determinant on construction, so the
    stored map is an automorphism of the upper half-plane.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if not det > 0:
            raise ValueError(f"Moebius map needs ad - bc > 0, got {det}")
        scale = math.sqrt(det)
        if scale != 1.0:
            for name in "abcd":
                object.__setattr__(self, name, getattr(self, name) / scale)

    @classmethod
    def phi(cls, E: float, K: int) -> "MoebiusMap":
        """``z -> -1/(K z + E)``."""
        return cls(0.0, -1.0, float(K), float(E))

    @classmethod
    def psi(cls) -> "MoebiusMap":
        """``z -> -1/z``."""
        return cls(0.0, -1.0, 1.0, 0.0)

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def __call__(self, z):
        return moebius_apply(self, z)

    def compose(self, other: "MoebiusMap") -> "MoebiusMap":
        """Return ``self o other``."""
        return MoebiusMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)


def moebius_apply(m: MoebiusMap, z):
    """Apply ``m`` to half-plane point(s) ``z``; the image stays in the half-plane."""
    point = isinstance(z, HalfPlanePoint)
    zz = _as_complex(z)
    out = (m.a * zz + m.b) / (m.c * zz + m.d)
    if point:
        return HalfPlanePoint.from_complex(complex(out))
    return _maybe_scalar(out)
