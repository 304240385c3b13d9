"""Lyapunov exponents, the delocalization criterion and concentration probes.

The Lyapunov exponent of the fixed-point law is ``lambda = E log|g|``. The
criterion ``lambda > -log K`` predicts absolutely continuous spectrum; the
sign of ``lambda + log K`` is the *criterion margin*.

Error bars come from a delete-one-block jackknife over the independent
sub-populations of a :class:`~treeanderson.population.MeasurePool`. Pools
from consecutive generations are strongly correlated, so estimates average
each block over a stretch of generations first and only then compare blocks.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .disorder import DisorderLaw
from .halfplane import EnergyPoint, free_green
from .population import IterationConfig, MeasurePool, run_to_fixed_point, step_pool

__all__ = [
    "Estimate",
    "ConcentrationTable",
    "SpectralReport",
    "DELOCALIZED",
    "LOCALIZED",
    "BOUNDARY",
    "CSV_COLUMNS",
    "sample_fixed_point",
    "lyapunov_estimate",
    "criterion_margin",
    "phase_classify",
    "concentration_probe",
    "offdiagonal_check",
    "eta_schedule",
    "extrapolate_eta",
    "spectral_report",
]

DELOCALIZED = "delocalized_predicted"
LOCALIZED = "localized_predicted"
BOUNDARY = "boundary"


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its standard error."""

    value: float
    stderr: float

    def __iter__(self):
        yield self.value
        yield self.stderr

    def __float__(self) -> float:
        return float(self.value)


def _as_pools(pools) -> list[MeasurePool]:
    if isinstance(pools, MeasurePool):
        return [pools]
    pools = list(pools)
    if not pools:
        raise ValueError("need at least one pool")
    if len({(p.size, p.n_blocks) for p in pools}) != 1:
        raise ValueError("pools must share size and block structure")
    return pools


def _block_means(pools: list[MeasurePool], fn) -> np.ndarray:
    """Mean of ``fn(samples)`` per block, averaged over the pools."""
    B = pools[0].n_blocks
    acc = np.zeros(B)
    for p in pools:
        acc += fn(p.samples).reshape(B, -1).mean(axis=1)
    return acc / len(pools)


def _jackknife(stat, B: int) -> tuple[float, float]:
    """Delete-one-block jackknife of ``stat(keep_mask)`` over ``B`` blocks."""
    full = stat(np.ones(B, bool))
    if B < 2:
        return full, math.nan
    loo = np.empty(B)
    for b in range(B):
        keep = np.ones(B, bool)
        keep[b] = False
        loo[b] = stat(keep)
    se = math.sqrt((B - 1) / B * np.sum((loo - loo.mean()) ** 2))
    return full, se


def sample_fixed_point(
    cfg: IterationConfig,
    n_average: int = 100,
    init="free",
) -> tuple[list[MeasurePool], str]:
    """Converge the population, then collect ``n_average`` further generations.

    Returns the collected pools and the convergence status
    (``"converged"`` or ``"unconverged"``).
    """
    pool, trace = run_to_fixed_point(cfg, init)
    pools = []
    for _ in range(n_average):
        pool = step_pool(pool, cfg)
        pools.append(pool)
    return pools, trace.status


def lyapunov_estimate(pools) -> Estimate:
    """Sample mean of ``log|g|`` with a block-jackknife standard error.

    ``pools`` is a pool or a sequence of pools from successive generations.
    For pools with a single block the error is the naive i.i.d. one, which
    ignores correlations between generations and is only a lower bound.
    A point-mass pool has zero error.
    """
    pools = _as_pools(pools)
    B = pools[0].n_blocks
    if B == 1:
        logs = np.concatenate([np.log(np.abs(p.samples)) for p in pools])
        return Estimate(float(logs.mean()), float(logs.std() / math.sqrt(logs.size)))
    m = _block_means(pools, lambda g: np.log(np.abs(g)))
    value, se = _jackknife(lambda keep: m[keep].mean(), B)
    return Estimate(float(value), float(se))


def criterion_margin(lyapunov, K: int):
    """``lambda + log K``; keeps the standard error of an :class:`Estimate`."""
    if isinstance(lyapunov, Estimate):
        return Estimate(lyapunov.value + math.log(K), lyapunov.stderr)
    return float(lyapunov) + math.log(K)


def phase_classify(E: float, beta: float, K: int, eps: float, margin=None, stderr: float = 0.0) -> str:
    """Predicted spectral phase at energy ``E``.

    Localized beyond ``K + 1 + eps``; delocalized when ``|E| < K + 1 - eps``
    and the margin exceeds twice its error; otherwise on the boundary.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if isinstance(margin, Estimate):
        margin, stderr = margin.value, margin.stderr
    edge = K + 1
    if abs(E) > edge + eps:
        return LOCALIZED
    if margin is not None and abs(E) < edge - eps and margin - 2 * stderr > 0:
        return DELOCALIZED
    return BOUNDARY


@dataclass
class ConcentrationTable:
    """Tail probabilities ``P(|g - w| >= t |w|)`` and the threshold ``t*``."""

    t: np.ndarray
    p: np.ndarray
    t_star: float
    t_star_stderr: float
    weak_t: np.ndarray
    weak_p: np.ndarray

    def as_dict(self) -> dict:
        return {
            "t": self.t.tolist(),
            "p": self.p.tolist(),
            "t_star": self.t_star,
            "t_star_stderr": self.t_star_stderr,
            "weak_t": self.weak_t.tolist(),
            "weak_p": self.weak_p.tolist(),
        }


def _exceed(sorted_vals: np.ndarray, t: np.ndarray) -> np.ndarray:
    return 1.0 - np.searchsorted(sorted_vals, t, side="left") / sorted_vals.size


def _threshold(t: np.ndarray, p: np.ndarray, modulus: float) -> float:
    """Smallest ``t`` with ``p(t) <= t |w|``, interpolated in ``log t``."""
    gap = p - t * modulus
    hit = np.flatnonzero(gap <= 0)
    if hit.size == 0:
        return math.inf
    i = hit[0]
    if i == 0:
        return float(t[0])
    g0, g1 = gap[i - 1], gap[i]
    lam = g0 / (g0 - g1)
    return float(math.exp((1 - lam) * math.log(t[i - 1]) + lam * math.log(t[i])))


def concentration_probe(
    pools,
    energy: EnergyPoint,
    beta: float | None = None,
    per_decade: int = 40,
    t_range: tuple[float, float] = (1e-6, 10.0),
) -> ConcentrationTable:
    """Empirical concentration of a converged pool around ``w_{E + i eta}``.

    ``P(t)`` is the fraction of samples with ``|g - w| >= t |w|`` on a
    geometric grid, and ``t*`` the first crossing of ``P(t) <= t |w|``
    (linearly interpolated in ``log t``). With several blocks ``t*`` carries
    a jackknife error. The weak-integrability table ``P(|g| >= 1/t)`` is
    reported alongside; ``beta`` is accepted for symmetry with the other
    probes and does not enter the computation.
    """
    pools = _as_pools(pools)
    w = complex(free_green(energy.z, energy.K))
    mod = abs(w)
    lo, hi = t_range
    t = np.geomspace(lo, hi, int(round(per_decade * math.log10(hi / lo))) + 1)
    B = pools[0].n_blocks
    rel = np.stack([(np.abs(p.samples - w) / mod).reshape(B, -1) for p in pools], axis=1).reshape(B, -1)
    per_block = np.stack([_exceed(np.sort(r), t) for r in rel])

    def stat(keep):
        return _threshold(t, per_block[keep].mean(axis=0), mod)

    t_star, se = _jackknife(stat, B)
    p = per_block.mean(axis=0)
    absg = np.sort(np.concatenate([np.abs(q.samples) for q in pools]))
    weak_t = np.geomspace(1e-3, 1.0, 13)
    weak_p = _exceed(absg, 1.0 / weak_t)
    return ConcentrationTable(t, p, t_star, se, weak_t, weak_p)


def offdiagonal_check(path_values: np.ndarray, n: int) -> Estimate:
    """Path-product estimate of the Lyapunov exponent.

    ``path_values[:, k]`` holds the Green's function of the subtree at the
    ``k``-th vertex of a root path (column 0 is the root). Returns
    ``(1/n) E log|prod_{k < n} g(p_k)|`` over replicas, with its standard
    error. ``n = 1`` reduces to the mean ``log|g|`` of the root values.
    """
    path_values = np.asarray(path_values)
    if path_values.ndim != 2:
        raise ValueError("path_values must be (replicas, depth)")
    if not 1 <= n <= path_values.shape[1]:
        raise ValueError(f"path length {n} outside 1..{path_values.shape[1]}")
    per = np.log(np.abs(path_values[:, :n])).sum(axis=1) / n
    return Estimate(float(per.mean()), float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else 0.0)


def eta_schedule(beta: float, eta0: float = 1e-3) -> tuple[float, ...]:
    """Broadening values ``min(beta**2, eta0) * (1, 1/4, 1/16)``."""
    base = min(beta**2, eta0) if beta > 0 else eta0
    return (base, base / 4, base / 16)


def extrapolate_eta(etas: Sequence[float], values: Sequence[Estimate]) -> Estimate:
    """Least-squares line in ``eta`` evaluated at ``eta = 0``."""
    x = np.asarray(etas, float)
    y = np.array([v.value for v in values])
    se = np.array([v.stderr for v in values])
    if x.size == 1:
        return Estimate(float(y[0]), float(se[0]))
    A = np.column_stack([np.ones_like(x), x])
    coef = np.linalg.pinv(A)[0]
    return Estimate(float(coef @ y), float(math.sqrt(np.sum((coef * se) ** 2))))


CSV_COLUMNS = (
    "E",
    "K",
    "beta",
    "eta",
    "lyapunov",
    "lyapunov_stderr",
    "criterion_margin",
    "log_w",
    "t_star",
    "t_star_stderr",
    "phase_label",
    "status",
)


@dataclass
class SpectralReport:
    """Lyapunov exponent, criterion margin, concentration and phase label at one point.

    ``eta`` is ``0.0`` when values are extrapolated from ``raw``.
    """

    energy: EnergyPoint
    beta: float
    lyapunov: Estimate
    log_w: float
    concentration: ConcentrationTable | None
    phase_label: str
    status: str = "converged"
    raw: list = field(default_factory=list)
    eta: float = 0.0

    @property
    def criterion_margin(self) -> float:
        return self.lyapunov.value + math.log(self.energy.K)

    def row(self) -> dict:
        c = self.concentration
        return {
            "E": self.energy.E,
            "K": self.energy.K,
            "beta": self.beta,
            "eta": self.eta,
            "lyapunov": self.lyapunov.value,
            "lyapunov_stderr": self.lyapunov.stderr,
            "criterion_margin": self.criterion_margin,
            "log_w": self.log_w,
            "t_star": c.t_star if c else math.nan,
            "t_star_stderr": c.t_star_stderr if c else math.nan,
            "phase_label": self.phase_label,
            "status": self.status,
        }

    def as_dict(self) -> dict:
        out = self.row()
        out["raw"] = self.raw
        out["concentration"] = self.concentration.as_dict() if self.concentration else None
        return out

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.as_dict()), sort_keys=True)

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n").writerow(_jsonable(self.row()))
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _sub_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def spectral_report(
    E: float,
    beta: float,
    K: int = 2,
    law: DisorderLaw | None = None,
    eta: float | None = None,
    pool_size: int = 100_000,
    seed: int = 0,
    n_blocks: int = 8,
    burn_in: int = 100,
    n_average: int = 100,
    max_generations: int = 1000,
    eps: float = 0.1,
    workers: int = 1,
) -> SpectralReport:
    """Run the population solver and summarize the spectral quantities.

    With ``eta=None`` the solver runs at every value of :func:`eta_schedule`
    and the Lyapunov exponent is extrapolated to ``eta = 0``; a given
    ``eta`` is used as is. The concentration table is taken at the smallest
    broadening. The status is ``"unconverged"`` if any run failed the
    convergence test; results are still reported.
    """
    if law is None:
        law = DisorderLaw.uniform(beta) if beta > 0 else DisorderLaw.free()
    etas = eta_schedule(beta) if eta is None else (float(eta),)
    estimates, raw, status, conc = [], [], "converged", None
    for i, h in enumerate(etas):
        energy = EnergyPoint(E, h, K)
        cfg = IterationConfig(
            energy,
            law,
            pool_size=pool_size,
            max_generations=max_generations,
            seed=_sub_seed(seed, i),
            n_blocks=n_blocks,
            min_generations=burn_in,
            workers=workers,
        )
        pools, st = sample_fixed_point(cfg, n_average)
        if st != "converged":
            status = "unconverged"
        lam = lyapunov_estimate(pools)
        estimates.append(lam)
        raw.append({"eta": h, "lyapunov": lam.value, "lyapunov_stderr": lam.stderr, "status": st})
        if i == len(etas) - 1:
            conc = concentration_probe(pools, energy, beta)
    lam = extrapolate_eta(etas, estimates) if len(etas) > 1 else estimates[0]
    log_w = float(np.log(np.abs(free_green(complex(E), K))))
    margin = criterion_margin(lam, K)
    label = phase_classify(E, beta, K, eps, margin)
    return SpectralReport(
        EnergyPoint(E, etas[-1], K), beta, lam, log_w, conc, label, status, raw,
        0.0 if len(etas) > 1 else etas[0],
    )
