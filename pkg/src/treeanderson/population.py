"""Population dynamics for the self-consistent equation on the tree.

A measure on the upper half-plane is represented by a pool of samples. One
generation replaces every slot by

    g' = -1 / (g_{i_1} + ... + g_{i_K} + h + E + i eta)

with parents drawn uniformly with replacement and ``h`` drawn from the
disorder law. A pool may be split into independent blocks (sub-populations
that only draw parents from themselves); block structure is what gives
honest error bars for pool averages.

:func:`finite_tree_green` is an exact oracle: it builds independent rooted
K-ary trees and evaluates the Green's function recursion bottom-up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import _rng
from .disorder import DisorderLaw
from .halfplane import EnergyPoint, free_green, hyp_dist

__all__ = [
    "MeasurePool",
    "IterationConfig",
    "ConvergenceTrace",
    "PoolStats",
    "init_pool",
    "step_pool",
    "run_to_fixed_point",
    "pool_distance",
    "finite_tree_green",
    "pool_stats",
    "save_pool",
    "load_pool",
]

MAX_TREE_VERTICES = 10**7


@dataclass(frozen=True, eq=False)
class MeasurePool:
    """Empirical measure on the upper half-plane."""

    samples: np.ndarray
    generation: int = 0
    seed_lineage: tuple = ()
    n_blocks: int = 1

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=complex)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("pool samples must be a non-empty 1-D array")
        if s.size % self.n_blocks:
            raise ValueError(f"pool size {s.size} not divisible into {self.n_blocks} blocks")
        object.__setattr__(self, "samples", s)

    @property
    def size(self) -> int:
        return self.samples.size

    @property
    def blocks(self) -> np.ndarray:
        """Samples reshaped to ``(n_blocks, block_size)``."""
        return self.samples.reshape(self.n_blocks, -1)

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class IterationConfig:
    energy: EnergyPoint
    law: DisorderLaw
    pool_size: int = 100_000
    max_generations: int = 500
    convergence_tol: float = 0.005
    seed: int = 0
    n_blocks: int = 1
    min_generations: int = 0
    lag: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.pool_size < 1 or self.pool_size % self.n_blocks:
            raise ValueError("pool_size must be a positive multiple of n_blocks")

    @property
    def K(self) -> int:
        return self.energy.K

    @property
    def z(self) -> complex:
        return self.energy.z


def init_pool(mode: str, cfg: IterationConfig, z0: complex | None = None) -> MeasurePool:
    """Initial pool.

    Parameters
    ----------
    mode : {"delta", "free", "leaf"}
        ``delta``: every sample equals ``z0``. ``free``: every sample equals
        the free Green's function ``w_{E+i eta}``. ``leaf``: independent
        draws ``-1/(h + E + i eta)``, so that generation ``n`` has the law
        of the root of a depth ``n+1`` tree.
    """
    n = cfg.pool_size
    lineage = (cfg.seed, mode)
    if mode == "free":
        z0 = complex(free_green(cfg.z, cfg.K))
        mode = "delta"
    if mode == "delta":
        if z0 is None or not complex(z0).imag > 0:
            raise ValueError(f"delta initialisation needs a point of the upper half-plane, got {z0}")
        return MeasurePool(np.full(n, complex(z0)), 0, lineage, cfg.n_blocks)
    if mode == "leaf":
        out = np.empty(n, dtype=complex)

        def fill(i, a, b):
            h = cfg.law.sample(_rng.stream(cfg.seed, _rng.LEAF, i), b - a)
            out[a:b] = -1.0 / (h + cfg.z)

        _rng.run_chunks(fill, n, cfg.workers)
        return MeasurePool(out, 0, lineage, cfg.n_blocks)
    raise ValueError(f"unknown init mode {mode!r}")


def step_pool(pool: MeasurePool, cfg: IterationConfig) -> MeasurePool:
    """One generation of the self-consistent recursion.

    Slot ``j`` of generation ``n+1`` uses the random stream keyed by
    ``(seed, n, chunk of j)``; the result is independent of ``cfg.workers``.
    """
    src = pool.samples
    n = src.size
    bs = n // pool.n_blocks
    K = cfg.K
    z = cfg.z
    gen = pool.generation + 1
    out = np.empty(n, dtype=complex)

    def fill(i, a, b):
        rng = _rng.stream(cfg.seed, _rng.STEP, gen, i)
        m = b - a
        base = (np.arange(a, b) // bs) * bs
        idx = rng.integers(0, bs, size=(m, K)) + base[:, None]
        h = cfg.law.sample(rng, m)
        out[a:b] = -1.0 / (src[idx].sum(axis=1) + h + z)

    _rng.run_chunks(fill, n, cfg.workers)
    return MeasurePool(out, gen, pool.seed_lineage, pool.n_blocks)


def _ks(a: np.ndarray, b: np.ndarray) -> float:
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    # point masses agreeing to rounding: KS would see distinct atoms
    if hi - lo <= 1e-12 * (1.0 + max(abs(lo), abs(hi))):
        return 0.0
    return float(stats.ks_2samp(a, b, method="asymp").statistic)


def pool_distance(a: MeasurePool, b: MeasurePool) -> float:
    """Max of the Kolmogorov-Smirnov distances of the real and imaginary marginals."""
    if a.size != b.size:
        raise ValueError(f"pool sizes differ: {a.size} != {b.size}")
    x, y = a.samples, b.samples
    return max(_ks(x.real, y.real), _ks(x.imag, y.imag))


@dataclass
class ConvergenceTrace:
    generations: list = field(default_factory=list)
    metric: list = field(default_factory=list)
    converged: bool = False
    tol: float = 0.0

    @property
    def status(self) -> str:
        return "converged" if self.converged else "unconverged"

    def __len__(self):
        return len(self.metric)


def run_to_fixed_point(cfg: IterationConfig, init="free") -> tuple[MeasurePool, ConvergenceTrace]:
    """Iterate :func:`step_pool` until the pool stops changing in law.

    The convergence metric is :func:`pool_distance` between generation ``n``
    and ``n - cfg.lag``, evaluated every ``cfg.lag`` generations. Iteration stops once it is at most
    ``cfg.convergence_tol`` and at least ``cfg.min_generations`` steps were
    taken, or after ``cfg.max_generations``. Non-convergence is reported in
    the trace, not raised.

    ``init`` is an initial :class:`MeasurePool`, a point of the upper
    half-plane, or one of the :func:`init_pool` modes. The default ``"free"``
    warm-starts at the free Green's function.
    """
    if isinstance(init, MeasurePool):
        pool = init
    elif isinstance(init, str):
        pool = init_pool(init, cfg)
    else:
        pool = init_pool("delta", cfg, complex(init))
    trace = ConvergenceTrace(tol=cfg.convergence_tol)
    anchor = pool
    for n in range(1, cfg.max_generations + 1):
        pool = step_pool(pool, cfg)
        if n % cfg.lag:
            continue
        metric = pool_distance(pool, anchor)
        anchor = pool
        trace.generations.append(pool.generation)
        trace.metric.append(metric)
        if metric <= cfg.convergence_tol and pool.generation >= cfg.min_generations:
            trace.converged = True
            break
    return pool, trace


def finite_tree_green(
    depth: int,
    cfg: IterationConfig,
    replicas: int,
    leaf_pool: MeasurePool | None = None,
    return_path: bool = False,
    chunk: int | None = None,
):
    """Root Green's functions of independent finite K-ary trees.

    Every replica is a rooted tree of the given depth (the root has ``K``
    children, and so on; ``depth = 1`` is a single vertex) with i.i.d.
    potentials. Values are computed bottom-up by
    ``g(v) = -1/(sum over children g + h_v + E + i eta)``. Leaves get
    ``-1/(h + E + i eta)``, or when ``leaf_pool`` is given, a random sample
    from it inserted below the last level (the tree then hangs off that pool).

    Returns
    -------
    MeasurePool
        The ``replicas`` root values.
    path : ndarray, shape (replicas, depth), optional
        With ``return_path``, the values along the first-child spine,
        ``path[:, 0]`` being the root.
    """
    K = cfg.K
    if depth < 1 or replicas < 1:
        raise ValueError("depth and replicas must be >= 1")
    leaves = K ** (depth - 1)
    if depth * leaves > MAX_TREE_VERTICES:
        raise ValueError(
            f"tree of depth {depth} with K={K} exceeds the {MAX_TREE_VERTICES:.0e} vertex guard"
        )
    if chunk is None:
        chunk = max(1, min(replicas, 2**22 // (leaves * K)))
    z = cfg.z
    roots = np.empty(replicas, dtype=complex)
    path = np.empty((replicas, depth), dtype=complex) if return_path else None

    def fill(i, a, b):
        rng = _rng.stream(cfg.seed, _rng.TREE, depth, i)
        m = b - a
        width = leaves
        if leaf_pool is None:
            level = -1.0 / (cfg.law.sample(rng, m * width).reshape(m, width) + z)
        else:
            below = leaf_pool.samples[rng.integers(0, leaf_pool.size, size=(m, width * K))]
            h = cfg.law.sample(rng, m * width).reshape(m, width)
            level = -1.0 / (below.reshape(m, width, K).sum(axis=2) + h + z)
        if path is not None:
            path[a:b, depth - 1] = level[:, 0]
        for lev in range(depth - 2, -1, -1):
            width //= K
            h = cfg.law.sample(rng, m * width).reshape(m, width)
            level = -1.0 / (level.reshape(m, width, K).sum(axis=2) + h + z)
            if path is not None:
                path[a:b, lev] = level[:, 0]
        roots[a:b] = level[:, 0]

    _rng.run_chunks(fill, replicas, cfg.workers, size=chunk)
    pool = MeasurePool(roots, depth - 1, (cfg.seed, "tree", depth), 1)
    return (pool, path) if return_path else pool


@dataclass(frozen=True)
class PoolStats:
    mean_hyp_dist: float
    mean_hyp_dist_sq: float
    variance_hyp_dist: float
    t_grid: np.ndarray
    concentration: np.ndarray
    lyapunov_raw: float

    @property
    def variance_ratio(self) -> float:
        """``V d / E d**2``; zero for a point mass."""
        if self.mean_hyp_dist_sq == 0:
            return 0.0
        return self.variance_hyp_dist / self.mean_hyp_dist_sq


def default_t_grid(per_decade: int = 10, lo: float = 1e-6, hi: float = 10.0) -> np.ndarray:
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.geomspace(lo, hi, n)


def pool_stats(pool: MeasurePool, reference, t_grid=None) -> PoolStats:
    """Distance statistics of a pool around a reference point of the half-plane."""
    ref = complex(reference)
    g = pool.samples
    d = hyp_dist(g, ref)
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, float)
    rel = np.abs(g - ref) / abs(ref)
    srel = np.sort(rel)
    conc = 1.0 - np.searchsorted(srel, t, side="left") / srel.size
    return PoolStats(
        mean_hyp_dist=float(d.mean()),
        mean_hyp_dist_sq=float(np.mean(d**2)),
        variance_hyp_dist=float(d.var()),
        t_grid=t,
        concentration=conc,
        lyapunov_raw=float(np.mean(np.log(np.abs(g)))),
    )


def save_pool(pool: MeasurePool, path, fmt: str | None = None) -> Path:
    """Write a pool as CSV (``re,im`` per line) or binary ``.npy``."""
    path = Path(path)
    fmt = fmt or ("npy" if path.suffix == ".npy" else "csv")
    if fmt == "npy":
        np.save(path, pool.samples)
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"# generation={pool.generation} n_blocks={pool.n_blocks}\n")
            fh.write("re,im\n")
            np.savetxt(fh, np.column_stack([pool.samples.real, pool.samples.imag]),
                       delimiter=",", fmt="%.17g")
    else:
        raise ValueError(f"unknown pool format {fmt!r}")
    return path


def load_pool(path, n_blocks: int = 1) -> MeasurePool:
    path = Path(path)
    if path.suffix == ".npy":
        return MeasurePool(np.load(path), n_blocks=n_blocks)
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    return MeasurePool(data[:, 0] + 1j * data[:, 1], n_blocks=n_blocks)


def with_blocks(pool: MeasurePool, n_blocks: int) -> MeasurePool:
    return replace(pool, n_blocks=n_blocks)
