"""Batch front end: ``treeanderson {solve,sweep,certify,validate,oracle-compare}``.

Settings are resolved from, in increasing priority: built-in defaults, a
``key = value`` config file (``--config``, any section), environment
variables ``TREEANDERSON_<KEY>`` and command-line flags. A seed is
mandatory. Every output starts with the package version, the seed and a hash
of the resolved configuration, and is byte-identical for the same
configuration whatever the worker count.

Exit codes: 0 on success (also when a solver reports ``unconverged``),
2 on configuration errors, 3 on internal errors.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .density import (
    GridSpec,
    TailBound,
    cauchy_grid,
    cauchy_project,
    density_fixed_point,
    l1_distance,
    law_tail,
    tail_certify,
)
from .disorder import ConfigurationError, DisorderLaw, load_table, validate
from .halfplane import EnergyPoint, free_green
from .inequalities import property_suite
from .population import IterationConfig, _ks, finite_tree_green, init_pool, run_to_fixed_point, step_pool
from .spectra import CSV_COLUMNS, _jsonable, _sub_seed, eta_schedule, spectral_report

ENV_PREFIX = "TREEANDERSON_"
COMMANDS = ("solve", "sweep", "certify", "validate", "oracle-compare")
KS_99 = 1.63  # band 1.63/sqrt(N) + 1.63/sqrt(m) for two-sample KS at 1%


class ConfigError(ConfigurationError):
    """Invalid run configuration; reported with exit code 2."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _range(text: str) -> tuple[float, ...]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("expected lo:hi:step")
    lo, hi, step = map(float, parts)
    if step <= 0 or hi < lo:
        raise ValueError("need lo <= hi and step > 0")
    n = int(round((hi - lo) / step)) + 1
    return tuple(float(v) for v in np.round(lo + step * np.arange(n), 12))


def _eta(text: str):
    if text.strip().lower() == "schedule":
        return None
    v = float(text)
    if not v > 0:
        raise ValueError("eta must be positive or 'schedule'")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


@dataclass
class RunConfig:
    """Resolved settings of one run."""

    command: str
    seed: int
    E: tuple = (0.0,)
    E_range: tuple | None = None
    beta: tuple = (0.02,)
    eta: float | None = None
    K: int = 2
    law: str = "uniform"
    law_L: float = 2.0
    law_table: str | None = None
    pool_size: int = 100_000
    n_blocks: int = 8
    burn_in: int = 100
    n_average: int = 100
    max_generations: int = 1000
    grid_points: int = 2**14
    n_steps: int = 50
    depth: int = 12
    replicas: int = 100_000
    suite_size: int = 100_000
    out: str | None = None
    workers: int = 1
    format: str = "csv"

    @property
    def energies(self) -> tuple[float, ...]:
        return self.E_range if self.E_range is not None else self.E

    def resolved(self) -> dict:
        """Everything that determines the results (not where or how they are written)."""
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for k in ("out", "workers", "format", "E_range"):
            d.pop(k)
        d["E"] = list(self.energies)
        d["beta"] = list(self.beta)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(_jsonable(self.resolved()), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def make_law(self, beta: float) -> DisorderLaw:
        if beta == 0:
            return DisorderLaw.free()
        if self.law == "uniform":
            return DisorderLaw.uniform(beta, self.law_L)
        if self.law == "gaussian":
            return DisorderLaw.gaussian(beta, self.law_L)
        if self.law == "table":
            if not self.law_table:
                raise ConfigError("law = table needs law_table = PATH")
            return load_table(self.law_table, beta, self.law_L)
        raise ConfigError(f"unknown law {self.law!r}")


PARSERS = {
    "seed": lambda t: int(t, 0),
    "E": _floats,
    "E_range": _range,
    "beta": _floats,
    "eta": _eta,
    "K": int,
    "law": str.strip,
    "law_L": float,
    "law_table": str.strip,
    "pool_size": _pos_int,
    "n_blocks": _pos_int,
    "burn_in": int,
    "n_average": _pos_int,
    "max_generations": _pos_int,
    "grid_points": _pos_int,
    "n_steps": _pos_int,
    "depth": _pos_int,
    "replicas": _pos_int,
    "suite_size": _pos_int,
    "out": str.strip,
    "workers": _pos_int,
    "format": str.strip,
}


def _read_config_file(path: str) -> dict[str, tuple[str, str]]:
    """``key -> (raw value, 'file:line')`` from an INI-style file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: config file not found")
    text = p.read_text()
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string("[__top__]\n" + text, source=path)
    except configparser.Error as exc:
        # line numbers shift by one for the injected top section
        msg = str(exc).replace("[line ", "[config line +1 ")
        raise ConfigError(f"{path}: {msg}") from None
    lines = {}
    for no, line in enumerate(text.splitlines(), 1):
        key = line.split("=", 1)[0].strip() if "=" in line else None
        if key and not line.lstrip().startswith(("#", ";")):
            lines.setdefault(key, no)
    out = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            out[key] = (val, f"{path}:{lines.get(key, '?')}")
    return out


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treeanderson", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"treeanderson {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH")
    for key in PARSERS:
        flag = "--" + key.replace("_", "-")
        ap.add_argument(flag, dest=key, metavar=key.upper(), default=None)
    return ap


def resolve_config(argv: list[str] | None = None, environ=None) -> RunConfig:
    """Merge defaults, config file, environment and flags into a :class:`RunConfig`."""
    environ = os.environ if environ is None else environ
    args = _build_parser().parse_args(argv)
    raw: dict[str, tuple[str, str]] = {}
    if args.config:
        raw.update(_read_config_file(args.config))
    for key in PARSERS:
        env = environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            raw[key] = (env, f"env {ENV_PREFIX}{key.upper()}")
    for key in PARSERS:
        val = getattr(args, key)
        if val is not None:
            raw[key] = (val, f"--{key.replace('_', '-')}")

    values = {}
    for key, (text, where) in raw.items():
        if key not in PARSERS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        try:
            values[key] = PARSERS[key](text)
        except ValueError as exc:
            raise ConfigError(f"{where}: {key} = {text!r}: {exc}") from None
    if "seed" not in values:
        raise ConfigError("seed is required (--seed, TREEANDERSON_SEED or 'seed =' in the config file)")
    values.setdefault("workers", os.cpu_count() or 1)
    cfg = RunConfig(command=args.command, **values)
    _check(cfg, raw)
    return cfg


def _check(cfg: RunConfig, raw) -> None:
    def where(key):
        return raw[key][1] if key in raw else "default"

    if not 0 <= cfg.seed < 2**64:
        raise ConfigError(f"{where('seed')}: seed must be an unsigned 64-bit integer")
    if cfg.K < 2:
        raise ConfigError(f"{where('K')}: K must be >= 2")
    if any(not 0 <= b < 1 for b in cfg.beta):
        raise ConfigError(f"{where('beta')}: beta values must lie in [0, 1)")
    if cfg.law not in ("uniform", "gaussian", "table"):
        raise ConfigError(f"{where('law')}: law must be uniform, gaussian or table")
    if cfg.law_L < 1:
        raise ConfigError(f"{where('law_L')}: law_L must be >= 1")
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"{where('format')}: format must be csv or json")
    if cfg.pool_size % cfg.n_blocks:
        raise ConfigError(f"{where('n_blocks')}: n_blocks must divide pool_size")
    if cfg.grid_points & (cfg.grid_points - 1):
        raise ConfigError(f"{where('grid_points')}: grid_points must be a power of two")
    if cfg.command == "solve" and (len(cfg.energies) != 1 or len(cfg.beta) != 1):
        raise ConfigError("solve takes exactly one E and one beta; use sweep for grids")


# -- commands --------------------------------------------------------------

def _solve_point(cfg: RunConfig, E: float, beta: float, seed: int):
    return spectral_report(
        E, beta, cfg.K, cfg.make_law(beta), cfg.eta,
        pool_size=cfg.pool_size, seed=seed, n_blocks=cfg.n_blocks, burn_in=cfg.burn_in,
        n_average=cfg.n_average, max_generations=cfg.max_generations,
    )


def _grid_map(fn, points, workers: int):
    """Evaluate ``fn`` on every point; results in input order."""
    if workers <= 1 or len(points) <= 1:
        return [fn(*p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda p: fn(*p), points))


def cmd_solve(cfg: RunConfig):
    report = _solve_point(cfg, cfg.energies[0], cfg.beta[0], cfg.seed)
    return list(CSV_COLUMNS), [report.as_dict()], [report.row()]


def cmd_sweep(cfg: RunConfig):
    points = [
        (E, b, _sub_seed(cfg.seed, i, j))
        for j, b in enumerate(cfg.beta)
        for i, E in enumerate(cfg.energies)
    ]
    reports = _grid_map(lambda E, b, s: _solve_point(cfg, E, b, s), points, cfg.workers)
    return list(CSV_COLUMNS), [r.as_dict() for r in reports], [r.row() for r in reports]


CERTIFY_COLUMNS = [
    "E", "K", "beta", "eta", "w", "t", "s0", "r0", "s_final", "r_final",
    "closes", "breakdown", "first_failing_step", "radius", "bound", "status",
]


def cmd_certify(cfg: RunConfig):
    rows = []
    for beta in cfg.beta:
        law = cfg.make_law(beta)
        eta = cfg.eta if cfg.eta is not None else eta_schedule(beta)[0]
        nu = law_tail(law)
        eta_tail = TailBound(eta / math.pi, 0.0, 0.0)
        for E in cfg.energies:
            row = {c: None for c in CERTIFY_COLUMNS}
            row.update(E=E, K=cfg.K, beta=beta, eta=eta)
            if abs(E) < 2 * math.sqrt(cfg.K):
                row["status"] = "outside_regime"
            else:
                rep = tail_certify(EnergyPoint(E, eta, cfg.K), beta, nu, eta_tail, cfg.n_steps)
                d = rep.as_dict()
                row.update({k: d[k] for k in CERTIFY_COLUMNS if k in d and k not in ("E", "K", "beta")})
                row["status"] = "pass" if rep.closes else ("breakdown" if rep.breakdown else "fail")
            rows.append(row)
    return CERTIFY_COLUMNS, rows, rows


VALIDATE_COLUMNS = ["kind", "name", "beta", "value", "passes"]


def cmd_validate(cfg: RunConfig):
    rows, records = [], []
    for beta in cfg.beta:
        if beta == 0:
            continue
        rep = validate(cfg.make_law(beta))
        records.append({"kind": "disorder", **rep.as_dict()})
        values = {
            "fourth_moment": rep.fourth_moment,
            "mean_zero": rep.mean,
            "regularity": rep.regularity_worst_ratio,
            "subcauchy": rep.subcauchy_worst_ratio,
        }
        for name, value in values.items():
            rows.append({"kind": "hypothesis", "name": name, "beta": beta, "value": value,
                         "passes": getattr(rep.passes, name)})
    for res in property_suite(n=cfg.suite_size, seed=cfg.seed):
        rows.append({"kind": "inequality", "name": res.name, "beta": None, "value": res.worst_slack,
                     "passes": res.passes})
        records.append({"kind": "inequality", **res.as_dict()})
    return VALIDATE_COLUMNS, records, rows


COMPARE_COLUMNS = ["E", "beta", "eta", "comparison", "statistic", "threshold", "passes", "status"]


def _compare_point(cfg: RunConfig, E: float, beta: float, seed: int) -> list[dict]:
    law = cfg.make_law(beta)
    eta = cfg.eta if cfg.eta is not None else 1e-4
    energy = EnergyPoint(E, eta, cfg.K)
    icfg = IterationConfig(energy, law, pool_size=cfg.pool_size, seed=seed)
    n = cfg.depth
    pool = init_pool("leaf", icfg)
    for _ in range(n - 1):
        pool = step_pool(pool, icfg)
    tree = finite_tree_green(n, IterationConfig(energy, law, seed=_sub_seed(seed, 1)), cfg.replicas)
    ks = max(_ks(pool.samples.real, tree.samples.real), _ks(pool.samples.imag, tree.samples.imag))
    band = KS_99 / math.sqrt(pool.size) + KS_99 / math.sqrt(tree.size)
    rows = [{"E": E, "beta": beta, "eta": eta, "comparison": f"population-vs-tree depth {n}",
             "statistic": ks, "threshold": band, "passes": ks <= band, "status": "converged"}]

    # projected fixed points at a broadening the grid resolves
    deta = max(eta, 0.05)
    denergy = EnergyPoint(E, deta, cfg.K)
    dcfg = IterationConfig(denergy, law, pool_size=cfg.pool_size, seed=_sub_seed(seed, 2),
                           min_generations=cfg.burn_in, max_generations=cfg.max_generations)
    fixed, trace = run_to_fixed_point(dcfg)
    grid = GridSpec.for_energy(E, cfg.grid_points)
    f0 = cauchy_grid(complex(free_green(denergy.z, cfg.K)), grid)
    fd, dtrace = density_fixed_point(f0, law, denergy, max_steps=cfg.max_generations, tol=1e-7)
    l1 = l1_distance(cauchy_project(fixed, grid, beta), fd)
    status = "converged" if trace.converged and dtrace.converged else "unconverged"
    rows.append({"E": E, "beta": beta, "eta": deta, "comparison": "population-vs-density L1",
                 "statistic": l1, "threshold": 2e-2, "passes": l1 <= 2e-2, "status": status})
    return rows


def cmd_oracle_compare(cfg: RunConfig):
    points = [
        (E, b, _sub_seed(cfg.seed, i, j))
        for j, b in enumerate(cfg.beta)
        for i, E in enumerate(cfg.energies)
    ]
    results = _grid_map(lambda E, b, s: _compare_point(cfg, E, b, s), points, cfg.workers)
    rows = [r for res in results for r in res]
    return COMPARE_COLUMNS, rows, rows


HANDLERS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "certify": cmd_certify,
    "validate": cmd_validate,
    "oracle-compare": cmd_oracle_compare,
}


# -- output ----------------------------------------------------------------

def _meta(cfg: RunConfig) -> dict:
    return {
        "version": __version__,
        "command": cfg.command,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.resolved(),
    }


def render(cfg: RunConfig, columns, records, rows) -> str:
    """Serialize results; CSV starts with ``#`` comment lines holding the metadata."""
    meta = _jsonable(_meta(cfg))
    if cfg.format == "json":
        return json.dumps({"meta": meta, "results": _jsonable(records)}, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# treeanderson {meta['version']} command={cfg.command} seed={cfg.seed} "
              f"config_hash={meta['config_hash']}\n")
    buf.write("# config=" + json.dumps(meta["config"], sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                         for k, v in _jsonable(row).items()})
    return buf.getvalue()


def run(cfg: RunConfig) -> str:
    """Execute a resolved configuration and write (or return) the rendered output."""
    text = render(cfg, *HANDLERS[cfg.command](cfg))
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.out).write_text(text)
    return text


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = resolve_config(argv)
        text = run(cfg)
    except ConfigurationError as exc:
        print(f"treeanderson: configuration error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return 2 if exc.code not in (0, None) else 0
    except Exception:
        traceback.print_exc()
        return 3
    if not cfg.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
