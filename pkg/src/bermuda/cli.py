"""Command-line front end: pricing runs, table reproduction, benchmarks.

Subcommands
-----------
price   build the requested exercise rule and price the option; writes a
        JSON result (estimate + build report + resolved config).
table   rerun one of the standard experiments (iz_prices, cmc_prices,
        impact_j, impact_n1) at an optional scale factor; writes CSV.
bench   time each phase at several worker counts; verifies prices are
        bitwise identical across worker counts and writes a timing CSV.
oracle  single-asset lattice/closed-form reference prices.

Configuration is a flat JSON document; command-line flags override file
keys, which override built-in defaults. All randomness flows from
``--seed``; omitting it picks a time-based seed, which is printed and
recorded in every output file.

Exit codes: 0 success, 1 configuration error, 2 determinism failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._kernels import available_backends, get_backend
from .boundary_cmc import CmcBuildConfig, build_cmc_rule
from .boundary_iz import build_iz_boundary
from .engine import Engine
from .market import BermudanSpec, ConfigError, MarketParams, PayoffKind
from .oracle import TreeSpec, bs_european, crr_price
from .pricer import CmcScoreRule, EuropeanRule, IzRule, price

__all__ = ["RunConfig", "main", "build_and_price"]

_EXIT_CONFIG = 1
_EXIT_DETERMINISM = 2
_EXIT_NUMERICAL = 3


class DeterminismError(RuntimeError):
    """Prices differed across worker counts at a fixed seed."""


@dataclass
class RunConfig:
    """Resolved run parameters (defaults: the standard 3-asset max-call)."""

    method: str = "iz"            # iz | cmc | european
    d: int = 3
    s0: float = 100.0
    r: float = 0.05
    sigma: float = 0.2
    delta: float = 0.1
    rho: float = 0.0
    strike: float = 100.0
    maturity: float = 3.0
    n_dates: int = 9
    payoff: str = "maxcall"       # maxcall | put | call
    j_points: int = 128
    n1: int = 5000
    n2: int = 500
    n_paths: int = 1_000_000
    epsilon: float = 0.01
    max_iter: int = 100
    seed: int | None = None
    workers: int = 1
    nb_tasks: int | None = None
    pool: str = "process"
    backend: str = "auto"
    out: str | None = None
    # dotted keys follow the config-file names
    glp_lo_mult: float = 0.5
    glp_hi_mult: float = 2.5

    _FILE_KEYS = {
        "glp.lo_mult": "glp_lo_mult",
        "glp.hi_mult": "glp_hi_mult",
        "cmc.boost_rounds": "boost_rounds",
    }

    boost_rounds: int = 100

    @classmethod
    def from_sources(cls, file_doc: dict | None, overrides: dict) -> "RunConfig":
        cfg = cls()
        known = {f.name for f in fields(cls)}
        for src in (file_doc or {}), overrides:
            for key, value in src.items():
                name = cls._FILE_KEYS.get(key, key)
                if name not in known:
                    raise ConfigError(f"unknown configuration key {key!r}")
                if value is not None:
                    setattr(cfg, name, value)
        if cfg.seed is None:
            cfg.seed = int(time.time_ns() % (1 << 62))
            print(f"seed not given; using time-based seed {cfg.seed}")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.method not in ("iz", "cmc", "european"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.payoff not in ("maxcall", "put", "call"):
            raise ConfigError(f"unknown payoff {self.payoff!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.pool not in ("process", "thread"):
            raise ConfigError(f"unknown pool kind {self.pool!r}")
        if self.n_paths < 1 or self.n1 < 1 or self.n2 < 1 or self.j_points < 1:
            raise ConfigError("path and point counts must be >= 1")
        # constructing the domain objects runs their own validation
        self.market()
        self.spec()

    def market(self) -> MarketParams:
        return MarketParams(d=self.d, s0=self.s0, r=self.r, sigma=self.sigma,
                            delta=self.delta, rho=self.rho if self.rho else None)

    def spec(self) -> BermudanSpec:
        return BermudanSpec(strike=self.strike, maturity=self.maturity,
                            n_dates=self.n_dates, payoff_kind=PayoffKind(self.payoff))

    def engine(self) -> Engine:
        return Engine(workers=self.workers, nb_tasks=self.nb_tasks, pool=self.pool)

    def to_json_dict(self) -> dict:
        doc = asdict(self)
        for file_key, attr in self._FILE_KEYS.items():
            doc[file_key] = doc.pop(attr)
        return doc


def build_and_price(cfg: RunConfig, engine: Engine | None = None) -> tuple:
    """Build the configured exercise rule, price, and return (estimate, report)."""
    params, spec = cfg.market(), cfg.spec()
    engine = engine or cfg.engine()
    backend = get_backend(cfg.backend if cfg.backend != "auto" else None)
    report = None
    unconverged = 0
    timings = {}
    if cfg.method == "iz":
        t0 = time.perf_counter()
        boundary, report = build_iz_boundary(
            params, spec, cfg.j_points, cfg.n1, cfg.epsilon, cfg.max_iter,
            seed=cfg.seed, engine=engine, lo_mult=cfg.glp_lo_mult,
            hi_mult=cfg.glp_hi_mult, backend=backend)
        timings["build"] = time.perf_counter() - t0
        rule = IzRule(boundary)
        unconverged = report.unconverged_points
    elif cfg.method == "cmc":
        t0 = time.perf_counter()
        cmc, report = build_cmc_rule(
            params, spec, CmcBuildConfig(cfg.n1, cfg.n2, cfg.boost_rounds),
            seed=cfg.seed, engine=engine, backend=backend)
        timings["build"] = time.perf_counter() - t0
        rule = CmcScoreRule(cmc)
    else:
        rule = EuropeanRule()
    est = price(params, spec, rule, cfg.n_paths, cfg.seed, engine=engine,
                backend=backend, build_timings=timings, unconverged_points=unconverged)
    return est, report


def _write_json(path: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_csv(path: str | None, header_doc: dict, columns: list[str],
               rows: list[tuple]) -> None:
    buf = io.StringIO()
    buf.write("# " + json.dumps(header_doc) + "\n")
    writer = csv.writer(buf)
    writer.writerow(columns)
    writer.writerows(rows)
    text = buf.getvalue()
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")


def _repro_header(cfg: RunConfig) -> dict:
    return {"config": cfg.to_json_dict(), "master_seed": cfg.seed,
            "backend": get_backend(cfg.backend if cfg.backend != "auto" else None).name}


def cmd_price(cfg: RunConfig) -> int:
    est, report = build_and_price(cfg)
    doc = _repro_header(cfg)
    doc["estimate"] = est.to_json_dict()
    if report is not None:
        doc["build_report"] = report.to_json_dict()
    if est.unconverged_points:
        doc["warning"] = (f"{est.unconverged_points} boundary points did not "
                          "converge; their last averaged iterates were used")
    _write_json(cfg.out, doc)
    s = est
    print(f"method={cfg.method} s0={cfg.s0} price={s.price:.4f} "
          f"ci95={s.ci95:.4f} paths={s.n_paths}", file=sys.stderr)
    return 0


_TABLES = ("iz_prices", "cmc_prices", "impact_j", "impact_n1")

# reference prices for the standard 3-asset max-call (lattice values)
_BINOMIAL_REF = {90.0: 11.29, 100.0: 18.69, 110.0: 27.58}


def cmd_table(cfg: RunConfig, table_id: str, scale: float) -> int:
    if table_id not in _TABLES:
        raise ConfigError(f"unknown table {table_id!r} (choose from {_TABLES})")
    if not 0.0 < scale <= 1.0:
        raise ConfigError(f"scale must be in (0, 1], got {scale}")

    def scaled(v: int) -> int:
        return max(1, int(round(v * scale)))

    rows = []
    if table_id in ("iz_prices", "cmc_prices"):
        method = "iz" if table_id == "iz_prices" else "cmc"
        columns = ["s0", "price", "variance", "ci95", "binomial", "error", "seconds"]
        for s0 in (90.0, 100.0, 110.0):
            sub = _replace(cfg, method=method, s0=s0, n_paths=scaled(cfg.n_paths),
                           n1=scaled(cfg.n1), n2=scaled(cfg.n2))
            t0 = time.perf_counter()
            est, _ = build_and_price(sub)
            ref = _BINOMIAL_REF[s0]
            rows.append((s0, round(est.price, 4), round(est.variance, 4),
                         round(est.ci95, 4), ref, round(abs(est.price - ref), 4),
                         round(time.perf_counter() - t0, 3)))
    elif table_id == "impact_j":
        columns = ["j_points", "price", "error", "seconds"]
        for j in (128, 256, 1024):
            sub = _replace(cfg, method="iz", s0=90.0, j_points=scaled(j),
                           n_paths=scaled(cfg.n_paths), n1=scaled(cfg.n1))
            t0 = time.perf_counter()
            est, _ = build_and_price(sub)
            rows.append((sub.j_points, round(est.price, 4),
                         round(abs(est.price - _BINOMIAL_REF[90.0]), 4),
                         round(time.perf_counter() - t0, 3)))
    else:  # impact_n1
        columns = ["n1", "price", "error", "seconds"]
        for n1 in (5000, 10000, 100000):
            sub = _replace(cfg, method="iz", s0=90.0, n1=scaled(n1),
                           n_paths=scaled(cfg.n_paths))
            t0 = time.perf_counter()
            est, _ = build_and_price(sub)
            rows.append((sub.n1, round(est.price, 4),
                         round(abs(est.price - _BINOMIAL_REF[90.0]), 4),
                         round(time.perf_counter() - t0, 3)))

    header = _repro_header(cfg)
    header.update({"table": table_id, "scale": scale})
    _write_csv(cfg.out, header, columns, rows)
    return 0


def _replace(cfg: RunConfig, **kw) -> RunConfig:
    doc = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    doc.update(kw)
    out = RunConfig(**doc)
    out.validate()
    return out


def cmd_bench(cfg: RunConfig, worker_counts: list[int], compare_backends: bool) -> int:
    rows = []
    columns = ["backend", "workers", "phase", "task_id", "seconds"]
    summary = []
    backends = [cfg.backend if cfg.backend != "auto" else None]
    if compare_backends:
        backends = [b for b in available_backends()]

    baselines: dict[str, float] = {}
    for be in backends:
        be_name = get_backend(be).name
        for w in worker_counts:
            sub = _replace(cfg, workers=w, backend=be_name)
            engine = sub.engine()
            est, _ = build_and_price(sub, engine=engine)
            for phase, task_id, seconds in engine.timing.rows:
                rows.append((be_name, w, phase, task_id, round(seconds, 6)))
            phases = sorted({p for p, _, _ in engine.timing.rows})
            for phase in phases:
                summary.append((be_name, w, phase,
                                round(engine.timing.phase_seconds(phase), 6),
                                round(engine.timing.straggler_ratio(phase), 3)))
            if be_name not in baselines:
                baselines[be_name] = est.price
            elif est.price != baselines[be_name]:
                raise DeterminismError(
                    f"price changed with worker count on backend {be_name}: "
                    f"{baselines[be_name]!r} at {worker_counts[0]} workers vs "
                    f"{est.price!r} at {w}")

    header = _repro_header(cfg)
    header.update({"worker_counts": worker_counts,
                   "summary_columns": ["backend", "workers", "phase",
                                       "phase_seconds", "straggler_ratio"],
                   "summary": summary})
    _write_csv(cfg.out, header, columns, rows)
    print("determinism check passed: identical prices at worker counts "
          f"{worker_counts}", file=sys.stderr)
    return 0


def cmd_oracle(cfg: RunConfig, steps: int, exercise: str) -> int:
    params, spec = cfg.market(), cfg.spec()
    if exercise == "european":
        tree = TreeSpec.european(steps)
    elif exercise == "american":
        tree = TreeSpec.american(steps)
    else:
        tree = TreeSpec.bermudan(steps, spec.n_dates)
    result = crr_price(params, spec, tree)
    doc = _repro_header(cfg)
    doc["lattice"] = {
        "steps": steps,
        "exercise": exercise,
        "price": result.price,
        "thresholds": {str(k): v for k, v in sorted(result.thresholds.items())},
    }
    if params.d == 1:
        kind = spec.payoff_kind
        if kind is PayoffKind.MAX_CALL:
            kind = PayoffKind.CALL_1D
        doc["black_scholes_european"] = bs_european(
            float(params.s0[0]), spec.strike, params.r, float(params.delta[0]),
            float(params.sigma[0]), spec.maturity, kind)
    _write_json(cfg.out, doc)
    return 0


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="bermuda", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--method", choices=["iz", "cmc", "european"])
        p.add_argument("--d", type=int, help="asset count")
        p.add_argument("--s0", type=float, help="spot price (all assets)")
        p.add_argument("--strike", type=float)
        p.add_argument("--payoff", choices=["maxcall", "put", "call"])
        p.add_argument("--n-paths", type=int, dest="n_paths")
        p.add_argument("--n1", type=int, help="boundary/training simulations")
        p.add_argument("--n2", type=int, help="labeling paths per point")
        p.add_argument("--j-points", type=int, dest="j_points")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--boost-rounds", type=int, dest="boost_rounds")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--nb-tasks", type=int, dest="nb_tasks")
        p.add_argument("--pool", choices=["process", "thread"])
        p.add_argument("--backend", choices=["auto", "cython", "numpy"])
        p.add_argument("--out", help="output path (default: stdout)")

    p_price = sub.add_parser("price", help="build a rule and price the option")
    common(p_price)

    p_table = sub.add_parser("table", help="reproduce a standard experiment table")
    common(p_table)
    p_table.add_argument("table_id", choices=list(_TABLES))
    p_table.add_argument("--scale", type=float, default=1.0,
                         help="multiply N, N1, N2 by this factor (0 < scale <= 1)")

    p_bench = sub.add_parser("bench", help="phase timings across worker counts")
    common(p_bench)
    p_bench.add_argument("--worker-counts", default="1,2,4",
                         help="comma-separated worker counts")
    p_bench.add_argument("--compare-backends", action="store_true",
                         help="run each timing on every available kernel backend")

    p_oracle = sub.add_parser("oracle", help="lattice/closed-form reference prices")
    common(p_oracle)
    p_oracle.add_argument("--steps", type=int, default=5004)
    p_oracle.add_argument("--exercise", choices=["european", "american", "bermudan"],
                          default="bermudan")
    return top


_CFG_FLAGS = ["method", "d", "s0", "strike", "payoff", "n_paths", "n1", "n2",
              "j_points", "epsilon", "boost_rounds", "seed", "workers",
              "nb_tasks", "pool", "backend", "out"]


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        file_doc = None
        if args.config:
            with open(args.config) as fh:
                file_doc = json.load(fh)
        overrides = {k: getattr(args, k) for k in _CFG_FLAGS if getattr(args, k, None) is not None}
        cfg = RunConfig.from_sources(file_doc, overrides)

        if args.command == "price":
            return cmd_price(cfg)
        if args.command == "table":
            return cmd_table(cfg, args.table_id, args.scale)
        if args.command == "bench":
            counts = [int(w) for w in str(args.worker_counts).split(",") if w]
            if not counts:
                raise ConfigError("need at least one worker count")
            return cmd_bench(cfg, counts, args.compare_backends)
        if args.command == "oracle":
            return cmd_oracle(cfg, args.steps, args.exercise)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except DeterminismError as exc:
        print(f"determinism failure: {exc}", file=sys.stderr)
        return _EXIT_DETERMINISM
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
