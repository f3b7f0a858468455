"""Exercise-boundary parameterization by fixed-point search and regression.

For each exercise date (walking backward from maturity) and each asset,
J probe points are placed at a low-discrepancy grid of the *other*
assets' prices. At each probe the optimal exercise level solves the
value-matching condition

    continuation(x) = intrinsic(x)            (call form: x = K + C(x))

which is iterated as a fixed-point map; the continuation value is a
fresh Monte Carlo estimate each iteration, using only boundaries of
later dates (strict backward induction). A quadratic surface is then
regressed through the J solved levels per asset and date. The final
date's boundary is the strike.

The raw stopping rule |x_{k+1} - x_k| < eps can trigger spuriously
mid-transit when the step is mostly Monte Carlo noise, which biases
levels toward the start value; the test is therefore armed only once
the iterate path has crossed its target (first step against the
transit direction). Returned levels average the last few iterates to
smooth the remaining noise.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._kernels import get_backend
from ._kernels.packs import RulePack, n_quad_basis, pack_market, quad_basis
from .engine import Engine
from .lowdisc import SeedGrid, default_box, generate_glp
from .market import BermudanSpec, ConfigError, MarketParams, PayoffKind
from .rng import Phase, StreamKey

__all__ = [
    "BoundaryPointJob", "PointResult", "IzBoundary", "IzBuildReport",
    "continuation_value", "solve_boundary_point", "regress_boundary",
    "build_iz_boundary",
]


@dataclass(frozen=True)
class BoundaryPointJob:
    """One probe of the optimal exercise level.

    The probe fixes asset ``asset_index`` at the unknown level x and the
    remaining assets at ``seed_point`` (clipped below x so the probed
    asset attains the payoff maximum).
    """

    date_index: int
    asset_index: int
    seed_point: np.ndarray  # (d-1,) prices of the other assets
    n_inner: int            # Monte Carlo paths per continuation estimate
    epsilon: float = 0.01   # stopping tolerance, currency units
    max_iter: int = 100

    def __post_init__(self):
        if self.n_inner < 1:
            raise ConfigError(f"need at least one inner path, got {self.n_inner}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class PointResult:
    level: float
    iterations: int
    converged: bool


class IzBoundary:
    """Per-date, per-asset exercise boundary surfaces.

    ``coeffs[m, i]`` are quadratic-basis coefficients of asset i's
    boundary level over the other assets' prices at date m (constant for
    d = 1); the final date's boundary is the constant strike.
    """

    def __init__(self, strike: float, d: int, n_dates: int, call_like: bool,
                 coeffs: np.ndarray, box: np.ndarray):
        nb = n_quad_basis(max(d - 1, 0))
        if coeffs.shape != (n_dates + 1, d, nb):
            raise ValueError(f"coefficient block has shape {coeffs.shape}, "
                             f"expected {(n_dates + 1, d, nb)}")
        self.strike = float(strike)
        self.d = int(d)
        self.n_dates = int(n_dates)
        self.call_like = bool(call_like)
        self.coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
        self.box = np.asarray(box, dtype=np.float64)

    @classmethod
    def terminal_only(cls, spec: BermudanSpec, d: int, box: np.ndarray) -> "IzBoundary":
        """Boundary that only knows the maturity date (constant strike)."""
        nb = n_quad_basis(max(d - 1, 0))
        coeffs = np.zeros((spec.n_dates + 1, d, nb))
        coeffs[spec.n_dates, :, 0] = spec.strike
        return cls(spec.strike, d, spec.n_dates, spec.payoff_kind.call_like, coeffs, box)

    def level(self, m: int, asset: int, others) -> float:
        """Boundary level of ``asset`` at date m given the other assets' prices."""
        z = np.asarray(others, dtype=np.float64).reshape(1, -1)
        if z.size:
            z = np.clip(z, self.box[:, 0], self.box[:, 1])
        raw = float(quad_basis(z) @ self.coeffs[m, asset])
        return max(raw, self.strike) if self.call_like else min(raw, self.strike)

    def crossed(self, m: int, values: np.ndarray) -> bool:
        """True if the argmax asset (lowest index on ties) is past its boundary."""
        values = np.asarray(values, dtype=np.float64)
        if self.d == 1:
            b = self.level(m, 0, values[:0])
            return values[0] >= b if self.call_like else values[0] <= b
        i = int(np.argmax(values))
        others = np.delete(values, i)
        return values[i] >= self.level(m, i, others)

    def pack(self) -> RulePack:
        return RulePack.from_surfaces(self.coeffs, self.box[:, 0], self.box[:, 1],
                                      self.call_like)

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "strike": self.strike,
            "d": self.d,
            "n_dates": self.n_dates,
            "call_like": self.call_like,
            "box": self.box.tolist(),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "IzBoundary":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported boundary document version {doc.get('version')!r}")
        return cls(doc["strike"], doc["d"], doc["n_dates"], doc["call_like"],
                   np.asarray(doc["coeffs"], dtype=np.float64),
                   np.asarray(doc["box"], dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "IzBoundary":
        return cls.from_json_dict(json.loads(text))


@dataclass
class IzBuildReport:
    """Phase breakdown of a boundary build."""

    glp_seconds: float = 0.0
    calc_seconds: float = 0.0
    reg_seconds: float = 0.0
    per_date: list[dict] = field(default_factory=list)
    unconverged_points: int = 0
    iteration_counts: list[int] = field(default_factory=list)

    def iteration_spread(self) -> dict:
        if not self.iteration_counts:
            return {"min": 0, "median": 0.0, "max": 0}
        arr = np.asarray(self.iteration_counts)
        return {"min": int(arr.min()), "median": float(np.median(arr)),
                "max": int(arr.max())}

    def to_json_dict(self) -> dict:
        return {
            "phases": {"glp": self.glp_seconds, "calc": self.calc_seconds,
                       "reg": self.reg_seconds},
            "per_date": self.per_date,
            "unconverged_points": self.unconverged_points,
            "iteration_spread": self.iteration_spread(),
        }


def _start_values(job: BoundaryPointJob, x: float, strike: float, d: int) -> np.ndarray:
    """Probe state: asset at level x, others at the seed point clipped below x.

    Seed coordinates exceeding x are pulled to x - 0.01 K so the probed
    asset attains the maximum and the intrinsic value is x - K.
    """
    values = np.empty(d)
    others = np.where(job.seed_point > x, x - 0.01 * strike, job.seed_point)
    values[:job.asset_index] = others[:job.asset_index]
    values[job.asset_index] = x
    values[job.asset_index + 1:] = others[job.asset_index:]
    return values


def continuation_value(x: float, job: BoundaryPointJob, later: IzBoundary,
                       params: MarketParams, spec: BermudanSpec,
                       key: StreamKey | tuple, draw_base: int = 0,
                       backend=None) -> float:
    """Monte Carlo continuation value of holding at the probe state.

    Paths start at date ``job.date_index`` with the probed asset at x,
    step over the later exercise dates, stop at the first date where the
    later boundary fires, and discount the payoff back to the probe
    date. The estimate is noisy by construction; callers own averaging.
    """
    s, _ = _continuation_sums(x, job, later, params, spec, key, draw_base, backend)
    return s / job.n_inner


def _continuation_sums(x, job, later, params, spec, key, draw_base, backend=None):
    kern = backend or get_backend()
    mp = pack_market(params, spec)
    rp = later.pack()
    key64, stream64 = key.words() if isinstance(key, StreamKey) else key
    start = _start_values(job, x, spec.strike, params.d)
    return kern.stopped_sums(mp, rp, start, job.date_index, job.n_inner,
                             key64, stream64, draw_base)


def solve_boundary_point(job: BoundaryPointJob, later: IzBoundary,
                         params: MarketParams, spec: BermudanSpec,
                         key: StreamKey | tuple, backend=None,
                         avg_window: int = 5) -> PointResult:
    """Fixed-point search for the optimal exercise level at one probe.

    Iterates x <- K + C(x) (call form; K - C(x) for puts) from x0 = K
    with a fresh continuation estimate per iteration, stopping when the
    step drops below ``job.epsilon`` -- but only after the iterate path
    has first overshot its target, which screens out spurious stops
    while the iterate is still in transit. Hitting ``max_iter`` returns
    the current averaged level flagged unconverged.

    The iteration itself runs inside the kernel backend (one call per
    probe), so worker threads stay off the GIL for the whole solve.
    """
    kern = backend or get_backend()
    mp = pack_market(params, spec)
    rp = later.pack()
    key64, stream64 = key.words() if isinstance(key, StreamKey) else key
    level, iterations, converged = kern.iz_solve(
        mp, rp, job.seed_point, job.asset_index, job.date_index, job.n_inner,
        job.epsilon, job.max_iter, avg_window, key64, stream64)
    return PointResult(level=float(level), iterations=int(iterations),
                       converged=bool(converged))


def regress_boundary(grid: SeedGrid, levels: np.ndarray) -> np.ndarray:
    """Least-squares quadratic surface through the solved levels.

    Falls back to the cross-term-free basis when the full design is
    rank-deficient (coefficients of dropped columns are zero so the
    layout is unchanged). For d = 1 the basis is the constant and the
    fit is the mean level.
    """
    levels = np.asarray(levels, dtype=np.float64)
    design = quad_basis(grid.points)
    n, nb = design.shape
    if n < nb:
        raise ConfigError(f"need at least {nb} probe points for the quadratic fit, got {n}")
    coeffs, _, rank, _ = np.linalg.lstsq(design, levels, rcond=None)
    if rank < nb:
        k = grid.dim
        # keep [1, z_a, z_a^2], zero the cross terms
        keep = [0] + list(range(1, k + 1))
        pos = 1 + k
        for a in range(k):
            keep.append(pos)  # z_a^2 column
            pos += k - a
        warnings.warn("rank-deficient boundary design; dropping cross terms")
        sub, _, _, _ = np.linalg.lstsq(design[:, keep], levels, rcond=None)
        coeffs = np.zeros(nb)
        coeffs[keep] = sub
    return coeffs


def _calc_task(backend_name: str, mp, later_pack, seeds: np.ndarray,
               j_points: int, m: int, n_inner: int, epsilon: float,
               max_iter: int, seed: int, task_id: int, start: int,
               end: int) -> list[PointResult]:
    """Solve probes [start, end) of date m (item id = asset * J + probe)."""
    kern = get_backend(backend_name)
    out = []
    for item in range(start, end):
        asset, j = divmod(item, j_points)
        key64, stream64 = StreamKey(seed, Phase.IZ_CALC, item, m).words()
        lvl, its, conv = kern.iz_solve(mp, later_pack, seeds[j], asset, m,
                                       n_inner, epsilon, max_iter, 5,
                                       key64, stream64)
        out.append(PointResult(float(lvl), int(its), bool(conv)))
    return out


def build_iz_boundary(params: MarketParams, spec: BermudanSpec, j_points: int,
                      n_inner: int, epsilon: float = 0.01, max_iter: int = 100,
                      seed: int = 0, engine: Engine | None = None,
                      lo_mult: float = 0.5, hi_mult: float = 2.5,
                      backend=None) -> tuple[IzBoundary, IzBuildReport]:
    """Build the full boundary by backward induction over exercise dates.

    Probe solves are dispatched to the engine in parallel (one stream
    per probe, keyed by date and probe id); the per-date regression runs
    serially on the coordinator. Unconverged probes are kept and
    counted, not resampled.
    """
    spec.validate_against(params)
    if params.d > 1 and not spec.payoff_kind.call_like:
        raise ConfigError("put boundaries are only supported for d=1")
    engine = engine or Engine()
    kern = backend or get_backend()
    report = IzBuildReport()

    t0 = time.perf_counter()
    dim = max(params.d - 1, 1)
    grid = generate_glp(j_points, dim, default_box(spec.strike, dim, lo_mult, hi_mult))
    report.glp_seconds = time.perf_counter() - t0

    box = grid.box if params.d > 1 else grid.box[:0]
    boundary = IzBoundary.terminal_only(spec, params.d, box)
    d = params.d
    seeds = grid.points if d > 1 else np.empty((j_points, 0))
    # d=1 has no free coordinates: the fit degenerates to the mean level
    reg_grid = grid if d > 1 else SeedGrid(points=seeds, box=box)
    mp = pack_market(params, spec)

    for m in range(spec.n_dates - 1, 0, -1):
        later_pack = boundary.pack()  # immutable: only dates > m are consulted
        task = partial(_calc_task, kern.name, mp, later_pack, seeds, j_points,
                       m, n_inner, epsilon, max_iter, seed)
        t0 = time.perf_counter()
        reports = engine.run_ranges(d * j_points, task, phase="calc")
        calc_s = time.perf_counter() - t0
        results = [r for rep in reports for r in rep.payload]

        t0 = time.perf_counter()
        coeffs = boundary.coeffs.copy()
        for i in range(d):
            levels = np.array([results[i * j_points + j].level for j in range(j_points)])
            coeffs[m, i] = regress_boundary(reg_grid, levels)
        reg_s = time.perf_counter() - t0
        boundary = IzBoundary(spec.strike, d, spec.n_dates,
                              spec.payoff_kind.call_like, coeffs, box)

        n_unconv = sum(not r.converged for r in results)
        report.calc_seconds += calc_s
        report.reg_seconds += reg_s
        report.unconverged_points += n_unconv
        report.iteration_counts.extend(r.iterations for r in results)
        report.per_date.append({
            "date_index": m,
            "calc_seconds": calc_s,
            "reg_seconds": reg_s,
            "unconverged": n_unconv,
            "iterations": [r.iterations for r in results],
        })

    report.per_date.reverse()
    return boundary, report
