"""Forward Monte Carlo pricing under a fixed exercise rule.

Paths are simulated in fixed-size blocks of 4096; each block owns one
random stream keyed by its block index and reduces to (count, sum, sum
of squares). The coordinator folds block statistics in block order, so
the estimate is bit-identical for any worker count or task split, and
pooling over partial batches is exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._kernels import get_backend
from ._kernels.packs import RulePack, pack_market
from .engine import Engine
from .market import BermudanSpec, MarketParams, PathState, payoff_values
from .rng import Phase, StreamKey

__all__ = [
    "PATH_BLOCK", "EuropeanRule", "ImmediateAtDate", "IzRule", "CmcScoreRule",
    "PriceEstimate", "iz_exercise_rule", "cmc_exercise_rule", "price",
    "pool_moments",
]

# Paths per stream block. Part of the stream-assignment convention:
# changing it changes the draws, like changing the seed would.
PATH_BLOCK = 4096


@dataclass(frozen=True)
class EuropeanRule:
    """Exercise at maturity only."""

    kind = "european"

    def pack(self, spec: BermudanSpec) -> RulePack:
        return RulePack.european(spec.payoff_kind.call_like)


@dataclass(frozen=True)
class ImmediateAtDate:
    """Exercise at one fixed date (if the payoff is positive)."""

    date_index: int
    kind = "immediate"

    def pack(self, spec: BermudanSpec) -> RulePack:
        if not 1 <= self.date_index <= spec.n_dates:
            raise ValueError(f"date index {self.date_index} outside 1..{spec.n_dates}")
        return RulePack.immediate(self.date_index, spec.payoff_kind.call_like)


@dataclass(frozen=True)
class IzRule:
    """Exercise when the argmax asset crosses its regressed boundary surface."""

    boundary: "IzBoundary"  # noqa: F821 - see boundary_iz
    kind = "iz"

    def pack(self, spec: BermudanSpec) -> RulePack:
        return self.boundary.pack()


@dataclass(frozen=True)
class CmcScoreRule:
    """Exercise when the date's boosted classifier scores positive."""

    rule: "CmcRule"  # noqa: F821 - see boundary_cmc
    kind = "cmc"

    def pack(self, spec: BermudanSpec) -> RulePack:
        return self.rule.pack()


@dataclass(frozen=True)
class PriceEstimate:
    """Pooled Monte Carlo estimate with sampling error and phase timings."""

    price: float
    variance: float
    ci95: float
    n_paths: int
    timings: dict = field(default_factory=dict)
    rule_kind: str = ""
    unconverged_points: int = 0

    def to_json_dict(self) -> dict:
        return {
            "price": self.price,
            "variance": self.variance,
            "ci95": self.ci95,
            "n_paths": self.n_paths,
            "timings": dict(self.timings),
            "rule_kind": self.rule_kind,
            "unconverged_points": self.unconverged_points,
        }


def iz_exercise_rule(boundary: "IzBoundary", spec: BermudanSpec,  # noqa: F821
                     state: PathState) -> bool:
    """Reference (non-kernel) boundary exercise decision for one state.

    True iff the payoff is positive and the argmax asset sits at or
    above its boundary surface evaluated at the other coordinates; the
    final date exercises on payoff alone. Ties in the argmax go to the
    lowest asset index.
    """
    pay = float(payoff_values(spec, state.values))
    if pay <= 0.0:
        return False
    m = state.date_index
    if m == spec.n_dates:
        return True
    return bool(boundary.crossed(m, state.values))


def cmc_exercise_rule(rule: "CmcRule", spec: BermudanSpec,  # noqa: F821
                      state: PathState) -> bool:
    """Reference stump-score exercise decision for one state."""
    pay = float(payoff_values(spec, state.values))
    if pay <= 0.0:
        return False
    m = state.date_index
    if m == spec.n_dates:
        return True
    if m not in rule.ensembles:
        return False
    return rule.score(m, state.values) > 0.0


def pool_moments(counts, sums, sumsqs) -> tuple[float, float, int]:
    """Fold per-batch (count, sum, sumsq) into (mean, sample variance, n).

    Exact pooling: the pooled moments equal the single-batch moments of
    the concatenated samples up to float roundoff, independent of how
    the batches were cut.
    """
    n = int(np.sum(counts))
    s = 0.0
    ss = 0.0
    for c, si, qi in zip(counts, sums, sumsqs):
        s += float(si)
        ss += float(qi)
    mean = s / n
    var = (ss - s * s / n) / (n - 1) if n > 1 else 0.0
    return mean, max(var, 0.0), n


def _price_task(backend_name: str, mp, rp, n_paths: int, seed: int,
                task_id: int, start: int, end: int) -> np.ndarray:
    """Per-block (count, sum, sumsq) for path blocks [start, end)."""
    kern = get_backend(backend_name)
    stats = np.empty((end - start, 3))
    for row, block in enumerate(range(start, end)):
        count = min(PATH_BLOCK, n_paths - block * PATH_BLOCK)
        key64, stream64 = StreamKey(seed, Phase.PRICING, block).words()
        s, ss = kern.stopped_sums(mp, rp, mp.s0, 0, count, key64, stream64, 0)
        stats[row] = (count, s, ss)
    return stats


def price(params: MarketParams, spec: BermudanSpec, rule, n_paths: int,
          seed: int, engine: Engine | None = None, backend=None,
          build_timings: dict | None = None, unconverged_points: int = 0) -> PriceEstimate:
    """Monte Carlo price of the option under ``rule``.

    Deterministic in (seed, n_paths): the worker pool and task split of
    ``engine`` only shape the schedule. Paths that never exercise
    contribute zero.
    """
    if n_paths < 1:
        raise ValueError(f"need at least one path, got {n_paths}")
    spec.validate_against(params)
    engine = engine or Engine()
    kern = backend or get_backend()
    mp = pack_market(params, spec)
    rp = rule.pack(spec)
    n_blocks = (n_paths + PATH_BLOCK - 1) // PATH_BLOCK

    task = partial(_price_task, kern.name, mp, rp, n_paths, seed)
    t0 = time.perf_counter()
    reports = engine.run_ranges(n_blocks, task, phase="mc")
    pricing_seconds = time.perf_counter() - t0

    stats = np.vstack([r.payload for r in reports])  # block order == task order
    mean, var, n = pool_moments(stats[:, 0], stats[:, 1], stats[:, 2])
    timings = dict(build_timings or {})
    timings["pricing"] = pricing_seconds
    return PriceEstimate(
        price=mean,
        variance=var,
        ci95=1.96 * np.sqrt(var / n),
        n_paths=n,
        timings=timings,
        rule_kind=getattr(rule, "kind", type(rule).__name__),
        unconverged_points=unconverged_points,
    )
