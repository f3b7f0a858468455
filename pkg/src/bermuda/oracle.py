"""Independent single-asset reference prices: CRR lattice and Black-Scholes.

These are validation oracles for the Monte Carlo engine. The lattice
supports European, Bermudan (exercise at a subset of step indices) and
American exercise, and records the exercise threshold it implies at each
permitted date, interpolated between the two lattice nodes where
intrinsic value first overtakes continuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import BermudanSpec, ConfigError, MarketParams, PayoffKind

__all__ = ["TreeSpec", "CrrResult", "crr_price", "bs_european",
           "extract_exercise_threshold"]


@dataclass(frozen=True)
class TreeSpec:
    """Lattice resolution plus the step indices where exercise is allowed."""

    steps: int
    exercise_steps: tuple[int, ...] = ()

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"need at least one step, got {self.steps}")
        ex = tuple(sorted(set(self.exercise_steps)))
        if ex and (ex[0] < 1 or ex[-1] > self.steps):
            raise ConfigError(f"exercise steps must lie in 1..{self.steps}")
        object.__setattr__(self, "exercise_steps", ex)

    @classmethod
    def european(cls, steps: int) -> "TreeSpec":
        return cls(steps, ())

    @classmethod
    def american(cls, steps: int) -> "TreeSpec":
        return cls(steps, tuple(range(1, steps + 1)))

    @classmethod
    def bermudan(cls, steps: int, n_dates: int) -> "TreeSpec":
        """Exercise at the n_dates equally spaced dates; steps must divide evenly."""
        if steps % n_dates != 0:
            raise ConfigError(f"steps={steps} not a multiple of n_dates={n_dates}")
        stride = steps // n_dates
        return cls(steps, tuple(stride * m for m in range(1, n_dates + 1)))


@dataclass(frozen=True)
class CrrResult:
    price: float
    tree: TreeSpec
    # exercise threshold per permitted step; None where exercise is never optimal
    thresholds: dict[int, float | None]


def _intrinsic(kind: PayoffKind, s: np.ndarray, strike: float) -> np.ndarray:
    if kind is PayoffKind.PUT_1D:
        return np.maximum(strike - s, 0.0)
    return np.maximum(s - strike, 0.0)


def _threshold_from_nodes(kind: PayoffKind, s: np.ndarray, intrinsic: np.ndarray,
                          cont: np.ndarray) -> float | None:
    """Price level where exercise first becomes optimal, or None.

    Nodes are in ascending price order. For call-like payoffs the
    exercise region is the upper tail, for puts the lower tail; the
    crossing is linearly interpolated on (intrinsic - continuation).
    """
    gain = intrinsic - cont
    optimal = (gain >= 0.0) & (intrinsic > 0.0)
    if not optimal.any():
        return None
    if kind is PayoffKind.PUT_1D:
        idx = int(np.nonzero(optimal)[0][-1])  # highest exercising node
        if idx + 1 >= s.size or not np.isfinite(gain[idx + 1]):
            return float(s[idx])
        g0, g1 = gain[idx], gain[idx + 1]
        if g1 < g0:  # crossing between idx (>=0) and idx+1 (<0)
            return float(s[idx] + (s[idx + 1] - s[idx]) * g0 / (g0 - g1))
        return float(s[idx])
    idx = int(np.nonzero(optimal)[0][0])  # lowest exercising node
    if idx == 0:
        return float(s[0])
    g0, g1 = gain[idx - 1], gain[idx]  # g0 < 0 <= g1
    if g1 > g0:
        return float(s[idx - 1] + (s[idx] - s[idx - 1]) * (0.0 - g0) / (g1 - g0))
    return float(s[idx])


def crr_price(params: MarketParams, spec: BermudanSpec, tree: TreeSpec) -> CrrResult:
    """Cox-Ross-Rubinstein backward induction (d = 1 only).

    Uses u = exp(sigma sqrt(dt)), d = 1/u and the risk-neutral
    probability under drift r - delta. Steps too coarse for the
    volatility (probability outside (0, 1)) are rejected.
    """
    if params.d != 1:
        raise ConfigError(f"lattice oracle requires d=1, got d={params.d}")
    spec.validate_against(params)
    n = tree.steps
    dt = spec.maturity / n
    sigma = float(params.sigma[0])
    delta = float(params.delta[0])
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    growth = math.exp((params.r - delta) * dt)
    p = (growth - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ConfigError(
            f"risk-neutral probability {p:.4f} outside (0,1); "
            "increase steps or reduce the step size"
        )
    disc = math.exp(-params.r * dt)
    s0 = float(params.s0[0])
    kind = spec.payoff_kind
    exercise = set(tree.exercise_steps)

    # node prices at step i: s0 * u^(2j - i), j = 0..i (ascending)
    j = np.arange(n + 1)
    s_nodes = s0 * u ** (2.0 * j - n)
    values = _intrinsic(kind, s_nodes, spec.strike)
    thresholds: dict[int, float | None] = {}
    if n in exercise:
        # at maturity the threshold is the strike for any payoff
        thresholds[n] = spec.strike

    for i in range(n - 1, -1, -1):
        values = disc * (p * values[1:i + 2] + (1.0 - p) * values[:i + 1])
        if i in exercise:
            s_nodes = s0 * u ** (2.0 * np.arange(i + 1) - i)
            intrinsic = _intrinsic(kind, s_nodes, spec.strike)
            thresholds[i] = _threshold_from_nodes(kind, s_nodes, intrinsic, values)
            values = np.maximum(values, intrinsic)

    return CrrResult(price=float(values[0]), tree=tree, thresholds=thresholds)


def extract_exercise_threshold(result: CrrResult, step: int) -> float | None:
    """Exercise threshold at a permitted step; None if never optimal there."""
    if step not in result.thresholds:
        raise ValueError(f"step {step} is not an exercise step of the tree")
    return result.thresholds[step]


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bs_european(s0: float, strike: float, r: float, delta: float, sigma: float,
                maturity: float, kind: PayoffKind = PayoffKind.CALL_1D) -> float:
    """Closed-form European price with a continuous dividend yield."""
    if kind is PayoffKind.MAX_CALL:
        kind = PayoffKind.CALL_1D
    if maturity <= 0.0:
        intrinsic = s0 - strike if kind is PayoffKind.CALL_1D else strike - s0
        return max(intrinsic, 0.0)
    if strike <= 0.0:
        if kind is PayoffKind.PUT_1D:
            return 0.0
        return s0 * math.exp(-delta * maturity) - strike * math.exp(-r * maturity)
    sd = sigma * math.sqrt(maturity)
    d1 = (math.log(s0 / strike) + (r - delta + 0.5 * sigma ** 2) * maturity) / sd
    d2 = d1 - sd
    df_s = s0 * math.exp(-delta * maturity)
    df_k = strike * math.exp(-r * maturity)
    if kind is PayoffKind.CALL_1D:
        return df_s * _norm_cdf(d1) - df_k * _norm_cdf(d2)
    return df_k * _norm_cdf(-d2) - df_s * _norm_cdf(-d1)
