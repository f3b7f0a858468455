"""Correlated multi-asset GBM dynamics, bridge sampling, payoffs, discounting.

All operations here are pure functions of their inputs; normal draws are
always passed in (see :mod:`bermuda.rng`), so the module is safe to call
from any number of worker threads.

Stepping is exact in distribution: asset prices are advanced with the
closed-form log-normal transition rather than an Euler scheme, so the
only dates that ever need simulating are the exercise dates themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "ConfigError",
    "PayoffKind",
    "MarketParams",
    "BermudanSpec",
    "PathState",
    "gbm_step",
    "gbm_step_values",
    "bridge_sample",
    "bridge_values",
    "payoff",
    "payoff_values",
    "discount",
]


class ConfigError(ValueError):
    """Invalid market or contract configuration."""


class PayoffKind(str, Enum):
    MAX_CALL = "maxcall"
    PUT_1D = "put"
    CALL_1D = "call"

    @property
    def call_like(self) -> bool:
        return self is not PayoffKind.PUT_1D


def _as_vector(x, d: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = np.full(d, float(v))
    if v.shape != (d,):
        raise ConfigError(f"{name} must be a scalar or length-{d} vector, got shape {v.shape}")
    return v


def _correlation_factor(rho: np.ndarray) -> np.ndarray:
    """Square-root factor of a correlation matrix.

    Cholesky when positive definite; an eigenvalue square root for the
    semidefinite boundary (e.g. perfectly correlated assets). Rejects
    anything with an eigenvalue below -1e-10.
    """
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(rho)
    if w.min() < -1e-10:
        raise ConfigError(
            f"correlation matrix is not positive semidefinite (min eigenvalue {w.min():.3e})"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(eq=False)
class MarketParams:
    """Market under the risk-neutral measure.

    Parameters
    ----------
    d : int
        Number of assets.
    s0 : float or array
        Spot prices (scalar broadcasts to all assets).
    r : float
        Risk-free rate, per year.
    sigma : float or array
        Volatilities, per sqrt(year).
    delta : float or array
        Continuous dividend yields, per year.
    rho : float, array or None
        Correlation: None/0.0 for independent assets, a scalar for a
        common off-diagonal value, or a full d x d matrix. Must admit a
        square-root factorization (checked here, not at simulation time).
    """

    d: int
    s0: np.ndarray
    r: float
    sigma: np.ndarray
    delta: np.ndarray
    rho: np.ndarray
    corr_factor: np.ndarray = field(init=False, repr=False)

    def __init__(self, d: int, s0, r: float, sigma, delta=0.0, rho=None):
        if d < 1:
            raise ConfigError(f"need at least one asset, got d={d}")
        self.d = int(d)
        self.s0 = _as_vector(s0, d, "s0")
        self.r = float(r)
        self.sigma = _as_vector(sigma, d, "sigma")
        self.delta = _as_vector(delta, d, "delta")
        if np.any(self.s0 <= 0.0):
            raise ConfigError("spot prices must be positive")
        if np.any(self.sigma <= 0.0):
            raise ConfigError("volatilities must be positive")
        if rho is None:
            rho = np.eye(d)
        elif np.isscalar(rho):
            rho = np.full((d, d), float(rho)) + (1.0 - float(rho)) * np.eye(d)
        rho = np.asarray(rho, dtype=np.float64)
        if rho.shape != (d, d):
            raise ConfigError(f"rho must be {d}x{d}, got {rho.shape}")
        if not np.allclose(rho, rho.T, atol=1e-12):
            raise ConfigError("rho must be symmetric")
        if not np.allclose(np.diag(rho), 1.0, atol=1e-12):
            raise ConfigError("rho must have a unit diagonal")
        self.rho = rho
        self.corr_factor = _correlation_factor(rho)

    @property
    def log_drift(self) -> np.ndarray:
        """Per-asset drift of log prices: r - delta - sigma^2 / 2."""
        return self.r - self.delta - 0.5 * self.sigma ** 2


@dataclass(frozen=True)
class BermudanSpec:
    """Bermudan contract: strike, maturity, equally spaced exercise dates."""

    strike: float
    maturity: float
    n_dates: int
    payoff_kind: PayoffKind = PayoffKind.MAX_CALL

    def __post_init__(self):
        if self.strike <= 0.0:
            raise ConfigError("strike must be positive")
        if self.maturity <= 0.0:
            raise ConfigError("maturity must be positive")
        if self.n_dates < 1:
            raise ConfigError("need at least one exercise date")

    @property
    def dt(self) -> float:
        return self.maturity / self.n_dates

    @property
    def date_times(self) -> np.ndarray:
        """Exercise times t_m = m * T / n_dates for m = 1 .. n_dates."""
        m = np.arange(1, self.n_dates + 1, dtype=np.float64)
        return m * self.maturity / self.n_dates

    def validate_against(self, params: MarketParams) -> None:
        if self.payoff_kind in (PayoffKind.PUT_1D, PayoffKind.CALL_1D) and params.d != 1:
            raise ConfigError(f"{self.payoff_kind.value} payoff requires d=1, got d={params.d}")


@dataclass
class PathState:
    """Asset prices at one exercise date (``date_index`` 0 is t=0)."""

    values: np.ndarray
    date_index: int


def gbm_step_values(params: MarketParams, values: np.ndarray, dt: float,
                    normals: np.ndarray) -> np.ndarray:
    """Advance prices by ``dt`` years with the exact log-normal transition.

    ``values`` and ``normals`` have shape (d,) or (n, d); the draws are
    independent standard normals, correlated here through the stored
    square-root factor of rho.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    z = normals @ params.corr_factor.T
    growth = params.log_drift * dt + params.sigma * math.sqrt(dt) * z
    return values * np.exp(growth)


def gbm_step(params: MarketParams, state: PathState, dt: float,
             normals: np.ndarray) -> PathState:
    """One exact GBM step starting from ``state`` (date index advances by 1)."""
    return PathState(gbm_step_values(params, state.values, dt, normals),
                     state.date_index + 1)


def bridge_values(params: MarketParams, start_values: np.ndarray,
                  end_values: np.ndarray, t_a: float, t_b: float, t: float,
                  normals: np.ndarray) -> np.ndarray:
    """Sample prices at ``t`` conditional on the values at ``t_a`` and ``t_b``.

    Per independent Brownian factor the conditional law is the standard
    bridge: in log space the mean is the linear interpolation of the two
    endpoints (the risk-neutral drift cancels exactly) and the variance
    is sigma^2 (t - t_a)(t_b - t)/(t_b - t_a). Correlation flows through
    the same square-root factor as forward stepping.
    """
    if not (t_a < t < t_b):
        raise ValueError(f"need t_a < t < t_b, got {t_a} < {t} < {t_b}")
    lam = (t - t_a) / (t_b - t_a)
    sd = math.sqrt((t - t_a) * (t_b - t) / (t_b - t_a))
    z = normals @ params.corr_factor.T
    log_mid = ((1.0 - lam) * np.log(start_values) + lam * np.log(end_values)
               + params.sigma * sd * z)
    return np.exp(log_mid)


def bridge_sample(params: MarketParams, start: PathState, end: PathState,
                  t_a: float, t_b: float, t: float, normals: np.ndarray,
                  date_index: int = -1) -> PathState:
    """Bridge draw between two path states at explicit times."""
    vals = bridge_values(params, start.values, end.values, t_a, t_b, t, normals)
    return PathState(vals, date_index)


def payoff_values(spec: BermudanSpec, values: np.ndarray) -> np.ndarray:
    """Exercise value of ``values`` with shape (d,) or (n, d)."""
    v = np.asarray(values, dtype=np.float64)
    if spec.payoff_kind is PayoffKind.MAX_CALL:
        best = v.max(axis=-1)
        return np.maximum(best - spec.strike, 0.0)
    s = v[..., 0]
    if spec.payoff_kind is PayoffKind.PUT_1D:
        return np.maximum(spec.strike - s, 0.0)
    return np.maximum(s - spec.strike, 0.0)


def payoff(spec: BermudanSpec, state: PathState) -> float:
    """Exercise value of a single path state."""
    return float(payoff_values(spec, state.values))


def discount(r: float, t: float) -> float:
    """Discount factor exp(-r t)."""
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return math.exp(-r * t)
