"""Flat array views of market, contract and exercise-rule data.

Both kernel backends (compiled and NumPy) consume these packs, so the
packing step is the single place where evaluation conventions live:

* per-step log drift/vol and the discount table are precomputed here,
  so both backends index identical floating-point values;
* quadratic surfaces use the basis [1, z_a, z_a*z_b (a <= b)] in
  row-major upper-triangle order over the non-boundary coordinates,
  evaluated after clamping z into the probe box;
* call-like boundary surfaces are floored at the strike (exercising a
  call below the strike is never optimal), put boundaries are capped
  at it; stump scores use "vote polarity if x[feature] > threshold".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..market import BermudanSpec, MarketParams, PayoffKind

__all__ = ["MarketPack", "RulePack", "pack_market", "quad_basis", "n_quad_basis",
           "RULE_EUROPEAN", "RULE_IMMEDIATE", "RULE_IZ", "RULE_CMC",
           "PAYOFF_MAXCALL", "PAYOFF_PUT", "PAYOFF_CALL"]

RULE_EUROPEAN = 0
RULE_IMMEDIATE = 1
RULE_IZ = 2
RULE_CMC = 3

PAYOFF_MAXCALL = 0
PAYOFF_PUT = 1
PAYOFF_CALL = 2

_PAYOFF_CODES = {
    PayoffKind.MAX_CALL: PAYOFF_MAXCALL,
    PayoffKind.PUT_1D: PAYOFF_PUT,
    PayoffKind.CALL_1D: PAYOFF_CALL,
}


@dataclass(frozen=True, eq=False)  # identity hash: packs are cached by object
class MarketPack:
    d: int
    n_dates: int
    strike: float
    payoff_kind: int
    step_mu: np.ndarray     # (d,) log drift per exercise step
    step_vol: np.ndarray    # (d,) sigma * sqrt(dt)
    chol: np.ndarray        # (d, d) correlation factor
    disc_steps: np.ndarray  # (n_dates + 1,) exp(-r k dt)
    s0: np.ndarray          # (d,)


def pack_market(params: MarketParams, spec: BermudanSpec) -> MarketPack:
    spec.validate_against(params)
    dt = spec.dt
    k = np.arange(spec.n_dates + 1, dtype=np.float64)
    return MarketPack(
        d=params.d,
        n_dates=spec.n_dates,
        strike=spec.strike,
        payoff_kind=_PAYOFF_CODES[spec.payoff_kind],
        step_mu=np.ascontiguousarray(params.log_drift * dt),
        step_vol=np.ascontiguousarray(params.sigma * np.sqrt(dt)),
        chol=np.ascontiguousarray(params.corr_factor),
        disc_steps=np.exp(-params.r * dt * k),
        s0=np.ascontiguousarray(params.s0),
    )


def n_quad_basis(n_coords: int) -> int:
    """Size of the full quadratic basis over ``n_coords`` coordinates."""
    return 1 + n_coords + n_coords * (n_coords + 1) // 2


def quad_basis(z: np.ndarray) -> np.ndarray:
    """Design rows [1, z_a, z_a*z_b (a <= b)] for z of shape (n, k).

    k = 0 degenerates to the constant column. The column order here is
    the contract for surface coefficients everywhere in the engine.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    n, k = z.shape
    cols = [np.ones((n, 1))]
    if k:
        cols.append(z)
        cols.extend(z[:, a:a + 1] * z[:, a:] for a in range(k))
    return np.hstack(cols)


_EMPTY_F = np.empty(0, dtype=np.float64)
_EMPTY_I = np.empty(0, dtype=np.int32)


@dataclass(frozen=True, eq=False)  # identity hash: packs are cached by object
class RulePack:
    """Exercise rule flattened for the kernels.

    Unused fields hold empty/zero arrays so both backends can take the
    same argument list for every rule kind.
    """

    kind: int
    call_like: int
    imm_date: int = 0
    # boundary-surface rule: coeffs[m, i] is the surface of asset i at date m
    iz_coeffs: np.ndarray = None
    iz_lo: np.ndarray = None
    iz_hi: np.ndarray = None
    # stump-score rule, flattened over dates
    cmc_starts: np.ndarray = None
    cmc_counts: np.ndarray = None
    cmc_feat: np.ndarray = None
    cmc_thr: np.ndarray = None
    cmc_pol: np.ndarray = None
    cmc_alpha: np.ndarray = None
    cmc_intercept: np.ndarray = None

    @classmethod
    def european(cls, call_like: bool = True) -> "RulePack":
        return cls._filled(RULE_EUROPEAN, call_like)

    @classmethod
    def immediate(cls, date_index: int, call_like: bool = True) -> "RulePack":
        return cls._filled(RULE_IMMEDIATE, call_like, imm_date=date_index)

    @classmethod
    def from_surfaces(cls, coeffs: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                      call_like: bool) -> "RulePack":
        """Boundary rule from per-date, per-asset surface coefficients.

        ``coeffs`` has shape (n_dates + 1, d, n_basis); rows for date 0
        and the final date are ignored (maturity exercises on payoff
        alone). ``lo``/``hi`` clamp surface arguments to the probe box.
        """
        return cls._filled(
            RULE_IZ, call_like,
            iz_coeffs=np.ascontiguousarray(coeffs, dtype=np.float64),
            iz_lo=np.ascontiguousarray(lo, dtype=np.float64),
            iz_hi=np.ascontiguousarray(hi, dtype=np.float64),
        )

    @classmethod
    def from_stumps(cls, n_dates: int, per_date: dict[int, tuple], call_like: bool) -> "RulePack":
        """Stump-score rule.

        ``per_date[m] = (feat, thr, pol, alpha, intercept)`` for dates
        with a fitted ensemble; missing dates never exercise early.
        """
        starts = np.zeros(n_dates + 1, dtype=np.int32)
        counts = np.zeros(n_dates + 1, dtype=np.int32)
        intercept = np.zeros(n_dates + 1, dtype=np.float64)
        # dates without an ensemble score -1 (never exercise)
        intercept[:] = -1.0
        feats, thrs, pols, alphas = [], [], [], []
        pos = 0
        for m in range(1, n_dates + 1):
            if m not in per_date:
                continue
            feat, thr, pol, alpha, icept = per_date[m]
            starts[m] = pos
            counts[m] = len(feat)
            intercept[m] = icept
            feats.append(np.asarray(feat, dtype=np.int32))
            thrs.append(np.asarray(thr, dtype=np.float64))
            pols.append(np.asarray(pol, dtype=np.float64))
            alphas.append(np.asarray(alpha, dtype=np.float64))
            pos += len(feat)
        cat = lambda parts, dt, empty: (np.concatenate(parts).astype(dt) if parts else empty)
        return cls._filled(
            RULE_CMC, call_like,
            cmc_starts=starts, cmc_counts=counts, cmc_intercept=intercept,
            cmc_feat=cat(feats, np.int32, _EMPTY_I),
            cmc_thr=cat(thrs, np.float64, _EMPTY_F),
            cmc_pol=cat(pols, np.float64, _EMPTY_F),
            cmc_alpha=cat(alphas, np.float64, _EMPTY_F),
        )

    @classmethod
    def _filled(cls, kind: int, call_like: bool, **kw) -> "RulePack":
        defaults = dict(
            iz_coeffs=np.zeros((1, 1, 1)), iz_lo=np.zeros(1), iz_hi=np.ones(1),
            cmc_starts=np.zeros(1, dtype=np.int32), cmc_counts=np.zeros(1, dtype=np.int32),
            cmc_feat=_EMPTY_I, cmc_thr=_EMPTY_F, cmc_pol=_EMPTY_F, cmc_alpha=_EMPTY_F,
            cmc_intercept=np.zeros(1, dtype=np.float64),
        )
        defaults.update(kw)
        return cls(kind=kind, call_like=int(call_like), **defaults)
