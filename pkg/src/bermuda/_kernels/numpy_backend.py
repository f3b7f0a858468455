"""Pure-NumPy simulation kernels (fallback when the extension is absent).

Vectorizes over paths inside one call; the compiled kernel walks paths
scalar-by-scalar instead. Both read the same packs and the same draw
indexing -- normal draw ``(path p, step k, asset a)`` of a call sits at
stream offset ``draw_base + (p * n_steps + k) * d + a`` -- so results
agree across backends up to last-ulp transcendental differences, and are
bit-identical across worker counts within either backend.
"""

from __future__ import annotations

import numpy as np

from .. import rng
from .packs import (MarketPack, RulePack, quad_basis, PAYOFF_MAXCALL, PAYOFF_PUT,
                    RULE_CMC, RULE_EUROPEAN, RULE_IMMEDIATE, RULE_IZ)

name = "numpy"

raw_uint64 = rng.raw_uint64
normals = rng.normals


def _payoff(mp: MarketPack, values: np.ndarray) -> np.ndarray:
    if mp.payoff_kind == PAYOFF_MAXCALL:
        return np.maximum(values.max(axis=1) - mp.strike, 0.0)
    if mp.payoff_kind == PAYOFF_PUT:
        return np.maximum(mp.strike - values[:, 0], 0.0)
    return np.maximum(values[:, 0] - mp.strike, 0.0)


def _iz_stop(mp: MarketPack, rp: RulePack, m: int, values: np.ndarray) -> np.ndarray:
    n, d = values.shape
    out = np.zeros(n, dtype=bool)
    if d == 1:
        b = rp.iz_coeffs[m, 0, 0]
        if rp.call_like:
            return values[:, 0] >= max(b, mp.strike)
        return values[:, 0] <= min(b, mp.strike)
    istar = np.argmax(values, axis=1)  # ties go to the lowest index
    for i in range(d):
        rows = istar == i
        if not rows.any():
            continue
        others = [j for j in range(d) if j != i]
        z = np.clip(values[rows][:, others], rp.iz_lo, rp.iz_hi)
        b = quad_basis(z) @ rp.iz_coeffs[m, i]
        np.maximum(b, mp.strike, out=b)  # call boundary never below strike
        out[rows] = values[rows, i] >= b
    return out


def _cmc_stop(rp: RulePack, m: int, values: np.ndarray) -> np.ndarray:
    d = values.shape[1]
    s = np.full(values.shape[0], rp.cmc_intercept[m])
    lo = int(rp.cmc_starts[m])
    for k in range(lo, lo + int(rp.cmc_counts[m])):
        # feature index d is the derived max-price feature
        f = int(rp.cmc_feat[k])
        col = values[:, f] if f < d else values.max(axis=1)
        vote = np.where(col > rp.cmc_thr[k], rp.cmc_pol[k], -rp.cmc_pol[k])
        s += rp.cmc_alpha[k] * vote
    return s > 0.0


def _stop_mask(mp: MarketPack, rp: RulePack, m: int, values: np.ndarray,
               pay: np.ndarray) -> np.ndarray:
    """Exercise decision at date m; payoff positivity is always required."""
    if rp.kind == RULE_EUROPEAN:
        ok = m == mp.n_dates
    elif rp.kind == RULE_IMMEDIATE:
        ok = m == rp.imm_date
    elif m == mp.n_dates:
        ok = True
    elif rp.kind == RULE_IZ:
        ok = _iz_stop(mp, rp, m, values)
    elif rp.kind == RULE_CMC:
        ok = _cmc_stop(rp, m, values)
    else:
        raise ValueError(f"unknown rule kind {rp.kind}")
    return (pay > 0.0) & ok


def stopped_sums(mp: MarketPack, rp: RulePack, start_values: np.ndarray,
                 m_start: int, n_paths: int, key64, stream64,
                 draw_base: int = 0) -> tuple[float, float]:
    """Sum and sum-of-squares of discounted stopped payoffs.

    Simulates ``n_paths`` forward from ``start_values`` at date
    ``m_start`` over the remaining exercise dates, stopping each path at
    the first date where the rule fires; a path that never exercises
    contributes zero. Values are discounted to the start date.
    """
    d = mp.d
    n_steps = mp.n_dates - m_start
    if n_steps <= 0:
        raise ValueError(f"start date {m_start} has no remaining exercise dates")
    z = normals(key64, stream64, draw_base, n_paths * n_steps * d)
    z = z.reshape(n_paths, n_steps, d)
    values = np.broadcast_to(start_values, (n_paths, d)).copy()
    alive = np.ones(n_paths, dtype=bool)
    acc = np.zeros(n_paths)
    for k in range(n_steps):
        m = m_start + k + 1
        y = z[:, k, :] @ mp.chol.T
        values *= np.exp(mp.step_mu + mp.step_vol * y)
        pay = _payoff(mp, values)
        stop = alive & _stop_mask(mp, rp, m, values, pay)
        if stop.any():
            acc[stop] = pay[stop] * mp.disc_steps[m - m_start]
            alive &= ~stop
        if not alive.any():
            break
    return float(acc.sum()), float((acc * acc).sum())


def probe_start_values(seed_point: np.ndarray, asset_index: int, x: float,
                       strike: float, d: int) -> np.ndarray:
    """Probe state: asset at level x, other assets at the clipped seeds.

    Seed coordinates exceeding x are pulled to x - 0.01 * strike so the
    probed asset attains the payoff maximum and the intrinsic value at
    the probe is x - strike.
    """
    values = np.empty(d)
    others = np.where(seed_point > x, x - 0.01 * strike, seed_point)
    values[:asset_index] = others[:asset_index]
    values[asset_index] = x
    values[asset_index + 1:] = others[asset_index:]
    return values


def iz_solve(mp: MarketPack, rp: RulePack, seed_point: np.ndarray,
             asset_index: int, m: int, n_inner: int, epsilon: float,
             max_iter: int, avg_window: int, key64, stream64):
    """Fixed-point boundary solve for one probe (reference implementation).

    Iterates x <- K +/- C(x) from x0 = K with a fresh draw slab per
    iteration. The |step| < epsilon stop test arms only once the iterate
    path has stepped against the transit direction (first overshoot),
    which screens out spurious stops while the iterate is still in
    transit. Returns (level, iterations, converged) with the level
    averaging the last ``avg_window`` iterates.
    """
    d = mp.d
    seed_point = np.asarray(seed_point, dtype=np.float64)
    slab = n_inner * (mp.n_dates - m) * d
    strike = mp.strike
    call_like = bool(rp.call_like)

    x = strike
    history = [x]
    armed = False
    converged = False
    iterations = 0
    for k in range(max_iter):
        start = probe_start_values(seed_point, asset_index, x, strike, d)
        s, _ = stopped_sums(mp, rp, start, m, n_inner, key64, stream64, k * slab)
        cont = s / n_inner
        x_new = strike + cont if call_like else strike - cont
        step = x_new - x
        iterations = k + 1
        if not armed and (step <= 0.0 if call_like else step >= 0.0):
            armed = True
        x = x_new
        history.append(x)
        if armed and abs(step) < epsilon:
            converged = True
            break
    level = float(np.mean(history[-min(avg_window, len(history)):]))
    return level, iterations, converged


def cmc_labels(mp: MarketPack, rp: RulePack, points: np.ndarray, m: int,
               n_label: int, keys: np.ndarray, streams: np.ndarray,
               draw_base: int) -> np.ndarray:
    """Labels beta = intrinsic - continuation for a block of points.

    Point i continues under its own stream (keys[i], streams[i]) from
    offset ``draw_base`` (earlier draws belong to the point sampler).
    """
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(points.shape[0])
    intrinsic = _payoff(mp, points)
    for i in range(points.shape[0]):
        s, _ = stopped_sums(mp, rp, points[i], m, n_label, keys[i], streams[i],
                            draw_base)
        out[i] = intrinsic[i] - s / n_label
    return out
