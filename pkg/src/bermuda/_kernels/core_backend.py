"""Adapter presenting the compiled kernels under the backend interface."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import _core
from .packs import MarketPack, RulePack

name = "cython"


def raw_uint64(key64, stream64, start: int, count: int) -> np.ndarray:
    return _core.raw_uint64_fill(key64, stream64, start, count)


def normals(key64, stream64, start: int, count: int) -> np.ndarray:
    return _core.normals_fill(key64, stream64, start, count)


@lru_cache(maxsize=128)
def _ctx(mp: MarketPack, rp: RulePack):
    # packs hash by identity; builders create one per phase, so this
    # amortizes the memoryview setup across every kernel call
    return _core.make_ctx(
        mp.d, mp.n_dates, mp.strike, mp.payoff_kind,
        mp.step_mu, mp.step_vol, mp.chol, mp.disc_steps,
        rp.kind, rp.call_like, rp.imm_date,
        rp.iz_coeffs, rp.iz_lo, rp.iz_hi,
        rp.cmc_starts, rp.cmc_counts, rp.cmc_feat, rp.cmc_thr, rp.cmc_pol,
        rp.cmc_alpha, rp.cmc_intercept)


def stopped_sums(mp: MarketPack, rp: RulePack, start_values: np.ndarray,
                 m_start: int, n_paths: int, key64, stream64,
                 draw_base: int = 0) -> tuple[float, float]:
    return _core.stopped_sums_impl(
        _ctx(mp, rp), np.ascontiguousarray(start_values, dtype=np.float64),
        m_start, n_paths, key64, stream64, draw_base)


def iz_solve(mp: MarketPack, rp: RulePack, seed_point: np.ndarray,
             asset_index: int, m: int, n_inner: int, epsilon: float,
             max_iter: int, avg_window: int, key64, stream64):
    return _core.iz_solve_impl(
        _ctx(mp, rp), np.ascontiguousarray(seed_point, dtype=np.float64),
        asset_index, m, n_inner, epsilon, max_iter, avg_window, key64, stream64)


def cmc_labels(mp: MarketPack, rp: RulePack, points: np.ndarray, m: int,
               n_label: int, keys: np.ndarray, streams: np.ndarray,
               draw_base: int) -> np.ndarray:
    return _core.cmc_labels_impl(
        _ctx(mp, rp), np.ascontiguousarray(points, dtype=np.float64), m,
        n_label, np.ascontiguousarray(keys, dtype=np.uint64),
        np.ascontiguousarray(streams, dtype=np.uint64), draw_base)
