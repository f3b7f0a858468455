"""Exercise-region characterization by boosted classification.

Walking backward over exercise dates, each date gets a training set of
asset-price points whose labels are the sign of

    beta(t_m, S) = intrinsic(S) - continuation(S),

the continuation estimated by a small forward Monte Carlo that stops at
the first later date whose already-fitted classifier fires. Training
points are drawn by sampling the terminal date unconditionally from the
spot and bridging back to t_m, so their marginal is the model's own
distribution of prices at that date. Labeling is parallel (one stream
per point, continuing the stream that drew the point); the boosting fit
is serial on the coordinator.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._kernels import get_backend
from ._kernels.packs import RulePack, pack_market
from .boosting import StumpEnsemble, TrainingSet, fit_ensemble
from .engine import Engine
from .market import (BermudanSpec, ConfigError, MarketParams, bridge_values,
                     gbm_step_values, payoff_values)
from .rng import Phase, StreamKey, normals

__all__ = ["CmcRule", "CmcBuildConfig", "CmcBuildReport", "sample_training_points",
           "label_point", "build_cmc_rule"]


def classifier_features(values: np.ndarray, d: int) -> np.ndarray:
    """Feature map seen by the stumps.

    For several assets the raw coordinates are augmented with max_i S_i:
    axis-aligned votes on raw prices alone encode "most assets above a
    level", which cannot carve the max-payoff exercise region {max S
    above the boundary}; the derived feature makes that region a single
    split. d = 1 is the identity.
    """
    values = np.asarray(values, dtype=np.float64)
    one = values.ndim == 1
    v = values.reshape(1, -1) if one else values
    if d > 1:
        v = np.hstack([v, v.max(axis=1, keepdims=True)])
    return v[0] if one else v


def n_classifier_features(d: int) -> int:
    return d + 1 if d > 1 else 1


class CmcRule:
    """Per-date boosted classifiers; the final date exercises on payoff alone.

    Ensembles accept the d asset prices; internally they vote on
    :func:`classifier_features` of the state.
    """

    def __init__(self, d: int, n_dates: int, call_like: bool,
                 ensembles: dict[int, StumpEnsemble]):
        want = n_classifier_features(d)
        for m, ens in ensembles.items():
            if not 1 <= m < n_dates:
                raise ValueError(f"ensemble date {m} outside 1..{n_dates - 1}")
            if ens.dim != want:
                raise ValueError(f"ensemble at date {m} has feature dim {ens.dim}, "
                                 f"expected {want}")
        self.d = int(d)
        self.n_dates = int(n_dates)
        self.call_like = bool(call_like)
        self.ensembles = dict(sorted(ensembles.items()))

    def score(self, m: int, values) -> float:
        """Margin of one d-dimensional state under date m's classifier."""
        ens = self.ensembles.get(m)
        if ens is None:
            return -1.0
        return float(ens.score(classifier_features(values, self.d)))

    @classmethod
    def empty(cls, d: int, n_dates: int, call_like: bool = True) -> "CmcRule":
        """No early exercise anywhere: maturity-only (European) behaviour."""
        return cls(d, n_dates, call_like, {})

    def restricted_after(self, m: int) -> "CmcRule":
        """Rule containing only dates > m (for labeling at date m)."""
        return CmcRule(self.d, self.n_dates, self.call_like,
                       {k: v for k, v in self.ensembles.items() if k > m})

    def pack(self) -> RulePack:
        per_date = {}
        for m, ens in self.ensembles.items():
            feat = [st.feature for st in ens.rounds]
            thr = [st.threshold for st in ens.rounds]
            pol = [st.polarity for st in ens.rounds]
            alpha = [st.alpha for st in ens.rounds]
            per_date[m] = (feat, thr, pol, alpha, ens.intercept)
        return RulePack.from_stumps(self.n_dates, per_date, self.call_like)

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "d": self.d,
            "n_dates": self.n_dates,
            "call_like": self.call_like,
            "dates": {str(m): ens.to_json_dict() for m, ens in self.ensembles.items()},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CmcRule":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported rule document version {doc.get('version')!r}")
        ensembles = {int(m): StumpEnsemble.from_json_dict(e)
                     for m, e in doc["dates"].items()}
        return cls(doc["d"], doc["n_dates"], doc["call_like"], ensembles)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "CmcRule":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class CmcBuildConfig:
    """Sampling and fitting sizes for one rule build."""

    n_train: int           # training points per date
    n_label: int           # inner paths per label
    boost_rounds: int = 100

    def __post_init__(self):
        if self.n_train < 1 or self.n_label < 1:
            raise ConfigError("training and labeling path counts must be positive")
        if self.boost_rounds < 1:
            raise ConfigError("need at least one boosting round")


@dataclass
class CmcBuildReport:
    """Phase breakdown mirroring the parallel/serial split of the build."""

    calc_seconds: float = 0.0
    class_seconds: float = 0.0
    per_date: list[dict] = field(default_factory=list)
    one_class_dates: list[int] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "phases": {"calc": self.calc_seconds, "class": self.class_seconds},
            "per_date": self.per_date,
            "one_class_dates": self.one_class_dates,
        }


def _draw_point(params: MarketParams, spec: BermudanSpec, m: int,
                key64, stream64) -> np.ndarray:
    """One training point at date m: terminal draw, then bridge back.

    Consumes draws 0 .. 2d-1 of the stream (d for the terminal step, d
    for the bridge), leaving the cursor at 2d for the labeling paths.
    """
    d = params.d
    z = normals(key64, stream64, 0, 2 * d)
    terminal = gbm_step_values(params, params.s0, spec.maturity, z[:d])
    t_m = m * spec.dt
    if m == spec.n_dates:
        return terminal
    return bridge_values(params, params.s0, terminal, 0.0, spec.maturity, t_m, z[d:])


def sample_training_points(params: MarketParams, spec: BermudanSpec, m: int,
                           n_points: int, seed: int) -> np.ndarray:
    """Training points at date m, one stream per point (keyed by point id)."""
    if not 1 <= m <= spec.n_dates:
        raise ValueError(f"date index {m} outside 1..{spec.n_dates}")
    out = np.empty((n_points, params.d))
    for i in range(n_points):
        key64, stream64 = StreamKey(seed, Phase.CMC_CALC, i, m).words()
        out[i] = _draw_point(params, spec, m, key64, stream64)
    return out


def label_point(params: MarketParams, spec: BermudanSpec, values: np.ndarray,
                m: int, n_label: int, later: CmcRule, key64, stream64,
                draw_base: int = 0, backend=None) -> float:
    """beta = intrinsic minus estimated continuation at one point.

    The continuation runs ``n_label`` paths forward from the point,
    stopping at the first later date where that date's classifier fires
    and the payoff is positive (or at maturity on positive payoff).
    """
    kern = backend or get_backend()
    mp = pack_market(params, spec)
    betas = kern.cmc_labels(mp, later.pack(),
                            np.asarray(values, dtype=np.float64).reshape(1, -1),
                            m, n_label, np.array([key64], dtype=np.uint64),
                            np.array([stream64], dtype=np.uint64), draw_base)
    return float(betas[0])


def _calc_task(backend_name: str, mp, later_pack, params: MarketParams,
               spec: BermudanSpec, m: int, n_label: int, seed: int,
               task_id: int, start: int, end: int):
    """Sample and label training points [start, end) at date m."""
    kern = get_backend(backend_name)
    n = end - start
    xs = np.empty((n, params.d))
    keys = np.empty(n, dtype=np.uint64)
    streams = np.empty(n, dtype=np.uint64)
    for row, item in enumerate(range(start, end)):
        key64, stream64 = StreamKey(seed, Phase.CMC_CALC, item, m).words()
        keys[row] = key64
        streams[row] = stream64
        xs[row] = _draw_point(params, spec, m, key64, stream64)
    # labeling continues each point's own stream past the sampler draws
    betas = kern.cmc_labels(mp, later_pack, xs, m, n_label, keys, streams,
                            2 * params.d)
    return xs, betas


def build_cmc_rule(params: MarketParams, spec: BermudanSpec, cfg: CmcBuildConfig,
                   seed: int = 0, engine: Engine | None = None,
                   backend=None) -> tuple[CmcRule, CmcBuildReport]:
    """Fit the per-date classifiers by backward induction.

    Workers sample and label disjoint ranges of training points; the
    coordinator fits each date's ensemble serially. A date whose labels
    are all one class gets a constant-sign classifier (and is recorded
    in the report).
    """
    spec.validate_against(params)
    engine = engine or Engine()
    kern = backend or get_backend()
    mp = pack_market(params, spec)
    call_like = spec.payoff_kind.call_like
    rule = CmcRule.empty(params.d, spec.n_dates, call_like)
    report = CmcBuildReport()

    for m in range(spec.n_dates - 1, 0, -1):
        later_pack = rule.pack()  # ensembles for dates > m only, by construction
        task = partial(_calc_task, kern.name, mp, later_pack, params, spec, m,
                       cfg.n_label, seed)
        t0 = time.perf_counter()
        reports = engine.run_ranges(cfg.n_train, task, phase="calc")
        calc_s = time.perf_counter() - t0

        xs = np.vstack([r.payload[0] for r in reports])
        betas = np.concatenate([r.payload[1] for r in reports])

        t0 = time.perf_counter()
        ts = TrainingSet(classifier_features(xs, params.d), betas)
        ensemble = fit_ensemble(ts, cfg.boost_rounds)
        class_s = time.perf_counter() - t0

        if not ensemble.rounds:
            report.one_class_dates.append(m)
        ensembles = dict(rule.ensembles)
        ensembles[m] = ensemble
        rule = CmcRule(params.d, spec.n_dates, call_like, ensembles)

        report.calc_seconds += calc_s
        report.class_seconds += class_s
        report.per_date.append({
            "date_index": m,
            "calc_seconds": calc_s,
            "class_seconds": class_s,
            "positive_fraction": float(np.mean(betas > 0.0)),
            "rounds": len(ensemble.rounds),
        })

    report.per_date.reverse()
    return rule, report
