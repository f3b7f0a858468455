"""Boosted decision stumps for exercise-region classification.

Discrete AdaBoost over depth-1 stumps. The weak-learner search is
exhaustive (every feature, every midpoint between consecutive distinct
values, both polarities) with fixed tie-breaking -- lowest feature
index, then lowest threshold, then positive polarity -- so fitting is a
pure function of the training set and reproducible across hosts and
worker counts.

A stump votes ``polarity`` if ``x[feature] > threshold`` and
``-polarity`` otherwise. Constant stumps (all-identical inputs) carry
``threshold = -inf``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Stump", "StumpEnsemble", "TrainingSet", "fit_stump", "fit_ensemble", "score"]

_ERR_FLOOR = 1e-10


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: float  # +1.0 or -1.0
    alpha: float = 1.0

    def predict(self, xs: np.ndarray) -> np.ndarray:
        """Votes in {-1, +1} for xs of shape (n, d)."""
        side = xs[:, self.feature] > self.threshold
        return np.where(side, self.polarity, -self.polarity)


@dataclass(frozen=True)
class TrainingSet:
    """Labeled points: y = +1 where the raw label beta is positive."""

    xs: np.ndarray     # (n, d)
    betas: np.ndarray  # (n,)
    ys: np.ndarray = field(init=False)

    def __post_init__(self):
        xs = np.ascontiguousarray(self.xs, dtype=np.float64)
        betas = np.asarray(self.betas, dtype=np.float64)
        if xs.ndim != 2 or betas.shape != (xs.shape[0],):
            raise ValueError(f"inconsistent training set shapes {xs.shape}, {betas.shape}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "ys", np.where(betas > 0.0, 1.0, -1.0))


@dataclass(frozen=True)
class StumpEnsemble:
    """Weighted stump committee; ``score`` > 0 is the positive class."""

    dim: int
    rounds: tuple[Stump, ...]
    intercept: float = 0.0

    def score(self, x) -> float:
        """Real-valued margin for a single point."""
        x = np.asarray(x, dtype=np.float64)
        s = self.intercept
        for st in self.rounds:
            s += st.alpha * (st.polarity if x[st.feature] > st.threshold else -st.polarity)
        return s

    def score_many(self, xs: np.ndarray) -> np.ndarray:
        """Margins for xs of shape (n, d)."""
        xs = np.asarray(xs, dtype=np.float64)
        out = np.full(xs.shape[0], self.intercept)
        for st in self.rounds:
            out += st.alpha * st.predict(xs)
        return out

    def decisions(self, xs: np.ndarray) -> np.ndarray:
        return np.where(self.score_many(xs) > 0.0, 1.0, -1.0)

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "dim": self.dim,
            "intercept": self.intercept,
            "rounds": [
                {
                    "feature": st.feature,
                    # JSON has no -inf; constant stumps serialize threshold as null
                    "threshold": None if np.isneginf(st.threshold) else st.threshold,
                    "polarity": st.polarity,
                    "alpha": st.alpha,
                }
                for st in self.rounds
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "StumpEnsemble":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported ensemble document version {doc.get('version')!r}")
        rounds = tuple(
            Stump(
                feature=int(r["feature"]),
                threshold=float("-inf") if r["threshold"] is None else float(r["threshold"]),
                polarity=float(r["polarity"]),
                alpha=float(r["alpha"]),
            )
            for r in doc["rounds"]
        )
        return cls(dim=int(doc["dim"]), rounds=rounds, intercept=float(doc["intercept"]))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "StumpEnsemble":
        return cls.from_json_dict(json.loads(text))


def fit_stump(xs: np.ndarray, ys: np.ndarray, weights: np.ndarray) -> tuple[Stump, float]:
    """Best single stump under weighted 0-1 loss.

    Returns (stump, weighted_error). The search is exhaustive over
    features and midpoints of consecutive distinct values; the returned
    error never exceeds 0.5 (flipping polarity complements the error).
    All-constant inputs produce a weighted majority-vote constant stump.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n, d = xs.shape
    total = w.sum()

    best: Stump | None = None
    best_err = np.inf
    for f in range(d):
        order = np.argsort(xs[:, f], kind="stable")
        xf = xs[order, f]
        distinct = np.nonzero(np.diff(xf) > 0.0)[0]  # split after these positions
        if distinct.size == 0:
            continue
        thresholds = 0.5 * (xf[distinct] + xf[distinct + 1])
        wy = w[order]
        pos_cum = np.cumsum(np.where(ys[order] > 0.0, wy, 0.0))
        neg_cum = np.cumsum(np.where(ys[order] > 0.0, 0.0, wy))
        tot_neg = neg_cum[-1]
        # polarity +1 predicts +1 right of the threshold
        err_plus = pos_cum[distinct] + (tot_neg - neg_cum[distinct])
        err_minus = total - err_plus
        # interleave so argmin's first-hit rule prefers the lowest
        # threshold, then +1 polarity, at exact ties
        errs = np.empty(2 * thresholds.size)
        errs[0::2] = err_plus
        errs[1::2] = err_minus
        k = int(np.argmin(errs))
        if errs[k] < best_err:
            best_err = errs[k]
            best = Stump(f, float(thresholds[k >> 1]), 1.0 if k % 2 == 0 else -1.0)

    if best is None:
        # every feature is constant: majority vote
        pol = 1.0 if float(np.sum(w * ys)) >= 0.0 else -1.0
        err = float(np.sum(w[ys != pol]))
        return Stump(0, float("-inf"), pol), err
    return best, float(best_err)


def fit_ensemble(ts: TrainingSet, rounds: int) -> StumpEnsemble:
    """AdaBoost with ``rounds`` stumps.

    Stops early when a stump separates the data (error 0) or no stump
    beats random guessing (error >= 0.5). A one-class training set
    yields a zero-round ensemble whose constant intercept carries the
    class sign.
    """
    if rounds < 1:
        raise ValueError(f"need at least one round, got {rounds}")
    n, d = ts.xs.shape
    classes = np.unique(ts.ys)
    if classes.size == 1:
        return StumpEnsemble(dim=d, rounds=(), intercept=float(classes[0]))

    w = np.full(n, 1.0 / n)
    picked: list[Stump] = []
    for _ in range(rounds):
        stump, err = fit_stump(ts.xs, ts.ys, w)
        if err >= 0.5:
            break
        alpha = 0.5 * np.log((1.0 - err) / max(err, _ERR_FLOOR))
        picked.append(Stump(stump.feature, stump.threshold, stump.polarity, float(alpha)))
        if err <= 0.0:
            break
        w = w * np.exp(-alpha * ts.ys * stump.predict(ts.xs))
        w /= w.sum()

    if not picked:
        warnings.warn("no stump beat random guessing; falling back to majority sign")
        majority = 1.0 if float(np.sum(ts.ys)) >= 0.0 else -1.0
        return StumpEnsemble(dim=d, rounds=(), intercept=majority)
    return StumpEnsemble(dim=d, rounds=tuple(picked))


def score(ensemble: StumpEnsemble, x) -> float:
    """Margin of a single point under the ensemble."""
    return ensemble.score(x)
