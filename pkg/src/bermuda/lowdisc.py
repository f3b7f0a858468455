"""Rank-1 lattice ("good lattice point") seed grids.

The boundary builder probes candidate exercise levels at a deterministic
low-discrepancy set of points in the price box of the non-boundary
assets. Points are Korobov rank-1 lattices

    x_j = frac(j * (1, a, a^2, ...) / J),  j = 0 .. J-1,

affinely mapped into the box. Multipliers ``a`` come from a built-in
table selected by minimizing the P2 figure of merit over all admissible
multipliers; pairs (J, dim) outside the table fall back to a Fibonacci-
style default with a warning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["SeedGrid", "generate_glp", "default_box", "korobov_multiplier"]

# (J, dim) -> multiplier, chosen by exhaustive P2 search over odd a coprime to J.
_KOROBOV_A = {
    (8, 2): 3, (8, 3): 3, (8, 4): 3, (8, 5): 3,
    (16, 2): 7, (16, 3): 3, (16, 4): 3, (16, 5): 3,
    (32, 2): 7, (32, 3): 3, (32, 4): 3, (32, 5): 5,
    (64, 2): 19, (64, 3): 5, (64, 4): 3, (64, 5): 5,
    (128, 2): 47, (128, 3): 25, (128, 4): 21, (128, 5): 3,
    (256, 2): 75, (256, 3): 37, (256, 4): 39, (256, 5): 21,
    (512, 2): 149, (512, 3): 119, (512, 4): 115, (512, 5): 151,
    (1024, 2): 275, (1024, 3): 149, (1024, 4): 27, (1024, 5): 189,
    (2048, 2): 791, (2048, 3): 495, (2048, 4): 137, (2048, 5): 453,
    (4096, 2): 1557, (4096, 3): 751, (4096, 4): 791, (4096, 5): 755,
}


@dataclass(frozen=True)
class SeedGrid:
    """J deterministic probe points inside a per-coordinate price box."""

    points: np.ndarray  # (J, dim)
    box: np.ndarray     # (dim, 2) columns [lo, hi]

    @property
    def j_count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def korobov_multiplier(j_points: int, dim: int) -> int:
    """Lattice multiplier for (J, dim); tabulated or Fibonacci-style fallback."""
    if dim == 1:
        return 1
    a = _KOROBOV_A.get((j_points, dim))
    if a is not None:
        return a
    # Fallback: a ~ J/golden-ratio, nudged to be odd and coprime to J.
    a = max(3, int(round(j_points * (math.sqrt(5.0) - 1.0) / 2.0)) | 1)
    while math.gcd(a, j_points) != 1:
        a += 2
    warnings.warn(
        f"no tabulated lattice multiplier for J={j_points}, dim={dim}; "
        f"using default a={a}",
        stacklevel=2,
    )
    return a


def default_box(strike: float, dim: int, lo_mult: float = 0.5,
                hi_mult: float = 2.5) -> np.ndarray:
    """Per-coordinate probe box [lo_mult*K, hi_mult*K]."""
    if not 0.0 <= lo_mult < hi_mult:
        raise ValueError(f"need 0 <= lo_mult < hi_mult, got {lo_mult}, {hi_mult}")
    box = np.empty((dim, 2))
    box[:, 0] = lo_mult * strike
    box[:, 1] = hi_mult * strike
    return box


def generate_glp(j_points: int, dim: int, box) -> SeedGrid:
    """Deterministic J-point rank-1 lattice mapped into ``box``.

    ``box`` is (dim, 2) rows of [lo, hi], or a single [lo, hi] pair
    broadcast to every coordinate. The unmapped lattice projects onto
    {0, 1/J, ..., (J-1)/J} in every coordinate.
    """
    if j_points < 1:
        raise ValueError(f"need at least one point, got J={j_points}")
    if dim < 1:
        raise ValueError(f"need dim >= 1, got {dim}")
    box = np.asarray(box, dtype=np.float64)
    if box.ndim == 1:
        box = np.tile(box, (dim, 1))
    if box.shape != (dim, 2) or np.any(box[:, 0] >= box[:, 1]):
        raise ValueError(f"box must be (dim, 2) rows [lo, hi], got {box!r}")

    a = korobov_multiplier(j_points, dim)
    g = np.ones(dim, dtype=np.int64)
    for k in range(1, dim):
        g[k] = (g[k - 1] * a) % j_points
    j = np.arange(j_points, dtype=np.int64)
    unit = (np.outer(j, g) % j_points) / float(j_points)
    lo, hi = box[:, 0], box[:, 1]
    return SeedGrid(points=lo + unit * (hi - lo), box=box)
