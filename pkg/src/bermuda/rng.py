"""Deterministic, splittable normal-variate streams.

Every source of randomness in the engine is a *stream* addressed by a
:class:`StreamKey` of ``(master_seed, phase, task_id, date_index)``.
Draw ``k`` of a stream is a pure O(1) function of the key and ``k``:

* the key fields are hashed into 128 bits of stream identity
  (:func:`derive_words`),
* raw 64-bit words come from the Philox4x32-10 counter-based generator
  (Salmon et al., 2011), with the draw index as the low counter words,
* uniforms are the top 53 bits of each word, offset by half an ulp so
  0 and 1 never occur,
* normal variates use the AS241 inverse normal CDF (Wichura, 1988),
  **not** Box-Muller or a ziggurat, so a single draw maps to a single
  uniform and streams can be entered at any offset.

Because draws are random-access, workers never share generator state and
results are identical for any partitioning of work across threads. The
compiled kernel implements the same pipeline; raw words and uniforms are
bit-identical across the two, normals agree to the last ulp or two (the
tail branch of AS241 goes through ``log``, which may round differently
between libm and NumPy's vector math).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "Phase",
    "StreamKey",
    "NormalStream",
    "make_stream",
    "mix64",
    "derive_words",
    "raw_uint64",
    "uniforms",
    "normals",
    "inverse_normal_cdf",
]

# Philox4x32 round constants.
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = 0x9E3779B9
_PHILOX_W1 = 0xBB67AE85

_U32 = np.uint64(0xFFFFFFFF)
_TWO_NEG53 = 2.0 ** -53


class Phase(IntEnum):
    """Engine phase owning a family of streams."""

    GLP = 0
    IZ_CALC = 1
    CMC_CALC = 2
    PRICING = 3


_M64 = 0xFFFFFFFFFFFFFFFF


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a strong 64-bit avalanche (Stafford mix13).

    Pure-int arithmetic masked to 64 bits so the same bits come out of
    the compiled kernel's C implementation.
    """
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def derive_words(master_seed: int, phase: int, task_id: int, date_index: int):
    """Hash the stream key fields into (key64, stream64).

    The two words give 128 bits of stream identity: ``key64`` feeds the
    Philox key, ``stream64`` the upper counter words. Distinct key
    fields therefore index disjoint counter spaces.
    """
    h = mix64((master_seed & _M64) + 0x9E3779B97F4A7C15)
    for field in (phase, task_id, date_index):
        h = mix64(h ^ ((int(field) & _M64) + 0x9E3779B97F4A7C15))
    return np.uint64(h), np.uint64(mix64(h + 0xD6E8FEB86659FD93))


@dataclass(frozen=True)
class StreamKey:
    """Address of one deterministic stream of standard normals."""

    master_seed: int
    phase: Phase
    task_id: int
    date_index: int = 0

    def words(self):
        return derive_words(self.master_seed, int(self.phase), self.task_id, self.date_index)


def _philox_calls(key64: np.uint64, stream64: np.uint64, start_call: int, n_calls: int):
    """Run Philox4x32-10 for counter blocks [start_call, start_call+n_calls).

    Returns two uint64 arrays (the four 32-bit lanes packed pairwise).
    """
    n = np.arange(start_call, start_call + n_calls, dtype=np.uint64)
    c0 = n & _U32
    c1 = n >> np.uint64(32)
    c2 = np.full(n_calls, np.uint64(stream64) & _U32, dtype=np.uint64)
    c3 = np.full(n_calls, np.uint64(stream64) >> np.uint64(32), dtype=np.uint64)
    k0 = int(key64) & 0xFFFFFFFF
    k1 = (int(key64) >> 32) & 0xFFFFFFFF
    for _ in range(10):
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _U32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _U32
        c0 = hi1 ^ c1 ^ np.uint64(k0)
        c1 = lo1
        c2 = hi0 ^ c3 ^ np.uint64(k1)
        c3 = lo0
        k0 = (k0 + _PHILOX_W0) & 0xFFFFFFFF
        k1 = (k1 + _PHILOX_W1) & 0xFFFFFFFF
    return (c0 << np.uint64(32)) | c1, (c2 << np.uint64(32)) | c3


def raw_uint64(key64, stream64, start: int, count: int) -> np.ndarray:
    """Raw 64-bit words ``start .. start+count`` of the stream."""
    if count <= 0:
        return np.empty(0, dtype=np.uint64)
    first_call = start >> 1
    n_calls = ((start + count + 1) >> 1) - first_call
    w0, w1 = _philox_calls(np.uint64(key64), np.uint64(stream64), first_call, n_calls)
    out = np.empty(2 * n_calls, dtype=np.uint64)
    out[0::2] = w0
    out[1::2] = w1
    lo = start - 2 * first_call
    return out[lo:lo + count]


def uniforms(key64, stream64, start: int, count: int) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1)."""
    bits = raw_uint64(key64, stream64, start, count)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_NEG53


# AS241 rational-approximation coefficients (PPND16).
_A = (3.3871328727963666080, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
      3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187, 1.67638483018380384940, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _horner(coef, x):
    acc = np.full_like(x, coef[-1])
    for c in coef[-2::-1]:
        acc = acc * x + c
    return acc


def inverse_normal_cdf(u) -> np.ndarray:
    """AS241 inverse of the standard normal CDF, accurate to ~1e-15.

    Requires ``0 < u < 1``; the stream uniforms satisfy this by
    construction.
    """
    u = np.asarray(u, dtype=np.float64)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    q = u - 0.5
    out = np.empty_like(u)

    central = np.abs(q) <= 0.425
    if central.any():
        r = 0.180625 - q[central] * q[central]
        out[central] = q[central] * _horner(_A, r) / _horner(_B, r)

    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.where(qt < 0.0, u[tail], 1.0 - u[tail])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        z = np.empty_like(r)
        if near.any():
            rn = r[near] - 1.6
            z[near] = _horner(_C, rn) / _horner(_D, rn)
        if (~near).any():
            rf = r[~near] - 5.0
            z[~near] = _horner(_E, rf) / _horner(_F, rf)
        out[tail] = np.where(qt < 0.0, -z, z)

    return out[0] if scalar else out


def normals(key64, stream64, start: int, count: int) -> np.ndarray:
    """Standard normal draws ``start .. start+count`` of the stream."""
    return inverse_normal_cdf(uniforms(key64, stream64, start, count))


class NormalStream:
    """Sequential cursor over one stream of standard normals.

    The stream owns no hidden state beyond the cursor: two streams with
    the same key always produce the same sequence, and ``skip`` is O(1).
    """

    __slots__ = ("key", "key64", "stream64", "pos")

    def __init__(self, key: StreamKey):
        self.key = key
        self.key64, self.stream64 = key.words()
        self.pos = 0

    def normals(self, count: int) -> np.ndarray:
        out = normals(self.key64, self.stream64, self.pos, count)
        self.pos += count
        return out

    def skip(self, count: int) -> None:
        self.pos += count


def make_stream(key: StreamKey) -> NormalStream:
    """Create the normal-draw source addressed by ``key``."""
    return NormalStream(key)
