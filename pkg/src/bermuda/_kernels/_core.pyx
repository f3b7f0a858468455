# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Scalar path walker matching the NumPy backend: identical Philox4x32-10
bit streams, AS241 inverse-normal pipeline and draw indexing (draw
(path p, step k, asset a) of a call sits at stream offset
draw_base + (p*n_steps + k)*d + a). Whole phases -- a block of pricing
paths, a full boundary-point solve, a range of training labels -- run
inside one ``nogil`` region, so worker threads spend almost no time
holding the GIL and scale on real cores. Compiled with
-ffp-contract=off so polynomial evaluation rounds like NumPy's.
"""

from libc.math cimport exp, fabs, log, sqrt
from libc.stdint cimport int32_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc

import numpy as np


# ---------------------------------------------------------------- RNG core

cdef inline void _philox(uint64_t key, uint64_t stream, uint64_t call,
                         uint64_t* out0, uint64_t* out1) nogil:
    cdef uint32_t c0 = <uint32_t>(call & <uint64_t>0xFFFFFFFF)
    cdef uint32_t c1 = <uint32_t>(call >> 32)
    cdef uint32_t c2 = <uint32_t>(stream & <uint64_t>0xFFFFFFFF)
    cdef uint32_t c3 = <uint32_t>(stream >> 32)
    cdef uint32_t k0 = <uint32_t>(key & <uint64_t>0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>(key >> 32)
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1, n0, n1, n2, n3
    cdef int r
    for r in range(10):
        p0 = <uint64_t>0xD2511F53 * c0
        p1 = <uint64_t>0xCD9E8D57 * c2
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        n0 = hi1 ^ c1 ^ k0
        n1 = lo1
        n2 = hi0 ^ c3 ^ k1
        n3 = lo0
        c0 = n0
        c1 = n1
        c2 = n2
        c3 = n3
        k0 = k0 + <uint32_t>0x9E3779B9
        k1 = k1 + <uint32_t>0xBB67AE85
    out0[0] = (<uint64_t>c0 << 32) | c1
    out1[0] = (<uint64_t>c2 << 32) | c3


cdef inline double _uniform(uint64_t bits) nogil:
    return (<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0)


# AS241 rational-approximation coefficients (PPND16), Horner order
# matching the NumPy implementation exactly.
cdef inline double _ndtri(double u) nogil:
    cdef double q = u - 0.5
    cdef double r, num, den, z
    if fabs(q) <= 0.425:
        r = 0.180625 - q * q
        num = 2.5090809287301226727e3
        num = num * r + 3.3430575583588128105e4
        num = num * r + 6.7265770927008700853e4
        num = num * r + 4.5921953931549871457e4
        num = num * r + 1.3731693765509461125e4
        num = num * r + 1.9715909503065514427e3
        num = num * r + 1.3314166789178437745e2
        num = num * r + 3.3871328727963666080
        den = 5.2264952788528545610e3
        den = den * r + 2.8729085735721942674e4
        den = den * r + 3.9307895800092710610e4
        den = den * r + 2.1213794301586595867e4
        den = den * r + 5.3941960214247511077e3
        den = den * r + 6.8718700749205790830e2
        den = den * r + 4.2313330701600911252e1
        den = den * r + 1.0
        return q * num / den
    if q < 0.0:
        r = u
    else:
        r = 1.0 - u
    r = sqrt(-log(r))
    if r <= 5.0:
        r = r - 1.6
        num = 7.74545014278341407640e-4
        num = num * r + 2.27238449892691845833e-2
        num = num * r + 2.41780725177450611770e-1
        num = num * r + 1.27045825245236838258
        num = num * r + 3.64784832476320460504
        num = num * r + 5.76949722146069140550
        num = num * r + 4.63033784615654529590
        num = num * r + 1.42343711074968357734
        den = 1.05075007164441684324e-9
        den = den * r + 5.47593808499534494600e-4
        den = den * r + 1.51986665636164571966e-2
        den = den * r + 1.48103976427480074590e-1
        den = den * r + 6.89767334985100004550e-1
        den = den * r + 1.67638483018380384940
        den = den * r + 2.05319162663775882187
        den = den * r + 1.0
        z = num / den
    else:
        r = r - 5.0
        num = 2.01033439929228813265e-7
        num = num * r + 2.71155556874348757815e-5
        num = num * r + 1.24266094738807843860e-3
        num = num * r + 2.65321895265761230930e-2
        num = num * r + 2.96560571828504891230e-1
        num = num * r + 1.78482653991729133580
        num = num * r + 5.46378491116411436990
        num = num * r + 6.65790464350110377720
        den = 2.04426310338993978564e-15
        den = den * r + 1.42151175831644588870e-7
        den = den * r + 1.84631831751005468180e-5
        den = den * r + 7.86869131145613259100e-4
        den = den * r + 1.48753612908506148525e-2
        den = den * r + 1.36929880922735805310e-1
        den = den * r + 5.99832206555887937690e-1
        den = den * r + 1.0
        z = num / den
    return -z if q < 0.0 else z


cdef struct DrawCache:
    uint64_t call
    int valid
    double u0
    double u1


cdef inline double _normal_at(uint64_t key, uint64_t stream, uint64_t idx,
                              DrawCache* cache) nogil:
    cdef uint64_t call = idx >> 1
    cdef uint64_t b0, b1
    if not cache.valid or cache.call != call:
        _philox(key, stream, call, &b0, &b1)
        cache.call = call
        cache.valid = 1
        cache.u0 = _uniform(b0)
        cache.u1 = _uniform(b1)
    return _ndtri(cache.u0 if (idx & 1) == 0 else cache.u1)


def raw_uint64_fill(key64, stream64, start, count):
    """Raw stream words (exactly the NumPy backend's bits)."""
    cdef uint64_t key = <uint64_t>int(key64)
    cdef uint64_t stream = <uint64_t>int(stream64)
    cdef uint64_t base = <uint64_t>int(start)
    cdef Py_ssize_t n = int(count)
    out_arr = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef uint64_t b0, b1, idx
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            idx = base + <uint64_t>i
            _philox(key, stream, idx >> 1, &b0, &b1)
            out[i] = b0 if (idx & 1) == 0 else b1
    return out_arr


def normals_fill(key64, stream64, start, count):
    """Standard normal draws (AS241 pipeline)."""
    cdef uint64_t key = <uint64_t>int(key64)
    cdef uint64_t stream = <uint64_t>int(stream64)
    cdef uint64_t base = <uint64_t>int(start)
    cdef Py_ssize_t n = int(count)
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef DrawCache cache
    cache.valid = 0
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _normal_at(key, stream, base + <uint64_t>i, &cache)
    return out_arr


# ------------------------------------------------------- simulation context

cdef struct Ctx:
    int d
    int n_dates
    int payoff_kind
    double strike
    double* step_mu
    double* step_vol
    double* chol          # d x d row-major
    double* disc_steps    # n_dates + 1
    int rule_kind
    int call_like
    int imm_date
    int nbasis
    double* iz_coeffs     # (n_dates+1) x d x nbasis
    double* iz_lo
    double* iz_hi
    int32_t* cmc_starts
    int32_t* cmc_counts
    int32_t* cmc_feat
    double* cmc_thr
    double* cmc_pol
    double* cmc_alpha
    double* cmc_intercept


cdef inline double _payoff(Ctx* c, double* v) nogil:
    cdef double best
    cdef int i
    if c.payoff_kind == 0:  # max-call
        best = v[0]
        for i in range(1, c.d):
            if v[i] > best:
                best = v[i]
        best = best - c.strike
    elif c.payoff_kind == 1:  # put
        best = c.strike - v[0]
    else:  # call
        best = v[0] - c.strike
    return best if best > 0.0 else 0.0


cdef inline int _iz_stop(Ctx* c, int m, double* v, double* wz) nogil:
    cdef int istar, i, j, cc, a, b_i, pos, k
    cdef double best, bval, zv
    cdef double* row
    if c.d == 1:
        bval = c.iz_coeffs[m * c.nbasis]
        if c.call_like:
            if bval < c.strike:
                bval = c.strike
            return v[0] >= bval
        if bval > c.strike:
            bval = c.strike
        return v[0] <= bval
    istar = 0
    best = v[0]
    for i in range(1, c.d):
        if v[i] > best:  # strict: argmax ties go to the lowest index
            best = v[i]
            istar = i
    row = c.iz_coeffs + (m * c.d + istar) * c.nbasis
    bval = row[0]
    cc = 0
    for j in range(c.d):
        if j == istar:
            continue
        zv = v[j]
        if zv < c.iz_lo[cc]:
            zv = c.iz_lo[cc]
        elif zv > c.iz_hi[cc]:
            zv = c.iz_hi[cc]
        wz[cc] = zv
        bval += row[1 + cc] * zv
        cc += 1
    k = c.d - 1
    pos = 1 + k
    for a in range(k):
        for b_i in range(a, k):
            bval += row[pos] * wz[a] * wz[b_i]
            pos += 1
    if bval < c.strike:
        bval = c.strike  # call boundary never below strike
    return v[istar] >= bval


cdef inline int _cmc_stop(Ctx* c, int m, double* v) nogil:
    cdef double s = c.cmc_intercept[m]
    cdef double val, vmax
    cdef int t, f, i, t0 = c.cmc_starts[m]
    vmax = v[0]
    for i in range(1, c.d):
        if v[i] > vmax:
            vmax = v[i]
    for t in range(t0, t0 + c.cmc_counts[m]):
        # feature index d is the derived max-price feature
        f = c.cmc_feat[t]
        val = v[f] if f < c.d else vmax
        if val > c.cmc_thr[t]:
            s += c.cmc_alpha[t] * c.cmc_pol[t]
        else:
            s -= c.cmc_alpha[t] * c.cmc_pol[t]
    return s > 0.0


cdef double _path_value(Ctx* c, double* start, int m_start, uint64_t key,
                        uint64_t stream, uint64_t path_base, double* v,
                        double* z, double* wz, DrawCache* cache) nogil:
    """Discounted payoff of one stopped path (0 if never exercised)."""
    cdef int n_steps = c.n_dates - m_start
    cdef int i, a, k, m, stop
    cdef double y, pay
    for i in range(c.d):
        v[i] = start[i]
    for k in range(n_steps):
        m = m_start + k + 1
        for a in range(c.d):
            z[a] = _normal_at(key, stream, path_base + <uint64_t>(k * c.d + a), cache)
        for i in range(c.d):
            y = 0.0
            for a in range(c.d):
                y += c.chol[i * c.d + a] * z[a]
            v[i] = v[i] * exp(c.step_mu[i] + c.step_vol[i] * y)
        pay = _payoff(c, v)
        if pay <= 0.0:
            continue
        if c.rule_kind == 0:
            stop = m == c.n_dates
        elif c.rule_kind == 1:
            stop = m == c.imm_date
        elif m == c.n_dates:
            stop = 1
        elif c.rule_kind == 2:
            stop = _iz_stop(c, m, v, wz)
        else:
            stop = _cmc_stop(c, m, v)
        if stop:
            return pay * c.disc_steps[m - m_start]
    return 0.0


cdef inline double* _ptr_d(double[::1] mv) nogil:
    return &mv[0] if mv.shape[0] > 0 else NULL


cdef inline int32_t* _ptr_i(int32_t[::1] mv) nogil:
    return &mv[0] if mv.shape[0] > 0 else NULL


cdef class _CtxHolder:
    """Keeps the pack arrays alive and exposes a C-level context."""

    cdef Ctx ctx
    cdef object _refs

    def __init__(self, int d, int n_dates, double strike, int payoff_kind,
                 double[::1] step_mu, double[::1] step_vol,
                 double[:, ::1] chol, double[::1] disc_steps,
                 int rule_kind, int call_like, int imm_date,
                 double[:, :, ::1] iz_coeffs, double[::1] iz_lo,
                 double[::1] iz_hi,
                 int32_t[::1] cmc_starts, int32_t[::1] cmc_counts,
                 int32_t[::1] cmc_feat, double[::1] cmc_thr,
                 double[::1] cmc_pol, double[::1] cmc_alpha,
                 double[::1] cmc_intercept):
        self._refs = (step_mu, step_vol, chol, disc_steps, iz_coeffs, iz_lo,
                      iz_hi, cmc_starts, cmc_counts, cmc_feat, cmc_thr,
                      cmc_pol, cmc_alpha, cmc_intercept)
        self.ctx.d = d
        self.ctx.n_dates = n_dates
        self.ctx.strike = strike
        self.ctx.payoff_kind = payoff_kind
        self.ctx.step_mu = &step_mu[0]
        self.ctx.step_vol = &step_vol[0]
        self.ctx.chol = &chol[0, 0]
        self.ctx.disc_steps = &disc_steps[0]
        self.ctx.rule_kind = rule_kind
        self.ctx.call_like = call_like
        self.ctx.imm_date = imm_date
        self.ctx.nbasis = <int>iz_coeffs.shape[2]
        self.ctx.iz_coeffs = &iz_coeffs[0, 0, 0]
        self.ctx.iz_lo = _ptr_d(iz_lo)
        self.ctx.iz_hi = _ptr_d(iz_hi)
        self.ctx.cmc_starts = _ptr_i(cmc_starts)
        self.ctx.cmc_counts = _ptr_i(cmc_counts)
        self.ctx.cmc_feat = _ptr_i(cmc_feat)
        self.ctx.cmc_thr = _ptr_d(cmc_thr)
        self.ctx.cmc_pol = _ptr_d(cmc_pol)
        self.ctx.cmc_alpha = _ptr_d(cmc_alpha)
        self.ctx.cmc_intercept = _ptr_d(cmc_intercept)


def make_ctx(*args):
    return _CtxHolder(*args)


cdef struct Scratch:
    double* v
    double* z
    double* wz


cdef inline int _alloc_scratch(Scratch* s, int d) nogil:
    s.v = <double*>malloc(d * sizeof(double))
    s.z = <double*>malloc(d * sizeof(double))
    s.wz = <double*>malloc(d * sizeof(double))
    return s.v != NULL and s.z != NULL and s.wz != NULL


cdef inline void _free_scratch(Scratch* s) nogil:
    free(s.v)
    free(s.z)
    free(s.wz)


# ---------------------------------------------------------------- kernels

def stopped_sums_impl(_CtxHolder holder, double[::1] start, int m_start,
                      int n_paths, key64, stream64, draw_base):
    """Sum and sum of squares of discounted stopped payoffs."""
    cdef Ctx* c = &holder.ctx
    if c.n_dates - m_start <= 0:
        raise ValueError("start date has no remaining exercise dates")
    cdef uint64_t key = <uint64_t>int(key64)
    cdef uint64_t stream = <uint64_t>int(stream64)
    cdef uint64_t base = <uint64_t>int(draw_base)
    cdef int per_path = (c.n_dates - m_start) * c.d
    cdef double total = 0.0, total_sq = 0.0
    cdef double val
    cdef Scratch s
    cdef DrawCache cache
    cdef int p
    with nogil:
        if not _alloc_scratch(&s, c.d):
            _free_scratch(&s)
            with gil:
                raise MemoryError()
        cache.valid = 0
        for p in range(n_paths):
            val = _path_value(c, &start[0], m_start, key, stream,
                              base + (<uint64_t>p) * <uint64_t>per_path,
                              s.v, s.z, s.wz, &cache)
            total += val
            total_sq += val * val
        _free_scratch(&s)
    return total, total_sq


def iz_solve_impl(_CtxHolder holder, double[::1] seed_point, int asset_index,
                  int m, int n_inner, double epsilon, int max_iter,
                  int avg_window, key64, stream64):
    """Fixed-point boundary solve for one probe; the whole loop is nogil.

    Mirrors the NumPy backend's ``iz_solve``: iterate x <- K +/- C(x)
    from x0 = K with a fresh draw slab per iteration; the stop test
    |step| < epsilon arms only after the first step against the transit
    direction; the returned level averages the last ``avg_window``
    iterates (including x0 when the history is short).
    """
    cdef Ctx* c = &holder.ctx
    if c.n_dates - m <= 0:
        raise ValueError("start date has no remaining exercise dates")
    cdef uint64_t key = <uint64_t>int(key64)
    cdef uint64_t stream = <uint64_t>int(stream64)
    cdef int per_path = (c.n_dates - m) * c.d
    cdef uint64_t slab = <uint64_t>n_inner * <uint64_t>per_path
    cdef double strike = c.strike
    cdef int call_like = c.call_like
    cdef int d = c.d
    cdef int n_hist = max_iter + 1

    cdef double* start = <double*>malloc(d * sizeof(double))
    cdef double* hist = <double*>malloc(n_hist * sizeof(double))
    cdef Scratch s
    cdef DrawCache cache
    cdef double x, x_new, step, cont, total, val, level
    cdef uint64_t it_base
    cdef int k, p, i, j, armed, converged, iterations, lo, n_avg
    with nogil:
        if not _alloc_scratch(&s, d) or start == NULL or hist == NULL:
            _free_scratch(&s)
            free(start)
            free(hist)
            with gil:
                raise MemoryError()
        x = strike
        hist[0] = x
        armed = 0
        converged = 0
        iterations = 0
        for k in range(max_iter):
            # probe state: asset at x, seeds clipped below x
            j = 0
            for i in range(d):
                if i == asset_index:
                    start[i] = x
                else:
                    start[i] = seed_point[j] if seed_point[j] <= x else x - 0.01 * strike
                    j += 1
            cache.valid = 0
            total = 0.0
            it_base = (<uint64_t>k) * slab
            for p in range(n_inner):
                val = _path_value(c, start, m, key, stream,
                                  it_base + (<uint64_t>p) * <uint64_t>per_path,
                                  s.v, s.z, s.wz, &cache)
                total += val
            cont = total / n_inner
            x_new = strike + cont if call_like else strike - cont
            step = x_new - x
            iterations = k + 1
            if not armed and ((step <= 0.0) if call_like else (step >= 0.0)):
                armed = 1
            x = x_new
            hist[iterations] = x
            if armed and fabs(step) < epsilon:
                converged = 1
                break
        n_avg = avg_window if avg_window < iterations + 1 else iterations + 1
        lo = iterations + 1 - n_avg
        level = 0.0
        for i in range(lo, iterations + 1):
            level += hist[i]
        level = level / n_avg
        _free_scratch(&s)
        free(start)
        free(hist)
    return level, iterations, converged


def cmc_labels_impl(_CtxHolder holder, double[:, ::1] points, int m,
                    int n_label, uint64_t[::1] keys, uint64_t[::1] streams,
                    draw_base):
    """Labels beta = intrinsic - continuation for a block of points.

    Each point i uses its own stream (keys[i], streams[i]) starting at
    ``draw_base`` (the draws before it belong to the point sampler).
    """
    cdef Ctx* c = &holder.ctx
    if c.n_dates - m <= 0:
        raise ValueError("start date has no remaining exercise dates")
    cdef int n_points = <int>points.shape[0]
    cdef uint64_t base = <uint64_t>int(draw_base)
    cdef int per_path = (c.n_dates - m) * c.d
    out_arr = np.empty(n_points, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Scratch s
    cdef DrawCache cache
    cdef double total, val
    cdef int i, p
    with nogil:
        if not _alloc_scratch(&s, c.d):
            _free_scratch(&s)
            with gil:
                raise MemoryError()
        for i in range(n_points):
            cache.valid = 0
            total = 0.0
            for p in range(n_label):
                val = _path_value(c, &points[i, 0], m, keys[i], streams[i],
                                  base + (<uint64_t>p) * <uint64_t>per_path,
                                  s.v, s.z, s.wz, &cache)
                total += val
            out[i] = _payoff(c, &points[i, 0]) - total / n_label
        _free_scratch(&s)
    return out_arr
