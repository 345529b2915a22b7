# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical core.

Same four entry points as `_core_py`, same semantics. Enumeration walks visible
states in binary-reflected Gray order so each step flips one spin and updates the
m hidden activations in O(m); results are stored at the state's integer index
(bit i of the index holds (v_i + 1) / 2), matching the fallback's layout.

Transcendental-heavy inner work is staged through small contiguous buffers so the
compiler can vectorize the exp/log1p/tanh loops (libmvec); the Gray walk itself is
fma-bound and cheap.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p, tanh

cnp.import_array()

DEF CHUNK = 2048


def visible_logweights(w, bv, bh):
    """Unnormalized log-weights of every visible configuration."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    bv = np.ascontiguousarray(bv, dtype=np.float64)
    bh = np.ascontiguousarray(bh, dtype=np.float64)
    cdef double[:, ::1] wv = w
    cdef double[::1] bvv = bv, bhv = bh
    cdef Py_ssize_t n = wv.shape[0], m = wv.shape[1]
    cdef Py_ssize_t total = (<Py_ssize_t>1) << n
    out_arr = np.empty(total, dtype=np.float64)
    cdef double[::1] out = out_arr
    act_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] act = act_arr
    buf_arr = np.empty(CHUNK * m, dtype=np.float64)
    cdef double[::1] bufv = buf_arr
    cdef double* buf = &bufv[0]
    bsums_arr = np.empty(CHUNK, dtype=np.float64)
    cdef double[::1] bsums = bsums_arr
    gray_arr = np.empty(CHUNK, dtype=np.int64)
    cdef cnp.int64_t[::1] gray = gray_arr
    cdef Py_ssize_t t, c, cl, i, j, flip, tt
    cdef unsigned long long g
    cdef double bsum, tot, sgn, x
    with nogil:
        bsum = 0.0
        for i in range(n):
            bsum -= bvv[i]
        for j in range(m):
            tot = bhv[j]
            for i in range(n):
                tot -= wv[i, j]
            act[j] = tot
        t = 0
        while t < total:
            cl = total - t
            if cl > CHUNK:
                cl = CHUNK
            for c in range(cl):
                tt = t + c
                if tt > 0:
                    flip = 0
                    while not (tt >> flip) & 1:
                        flip += 1
                    g = (<unsigned long long>tt) ^ ((<unsigned long long>tt) >> 1)
                    sgn = 2.0 if (g >> flip) & 1 else -2.0
                    bsum += sgn * bvv[flip]
                    for j in range(m):
                        act[j] += sgn * wv[flip, j]
                else:
                    g = 0
                gray[c] = <cnp.int64_t>g
                bsums[c] = bsum
                for j in range(m):
                    buf[c * m + j] = act[j]
            # log(2 cosh x) = |x| + log1p(exp(-2|x|)); long loop, vectorizes
            for i in range(cl * m):
                x = fabs(buf[i])
                buf[i] = x + log1p(exp(-2.0 * x))
            for c in range(cl):
                tot = bsums[c]
                for j in range(m):
                    tot += buf[c * m + j]
                out[gray[c]] = tot
            t += cl
    return out_arr


def visible_moments(w, bv, bh):
    """Exact Boltzmann averages by visible enumeration; see _core_py for spec."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    bv = np.ascontiguousarray(bv, dtype=np.float64)
    bh = np.ascontiguousarray(bh, dtype=np.float64)
    logw = visible_logweights(w, bv, bh)
    peak = logw.max()
    z = np.exp(logw - peak).sum()
    logz = float(peak + np.log(z))
    prob = np.exp(logw - logz)

    cdef double[:, ::1] wv = w
    cdef double[::1] bvv = bv, bhv = bh, pv = prob
    cdef Py_ssize_t n = wv.shape[0], m = wv.shape[1]
    cdef Py_ssize_t total = (<Py_ssize_t>1) << n
    ev_arr = np.zeros(n, dtype=np.float64)
    eh_arr = np.zeros(m, dtype=np.float64)
    evh_arr = np.zeros((n, m), dtype=np.float64)
    th_arr = np.empty(m, dtype=np.float64)
    act_arr = np.empty(m, dtype=np.float64)
    spins_arr = np.full(n, -1, dtype=np.int8)
    cdef double[::1] ev = ev_arr, eh = eh_arr, th = th_arr, act = act_arr
    cdef double[:, ::1] evh = evh_arr
    cdef cnp.int8_t[::1] spins = spins_arr
    cdef Py_ssize_t t, i, j, flip
    cdef unsigned long long g
    cdef double p, sgn, tot, si
    with nogil:
        for j in range(m):
            tot = bhv[j]
            for i in range(n):
                tot -= wv[i, j]
            act[j] = tot
        for t in range(total):
            if t > 0:
                flip = 0
                while not (t >> flip) & 1:
                    flip += 1
                g = (<unsigned long long>t) ^ ((<unsigned long long>t) >> 1)
                if (g >> flip) & 1:
                    sgn = 2.0
                    spins[flip] = 1
                else:
                    sgn = -2.0
                    spins[flip] = -1
                for j in range(m):
                    act[j] += sgn * wv[flip, j]
            else:
                g = 0
            p = pv[g]
            for j in range(m):
                th[j] = tanh(act[j])
                eh[j] += p * th[j]
            for i in range(n):
                si = p * spins[i]
                ev[i] += si
                for j in range(m):
                    evh[i, j] += si * th[j]
    return logz, ev_arr, eh_arr, evh_arr


def gibbs_halfstep(src, w, bias, u):
    """Sample one layer given the other; see _core_py for the exact law."""
    src = np.ascontiguousarray(src, dtype=np.int8)
    w = np.ascontiguousarray(w, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.int8_t[:, ::1] sv = src
    cdef double[:, ::1] wv = w, uv = u
    cdef double[::1] bv = bias
    cdef Py_ssize_t batch = sv.shape[0], k = sv.shape[1], l = wv.shape[1]
    out_arr = np.empty((batch, l), dtype=np.int8)
    cdef cnp.int8_t[:, ::1] out = out_arr
    act_arr = np.empty(batch * l, dtype=np.float64)
    cdef double[::1] actv = act_arr
    cdef double* act = &actv[0]
    cdef Py_ssize_t b, i, j, idx
    cdef double a, si
    with nogil:
        for b in range(batch):
            for j in range(l):
                act[b * l + j] = bv[j]
            for i in range(k):
                si = sv[b, i]
                for j in range(l):
                    act[b * l + j] += si * wv[i, j]
        for idx in range(batch * l):
            act[idx] = 1.0 / (1.0 + exp(-2.0 * act[idx]))
        for b in range(batch):
            for j in range(l):
                out[b, j] = 1 if uv[b, j] < act[b * l + j] else -1
    return out_arr


def batch_energies(spins, edge_idx, edge_coeff, fields):
    """sum_e coeff_e s_a s_b + sum_v fields_v s_v per row; see _core_py."""
    spins = np.ascontiguousarray(spins, dtype=np.int8)
    edge_idx = np.ascontiguousarray(edge_idx, dtype=np.int64)
    edge_coeff = np.ascontiguousarray(edge_coeff, dtype=np.float64)
    fields = np.ascontiguousarray(fields, dtype=np.float64)
    cdef cnp.int8_t[:, ::1] sv = spins
    cdef cnp.int64_t[:, ::1] ev = edge_idx
    cdef double[::1] cv = edge_coeff, fv = fields
    cdef Py_ssize_t rows = sv.shape[0], units = sv.shape[1], ne = ev.shape[0]
    out_arr = np.empty(rows, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r, v, k
    cdef double e
    with nogil:
        for r in range(rows):
            e = 0.0
            for v in range(units):
                e += fv[v] * sv[r, v]
            for k in range(ne):
                e += cv[k] * sv[r, ev[k, 0]] * sv[r, ev[k, 1]]
            out[r] = e
    return out_arr
