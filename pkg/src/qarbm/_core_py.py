"""Pure-numpy implementations of the numerical core.

Fallback backend; `qarbm._core` (Cython) implements the same four functions with
identical signatures and semantics. Enumeration routines index visible states by
the integer whose bit i holds (v_i + 1) / 2.
"""

import numpy as np

_BLOCK = 1 << 16


def _spin_block(start, stop, n):
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return (bits * 2.0 - 1.0)


def _log2cosh(a):
    # log(2 cosh a) = |a| + log1p(exp(-2|a|)), stable for all a
    aa = np.abs(a)
    return aa + np.log1p(np.exp(-2.0 * aa))


def visible_logweights(w, bv, bh):
    """Unnormalized log-weights of every visible configuration.

    logw[s] = bv . v(s) + sum_j log(2 cosh(bh_j + sum_i v_i(s) w_ij))
    """
    n = w.shape[0]
    total = 1 << n
    out = np.empty(total)
    for start in range(0, total, _BLOCK):
        stop = min(start + _BLOCK, total)
        v = _spin_block(start, stop, n)
        act = v @ w + bh
        out[start:stop] = v @ bv + _log2cosh(act).sum(axis=1)
    return out


def visible_moments(w, bv, bh):
    """Exact Boltzmann averages by visible enumeration.

    Returns (logz, <v_i>, <u_j>, <v_i u_j>) with the hidden layer integrated out
    analytically (<u_j | v> = tanh of its activation).
    """
    n, m = w.shape
    total = 1 << n
    logw = visible_logweights(w, bv, bh)
    peak = logw.max()
    z = np.exp(logw - peak).sum()
    logz = peak + np.log(z)
    ev = np.zeros(n)
    eh = np.zeros(m)
    evh = np.zeros((n, m))
    for start in range(0, total, _BLOCK):
        stop = min(start + _BLOCK, total)
        v = _spin_block(start, stop, n)
        t = np.tanh(v @ w + bh)
        p = np.exp(logw[start:stop] - logz)
        vp = v * p[:, None]
        ev += vp.sum(axis=0)
        eh += t.T @ p
        evh += vp.T @ t
    return logz, ev, eh, evh


def gibbs_halfstep(src, w, bias, u):
    """Sample one layer given the other.

    P(s_j = +1 | src) = 1 / (1 + exp(-2 a_j)), a_j = bias_j + sum_i src_i w_ij.
    `u` holds uniform variates of the destination shape; returns int8 spins.
    """
    act = src.astype(np.float64) @ w + bias
    p = 1.0 / (1.0 + np.exp(-2.0 * act))
    return np.where(u < p, 1, -1).astype(np.int8)


def batch_energies(spins, edge_idx, edge_coeff, fields):
    """sum_e coeff_e s_a s_b + sum_v fields_v s_v for each row of `spins`."""
    rows = spins.shape[0]
    out = np.empty(rows)
    for start in range(0, rows, 16384):
        stop = min(start + 16384, rows)
        s = spins[start:stop].astype(np.float64)
        e = s @ fields
        if len(edge_idx):
            e += (s[:, edge_idx[:, 0]] * s[:, edge_idx[:, 1]]) @ edge_coeff
        out[start:stop] = e
    return out
