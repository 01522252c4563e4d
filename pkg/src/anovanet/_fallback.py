"""Pure numpy implementations of the jet-algebra kernels.

Same contracts as the compiled ``_kernels`` module. The per-row recursion is
vectorised over rows and over all masks sharing a top bit, so the Python
loop count is O(k^2) per call instead of O(3^k).
"""

from functools import lru_cache

import numpy as np


class _Block:
    __slots__ = ("lo", "hi", "up", "v", "w", "starts", "by_v", "v_uniq",
                 "v_starts", "by_w", "w_uniq", "w_starts")


def _groups(keys):
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    uniq, starts = np.unique(sorted_keys, return_index=True)
    return order, uniq, starts


@lru_cache(maxsize=None)
def _blocks(k):
    """Submask pair tables, one per top bit."""
    out = []
    for i in range(k):
        hi = 1 << i
        ups, vs = [], []
        for up in range(hi):
            v = up
            while True:
                ups.append(up)
                vs.append(v)
                if v == 0:
                    break
                v = (v - 1) & up
        b = _Block()
        b.lo, b.hi = hi, 2 * hi
        b.up = np.asarray(ups, dtype=np.intp)
        b.v = np.asarray(vs, dtype=np.intp)
        b.w = (b.up ^ b.v) | hi
        b.starts = np.flatnonzero(np.r_[True, np.diff(b.up) != 0])
        b.by_v, b.v_uniq, b.v_starts = _groups(b.v)
        b.by_w, b.w_uniq, b.w_starts = _groups(b.w)
        out.append(b)
    return tuple(out)


def _check(derivs, a):
    derivs = np.ascontiguousarray(derivs, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    k = derivs.shape[1] - 1
    if (1 << k) != a.shape[1] or derivs.shape[0] != a.shape[0]:
        raise ValueError("derivs must carry k+1 columns for 2**k coefficients")
    return derivs, a, k


def _table(derivs, a, k):
    n, M = a.shape
    F = np.zeros((k + 1, n, M))
    F[:, :, 0] = derivs.T
    for b in _blocks(k):
        aw = a[:, b.w]
        for m in range(k):
            prod = F[m + 1][:, b.v] * aw
            F[m, :, b.lo:b.hi] = np.add.reduceat(prod, b.starts, axis=1)
    return F


def lift_forward(derivs, a):
    derivs, a, k = _check(derivs, a)
    return np.ascontiguousarray(_table(derivs, a, k)[0])


def lift_backward(derivs, a, gout):
    derivs, a, k = _check(derivs, a)
    F = _table(derivs, a, k)
    G = np.zeros_like(F)
    G[0] = gout
    ga = np.zeros_like(a)
    for b in reversed(_blocks(k)):
        aw = a[:, b.w]
        for m in range(k):
            g = G[m][:, b.lo:b.hi][:, b.up]
            to_v = (g * aw)[:, b.by_v]
            G[m + 1][:, b.v_uniq] += np.add.reduceat(to_v, b.v_starts, axis=1)
            to_w = (g * F[m + 1][:, b.v])[:, b.by_w]
            ga[:, b.w_uniq] += np.add.reduceat(to_w, b.w_starts, axis=1)
    return np.ascontiguousarray(G[:, :, 0].T), ga


@lru_cache(maxsize=None)
def _mul_pairs(k):
    s_idx, u_idx = [], []
    for s in range(1 << k):
        u = s
        while True:
            s_idx.append(s)
            u_idx.append(u)
            if u == 0:
                break
            u = (u - 1) & s
    s_arr = np.asarray(s_idx, dtype=np.intp)
    u_arr = np.asarray(u_idx, dtype=np.intp)
    starts = np.flatnonzero(np.r_[True, np.diff(s_arr) != 0])
    return u_arr, s_arr ^ u_arr, starts


def subset_mul(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    k = a.shape[1].bit_length() - 1
    u, rest, starts = _mul_pairs(k)
    return np.add.reduceat(a[:, u] * b[:, rest], starts, axis=1)
