"""Compiled CART growth kernel used by :mod:`winleak.forest`."""

from __future__ import annotations

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _next(state):
    # splitmix64; state is a 1-element uint64 array
    state[0] = state[0] + _GAMMA
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _below(state, k):
    return np.int64(_next(state) % np.uint64(k))


@njit(cache=True)
def grow(X, y, n_classes, max_depth, min_leaf, mtry, seed):
    n, n_features = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, n_classes), dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)

    idx = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    lc = np.zeros(n_classes, dtype=np.int64)
    rc = np.zeros(n_classes, dtype=np.int64)
    pool = np.empty(n_features, dtype=np.int64)

    for i in range(n):
        counts[0, y[i]] += 1
    n_nodes = 1
    # stack entries: node, lo, hi, depth
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        lo = stack[top, 1]
        hi = stack[top, 2]
        depth = stack[top, 3]
        m = hi - lo
        distinct = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                distinct += 1
        if depth >= max_depth or m < 2 * min_leaf or distinct <= 1:
            continue

        n_pool = 0
        for f in range(n_features):
            vmin = X[idx[lo], f]
            vmax = vmin
            for r in range(lo + 1, hi):
                v = X[idx[r], f]
                if v < vmin:
                    vmin = v
                elif v > vmax:
                    vmax = v
            if vmax > vmin:
                pool[n_pool] = f
                n_pool += 1
        if n_pool == 0:
            continue
        n_cand = n_pool
        if n_pool > mtry:
            # partial Fisher-Yates: first mtry slots become the sample
            for j in range(mtry):
                r = j + _below(state, n_pool - j)
                t = pool[j]
                pool[j] = pool[r]
                pool[r] = t
            n_cand = mtry
        cand = np.sort(pool[:n_cand])

        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        for ci in range(n_cand):
            f = cand[ci]
            for r in range(m):
                vals[r] = X[idx[lo + r], f]
            order = np.argsort(vals[:m], kind="mergesort")
            lc[:] = 0
            for c in range(n_classes):
                rc[c] = counts[node, c]
            sl2 = 0
            sr2 = 0
            for c in range(n_classes):
                sr2 += rc[c] * rc[c]
            for p in range(m - 1):
                c = y[idx[lo + order[p]]]
                sl2 += 2 * lc[c] + 1
                lc[c] += 1
                sr2 -= 2 * rc[c] - 1
                rc[c] -= 1
                nl = p + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                v0 = vals[order[p]]
                v1 = vals[order[p + 1]]
                if not v1 > v0:
                    continue
                score = sl2 / nl + sr2 / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    thr = (v0 + v1) / 2.0
                    if not thr < v1:
                        thr = v0
                    best_thr = thr
        if best_f < 0:
            continue

        # stable partition of idx[lo:hi]
        nl = 0
        nr = 0
        for r in range(lo, hi):
            if X[idx[r], best_f] <= best_thr:
                idx[lo + nl] = idx[r]
                nl += 1
            else:
                buf[nr] = idx[r]
                nr += 1
        for r in range(nr):
            idx[lo + nl + r] = buf[r]

        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = li
        right[node] = ri
        for r in range(lo, lo + nl):
            counts[li, y[idx[r]]] += 1
        for r in range(lo + nl, hi):
            counts[ri, y[idx[r]]] += 1
        stack[top, 0] = ri
        stack[top, 1] = lo + nl
        stack[top, 2] = hi
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = li
        stack[top, 1] = lo
        stack[top, 2] = lo + nl
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
    )
