"""Compiled inner loops for exact greedy split search."""
import numpy as np
from numba import njit


@njit(cache=True)
def boosted_best_split(lists, vals, g, h, lam, mcw):
    """Scan presorted index lists (F, m); returns (gain, feature, position).

    A split at ``position`` sends the first position+1 entries of the
    feature's list left. Strict ``>`` keeps the first (lowest feature,
    lowest threshold) candidate on ties.
    """
    n_feat, m = lists.shape
    G = 0.0
    H = 0.0
    for j in range(m):
        G += g[lists[0, j]]
        H += h[lists[0, j]]
    parent = G * G / (H + lam)
    best_gain = -np.inf
    best_f = -1
    best_pos = -1
    for f in range(n_feat):
        GL = 0.0
        HL = 0.0
        for j in range(m - 1):
            idx = lists[f, j]
            GL += g[idx]
            HL += h[idx]
            if vals[f, j + 1] <= vals[f, j]:
                continue
            HR = H - HL
            if HL < mcw or HR < mcw:
                continue
            GR = G - GL
            gain = GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_pos = j
    return best_gain, best_f, best_pos


@njit(cache=True)
def node_stats(members, g, h):
    G = 0.0
    H = 0.0
    for j in range(members.shape[0]):
        G += g[members[j]]
        H += h[members[j]]
    return G, H


@njit(cache=True)
def partition(lists, vals, go_left, n_left):
    """Stable split of every feature's sorted list by the boolean ``go_left`` (indexed by row)."""
    n_feat, m = lists.shape
    ll = np.empty((n_feat, n_left), dtype=lists.dtype)
    lv = np.empty((n_feat, n_left), dtype=vals.dtype)
    rl = np.empty((n_feat, m - n_left), dtype=lists.dtype)
    rv = np.empty((n_feat, m - n_left), dtype=vals.dtype)
    for f in range(n_feat):
        a = 0
        b = 0
        for j in range(m):
            idx = lists[f, j]
            if go_left[idx]:
                ll[f, a] = idx
                lv[f, a] = vals[f, j]
                a += 1
            else:
                rl[f, b] = idx
                rv[f, b] = vals[f, j]
                b += 1
    return ll, lv, rl, rv


@njit(cache=True)
def gini_best_split(X, members, feats, y, min_leaf):
    """Lowest weighted child Gini n_l*G_l + n_r*G_r over the candidate features.

    ``feats`` must be ascending so ties resolve to the lowest feature index.
    Returns (score, feature, lo, hi) where the threshold lies between lo and hi;
    feature is -1 when no admissible split exists.
    """
    m = members.shape[0]
    total_pos = 0.0
    for j in range(m):
        total_pos += y[members[j]]
    best = np.inf
    best_f = -1
    best_lo = 0.0
    best_hi = 0.0
    col = np.empty(m)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for j in range(m):
            col[j] = X[members[j], f]
        order = np.argsort(col, kind="mergesort")
        pos_left = 0.0
        for j in range(m - 1):
            pos_left += y[members[order[j]]]
            lo = col[order[j]]
            hi = col[order[j + 1]]
            if hi <= lo:
                continue
            nl = j + 1.0
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            pr = total_pos - pos_left
            score = (nl - (pos_left * pos_left + (nl - pos_left) ** 2) / nl
                     + nr - (pr * pr + (nr - pr) ** 2) / nr)
            if score < best:
                best = score
                best_f = f
                best_lo = lo
                best_hi = hi
    return best, best_f, best_lo, best_hi
