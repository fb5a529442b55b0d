"""Pure numpy implementation of the forest kernels.

This is the fallback for ``_ckernels`` and must stay bit-identical to it:
same node order (preorder), same random draws, same split scores.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    """Tiny counter-based generator shared by both kernel implementations."""

    def __init__(self, state: int):
        self.state = int(state) & _MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def build_tree(X, y, w, max_depth, min_leaf, n_sub, seed):
    """Grow one Gini tree on weighted rows.

    ``X`` is ``(n, d)`` float64, ``y`` int8 labels (1 positive), ``w`` int64
    multiplicities.  Returns ``(feature, threshold, left, right, npos, nneg)``
    arrays in preorder; ``feature == -1`` marks a leaf.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    wpos = np.where(y == 1, w, 0).astype(np.int64)
    wneg = np.where(y == 1, 0, w).astype(np.int64)
    rng = SplitMix64(seed)
    feature, threshold, left, right, npos, nneg = [], [], [], [], [], []

    def grow(rows, depth):
        node = len(feature)
        p = int(wpos[rows].sum())
        q = int(wneg[rows].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        npos.append(p)
        nneg.append(q)
        total = p + q
        if depth >= max_depth or p == 0 or q == 0 or total < 2 * min_leaf:
            return node
        perm = list(range(d))
        for j in range(n_sub):
            k = j + rng.next() % (d - j)
            perm[j], perm[k] = perm[k], perm[j]
        best = (p * p + q * q) / total
        best_f = -1
        best_thr = 0.0
        for f in perm[:n_sub]:
            vals = X[rows, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            cp = np.cumsum(wpos[rows][order])
            cn = np.cumsum(wneg[rows][order])
            cut = np.nonzero(sv[:-1] < sv[1:])[0]
            if cut.size == 0:
                continue
            lp = cp[cut]
            ln = cn[cut]
            rp = p - lp
            rn = q - ln
            lw = lp + ln
            rw = rp + rn
            ok = (lw >= min_leaf) & (rw >= min_leaf)
            if not ok.any():
                continue
            lw_safe = np.where(lw > 0, lw, 1)
            rw_safe = np.where(rw > 0, rw, 1)
            score = (lp * lp + ln * ln) / lw_safe + (rp * rp + rn * rn) / rw_safe
            score = np.where(ok, score, -np.inf)
            i = int(np.argmax(score))
            if score[i] > best:
                best = float(score[i])
                best_f = f
                a = sv[cut[i]]
                b = sv[cut[i] + 1]
                thr = (a + b) / 2.0
                if not thr < b:
                    thr = a
                best_thr = float(thr)
        if best_f < 0:
            return node
        go_left = X[rows, best_f] <= best_thr
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(npos, dtype=np.int64),
        np.array(nneg, dtype=np.int64),
    )


def predict_forest(X, feature, threshold, left, right, value, roots):
    """Mean leaf value over trees for every row of ``X``.

    Trees are packed into shared node arrays; ``roots[t]`` is tree ``t``'s
    root index.  Tree contributions are summed in tree order.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    m = X.shape[0]
    acc = np.zeros(m)
    rows = np.arange(m)
    for root in roots:
        node = np.full(m, root, dtype=np.int64)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            idx = np.nonzero(inner)[0]
            ni = node[idx]
            go_left = X[rows[idx], f[idx]] <= threshold[ni]
            node[idx] = np.where(go_left, left[ni], right[ni])
        acc += value[node]
    return acc / len(roots)
