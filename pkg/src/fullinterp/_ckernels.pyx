# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled forest kernels; bit-identical to ``_pykernels``."""
import numpy as np

cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint64_t
from libc.stdlib cimport free, malloc, qsort

cnp.import_array()


cdef struct Item:
    double v
    int64_t wp
    int64_t wn


cdef int _cmp_item(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const Item*>a).v
    cdef double y = (<const Item*>b).v
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


cdef inline uint64_t _splitmix(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef struct Builder:
    const double* X
    const int64_t* wpos
    const int64_t* wneg
    Py_ssize_t n
    Py_ssize_t d
    int max_depth
    int64_t min_leaf
    int n_sub
    uint64_t rng
    int64_t* rows
    int64_t* scratch
    Item* items
    Py_ssize_t* perm
    Py_ssize_t cap
    Py_ssize_t count
    int32_t* feature
    double* threshold
    int32_t* left
    int32_t* right
    int64_t* npos
    int64_t* nneg


cdef Py_ssize_t _grow(Builder* b, Py_ssize_t lo, Py_ssize_t hi, int depth) noexcept nogil:
    cdef Py_ssize_t node = b.count
    cdef Py_ssize_t i, j, k, f, fi, tmp, nl
    cdef int64_t p = 0, q = 0, total, lp, ln, rp, rn, lw, rw
    cdef double best, score, a, c, thr, best_thr = 0.0
    cdef Py_ssize_t best_f = -1
    cdef const double* X = b.X
    cdef Py_ssize_t d = b.d

    b.count += 1
    for i in range(lo, hi):
        p += b.wpos[b.rows[i]]
        q += b.wneg[b.rows[i]]
    b.feature[node] = -1
    b.threshold[node] = 0.0
    b.left[node] = -1
    b.right[node] = -1
    b.npos[node] = p
    b.nneg[node] = q
    total = p + q
    if depth >= b.max_depth or p == 0 or q == 0 or total < 2 * b.min_leaf:
        return node

    for j in range(d):
        b.perm[j] = j
    for j in range(b.n_sub):
        k = j + <Py_ssize_t>(_splitmix(&b.rng) % <uint64_t>(d - j))
        tmp = b.perm[j]
        b.perm[j] = b.perm[k]
        b.perm[k] = tmp

    best = (<double>(p * p + q * q)) / <double>total
    for fi in range(b.n_sub):
        f = b.perm[fi]
        for i in range(lo, hi):
            b.items[i - lo].v = X[b.rows[i] * d + f]
            b.items[i - lo].wp = b.wpos[b.rows[i]]
            b.items[i - lo].wn = b.wneg[b.rows[i]]
        qsort(b.items, hi - lo, sizeof(Item), _cmp_item)
        lp = 0
        ln = 0
        for i in range(hi - lo - 1):
            lp += b.items[i].wp
            ln += b.items[i].wn
            if not (b.items[i].v < b.items[i + 1].v):
                continue
            lw = lp + ln
            rp = p - lp
            rn = q - ln
            rw = rp + rn
            if lw < b.min_leaf or rw < b.min_leaf:
                continue
            score = (<double>(lp * lp + ln * ln)) / <double>lw + (<double>(rp * rp + rn * rn)) / <double>rw
            if score > best:
                best = score
                best_f = f
                a = b.items[i].v
                c = b.items[i + 1].v
                thr = (a + c) / 2.0
                if not thr < c:
                    thr = a
                best_thr = thr

    if best_f < 0:
        return node

    # stable partition of rows[lo:hi] by x <= thr
    nl = 0
    k = 0
    for i in range(lo, hi):
        if X[b.rows[i] * d + best_f] <= best_thr:
            b.rows[lo + nl] = b.rows[i]
            nl += 1
        else:
            b.scratch[k] = b.rows[i]
            k += 1
    for i in range(k):
        b.rows[lo + nl + i] = b.scratch[i]

    b.feature[node] = <int32_t>best_f
    b.threshold[node] = best_thr
    b.left[node] = <int32_t>_grow(b, lo, lo + nl, depth + 1)
    b.right[node] = <int32_t>_grow(b, lo + nl, hi, depth + 1)
    return node


def build_tree(X, y, w, int max_depth, int min_leaf, int n_sub, seed):
    """Grow one Gini tree; see ``_pykernels.build_tree``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xc.shape[0]
    cdef Py_ssize_t d = Xc.shape[1]
    yv = np.asarray(y)
    wv = np.asarray(w, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] wpos = np.ascontiguousarray(np.where(yv == 1, wv, 0), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] wneg = np.ascontiguousarray(np.where(yv == 1, 0, wv), dtype=np.int64)
    cdef Py_ssize_t cap = (1 << (max_depth + 1)) - 1
    if cap > 2 * n:
        cap = 2 * n + 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] feature = np.empty(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] threshold = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] left = np.empty(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] right = np.empty(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] npos = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nneg = np.empty(cap, dtype=np.int64)
    cdef Builder b
    cdef Py_ssize_t i
    if n == 0 or d == 0:
        raise ValueError("build_tree needs at least one row and one feature")
    b.X = <const double*>&Xc[0, 0]
    b.wpos = <const int64_t*>&wpos[0]
    b.wneg = <const int64_t*>&wneg[0]
    b.n = n
    b.d = d
    b.max_depth = max_depth
    b.min_leaf = min_leaf
    b.n_sub = n_sub
    b.rng = <uint64_t>int(seed)
    b.cap = cap
    b.count = 0
    b.feature = <int32_t*>&feature[0]
    b.threshold = <double*>&threshold[0]
    b.left = <int32_t*>&left[0]
    b.right = <int32_t*>&right[0]
    b.npos = <int64_t*>&npos[0]
    b.nneg = <int64_t*>&nneg[0]
    b.rows = <int64_t*>malloc(max(n, 1) * sizeof(int64_t))
    b.scratch = <int64_t*>malloc(max(n, 1) * sizeof(int64_t))
    b.items = <Item*>malloc(max(n, 1) * sizeof(Item))
    b.perm = <Py_ssize_t*>malloc(max(d, 1) * sizeof(Py_ssize_t))
    if b.rows == NULL or b.scratch == NULL or b.items == NULL or b.perm == NULL:
        free(b.rows); free(b.scratch); free(b.items); free(b.perm)
        raise MemoryError()
    try:
        for i in range(n):
            b.rows[i] = i
        with nogil:
            _grow(&b, 0, n, 0)
    finally:
        free(b.rows); free(b.scratch); free(b.items); free(b.perm)
    m = b.count
    return feature[:m].copy(), threshold[:m].copy(), left[:m].copy(), right[:m].copy(), npos[:m].copy(), nneg[:m].copy()


def predict_forest(X, feature, threshold, left, right, value, roots):
    """Mean leaf value over trees; see ``_pykernels.predict_forest``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int32_t[::1] feat = np.ascontiguousarray(feature, dtype=np.int32)
    cdef cnp.float64_t[::1] thr = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef cnp.int32_t[::1] lft = np.ascontiguousarray(left, dtype=np.int32)
    cdef cnp.int32_t[::1] rgt = np.ascontiguousarray(right, dtype=np.int32)
    cdef cnp.float64_t[::1] val = np.ascontiguousarray(value, dtype=np.float64)
    cdef cnp.int64_t[::1] rts = np.ascontiguousarray(roots, dtype=np.int64)
    cdef Py_ssize_t m = Xc.shape[0]
    cdef Py_ssize_t d = Xc.shape[1]
    cdef Py_ssize_t T = rts.shape[0]
    out = np.zeros(m, dtype=np.float64)
    cdef cnp.float64_t[::1] acc = out
    cdef Py_ssize_t i, t, node
    cdef const double* row
    if m == 0:
        return out
    with nogil:
        for i in range(m):
            row = &Xc[i, 0]
            for t in range(T):
                node = rts[t]
                while feat[node] >= 0:
                    if row[feat[node]] <= thr[node]:
                        node = lft[node]
                    else:
                        node = rgt[node]
                acc[i] += val[node]
            acc[i] = acc[i] / T
    return out
