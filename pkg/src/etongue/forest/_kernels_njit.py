"""Compiled forest kernels (numba).

Structure-of-arrays trees: node i is a split when node_feature[i] >= 0
(go left iff x[feature] <= threshold), otherwise a leaf. node_counts
keeps per-class training counts for every node; leaf rows of it are what
predictions average. All randomness is the MINSTD walk from _rng.py,
inlined below so the numpy backend can replay it integer for integer.

Split quality is tracked as sum over children of (sum of squared class
counts) / child size. Maximizing that is exactly minimizing the
count-weighted Gini impurity, but it stays in integer arithmetic until
one final division, which is what makes cross-backend bit-equality
possible. Candidate thresholds are midpoints between consecutive
distinct sorted values; ties on the score keep the first candidate in
(feature, threshold) order, features having been sorted ascending.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import _rng

stream_state = njit(cache=True)(_rng.stream_state)


@njit(cache=True)
def _sort_pairs(vals, labs, n, stk_lo, stk_hi):
    # iterative quicksort on vals[:n] with labs carried along;
    # median-of-3 pivot, insertion sort below 16, smaller side first
    top = 1
    stk_lo[0] = 0
    stk_hi[0] = n - 1
    while top > 0:
        top -= 1
        lo = stk_lo[top]
        hi = stk_hi[top]
        while lo < hi:
            if hi - lo < 16:
                for i in range(lo + 1, hi + 1):
                    v = vals[i]
                    lab = labs[i]
                    j = i - 1
                    while j >= lo and vals[j] > v:
                        vals[j + 1] = vals[j]
                        labs[j + 1] = labs[j]
                        j -= 1
                    vals[j + 1] = v
                    labs[j + 1] = lab
                break
            mid = (lo + hi) // 2
            if vals[mid] < vals[lo]:
                vals[lo], vals[mid] = vals[mid], vals[lo]
                labs[lo], labs[mid] = labs[mid], labs[lo]
            if vals[hi] < vals[lo]:
                vals[lo], vals[hi] = vals[hi], vals[lo]
                labs[lo], labs[hi] = labs[hi], labs[lo]
            if vals[hi] < vals[mid]:
                vals[mid], vals[hi] = vals[hi], vals[mid]
                labs[mid], labs[hi] = labs[hi], labs[mid]
            pivot = vals[mid]
            i = lo
            j = hi
            while i <= j:
                while vals[i] < pivot:
                    i += 1
                while vals[j] > pivot:
                    j -= 1
                if i <= j:
                    vals[i], vals[j] = vals[j], vals[i]
                    labs[i], labs[j] = labs[j], labs[i]
                    i += 1
                    j -= 1
            if j - lo < hi - i:
                if i < hi:
                    stk_lo[top] = i
                    stk_hi[top] = hi
                    top += 1
                hi = j
            else:
                if lo < j:
                    stk_lo[top] = lo
                    stk_hi[top] = j
                    top += 1
                lo = i


@njit(cache=True)
def grow_tree(
    X,
    y,
    n_classes,
    min_leaf,
    max_depth,
    mtry,
    use_bootstrap,
    state,
    node_feature,
    node_thresh,
    node_left,
    node_right,
    node_counts,
    imp,
):
    """Grow one tree into the preallocated node arrays.

    Returns (n_nodes, state). Node arrays must have at least 2*n rows.
    imp accumulates raw importance: (split score - parent measure) / n
    per split, caller normalizes.
    """
    n = X.shape[0]
    p = X.shape[1]

    samples = np.empty(n, np.int32)
    if use_bootstrap == 1:
        for i in range(n):
            state = (48271 * state) % 2147483647
            samples[i] = (state - 1) % n
    else:
        for i in range(n):
            samples[i] = i

    vals = np.empty(n, np.float64)
    labs = np.empty(n, np.int32)
    tmp_l = np.empty(n, np.int32)
    tmp_r = np.empty(n, np.int32)
    chosen = np.empty(p, np.int64)
    cntl = np.empty(n_classes, np.int64)
    stack = np.empty((n + 2, 4), np.int64)
    stk_lo = np.empty(64, np.int64)
    stk_hi = np.empty(64, np.int64)

    m = mtry
    if m > p:
        m = p

    n_nodes = 1
    stack[0, 0] = 0  # node id
    stack[0, 1] = 0  # start in samples
    stack[0, 2] = n  # end in samples
    stack[0, 3] = 0  # depth
    top = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n_node = end - start

        for c in range(n_classes):
            node_counts[node, c] = 0
        for i in range(start, end):
            node_counts[node, y[samples[i]]] += 1
        ssq_p = np.int64(0)
        max_count = np.int64(0)
        for c in range(n_classes):
            cc = node_counts[node, c]
            ssq_p += cc * cc
            if cc > max_count:
                max_count = cc

        node_feature[node] = -1
        node_thresh[node] = 0.0
        node_left[node] = -1
        node_right[node] = -1

        if max_count == n_node or n_node < 2 * min_leaf or n_node < 2:
            continue
        if max_depth > 0 and depth >= max_depth:
            continue

        # Floyd's sample of m distinct feature indices, then sorted
        cnt = 0
        for j in range(p - m, p):
            state = (48271 * state) % 2147483647
            t = (state - 1) % (j + 1)
            dup = False
            for k in range(cnt):
                if chosen[k] == t:
                    dup = True
                    break
            if dup:
                chosen[cnt] = j
            else:
                chosen[cnt] = t
            cnt += 1
        for a in range(1, m):
            v = chosen[a]
            b = a - 1
            while b >= 0 and chosen[b] > v:
                chosen[b + 1] = chosen[b]
                b -= 1
            chosen[b + 1] = v

        parent_measure = ssq_p / n_node
        best_score = -1.0
        best_feat = -1
        best_thr = 0.0
        for fi in range(m):
            f = chosen[fi]
            for i in range(n_node):
                s = samples[start + i]
                vals[i] = X[s, f]
                labs[i] = y[s]
            _sort_pairs(vals, labs, n_node, stk_lo, stk_hi)
            if vals[0] == vals[n_node - 1]:
                continue
            for c in range(n_classes):
                cntl[c] = 0
            ssq_l = np.int64(0)
            ssq_r = ssq_p
            n_l = np.int64(0)
            for i in range(n_node - 1):
                c = labs[i]
                ssq_l += 2 * cntl[c] + 1
                ssq_r += 1 - 2 * (node_counts[node, c] - cntl[c])
                cntl[c] += 1
                n_l += 1
                if vals[i] == vals[i + 1]:
                    continue
                n_r = n_node - n_l
                if n_l < min_leaf or n_r < min_leaf:
                    continue
                score = ssq_l / n_l + ssq_r / n_r
                if score > best_score:
                    best_score = score
                    best_feat = f
                    best_thr = (vals[i] + vals[i + 1]) * 0.5

        if best_feat < 0 or not best_score > parent_measure:
            continue

        # stable partition by x[best_feat] <= best_thr
        nl = 0
        nr = 0
        for i in range(start, end):
            s = samples[i]
            if X[s, best_feat] <= best_thr:
                tmp_l[nl] = s
                nl += 1
            else:
                tmp_r[nr] = s
                nr += 1
        for i in range(nl):
            samples[start + i] = tmp_l[i]
        for i in range(nr):
            samples[start + nl + i] = tmp_r[i]

        imp[best_feat] += (best_score - parent_measure) / n

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        node_feature[node] = best_feat
        node_thresh[node] = best_thr
        node_left[node] = left_id
        node_right[node] = right_id
        stack[top, 0] = right_id
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1

    return n_nodes, state


@njit(cache=True)
def apply_tree(node_feature, node_thresh, node_left, node_right, x):
    node = 0
    while node_feature[node] >= 0:
        if x[node_feature[node]] <= node_thresh[node]:
            node = node_left[node]
        else:
            node = node_right[node]
    return node


@njit(cache=True)
def apply_tree_batch(node_feature, node_thresh, node_left, node_right, X, out):
    for r in range(X.shape[0]):
        node = 0
        while node_feature[node] >= 0:
            if X[r, node_feature[node]] <= node_thresh[node]:
                node = node_left[node]
            else:
                node = node_right[node]
        out[r] = node


@njit(cache=True)
def loocv_predict(X, y, n_classes, n_trees, mtry, min_leaf, max_depth, use_bootstrap, base_seed):
    """Leave-one-out class probabilities, shape (n, n_classes).

    Fold i trains a fresh forest on everything but row i with seed
    base_seed + i and averages the held-out row's leaf distributions.
    """
    n = X.shape[0]
    p = X.shape[1]
    proba = np.zeros((n, n_classes), np.float64)

    Xf = np.empty((n - 1, p), np.float64)
    yf = np.empty(n - 1, np.int32)
    max_nodes = 2 * (n - 1) + 1
    node_feature = np.empty(max_nodes, np.int32)
    node_thresh = np.empty(max_nodes, np.float64)
    node_left = np.empty(max_nodes, np.int32)
    node_right = np.empty(max_nodes, np.int32)
    node_counts = np.empty((max_nodes, n_classes), np.int64)
    imp_sink = np.zeros(p, np.float64)

    for fold in range(n):
        k = 0
        for i in range(n):
            if i == fold:
                continue
            for j in range(p):
                Xf[k, j] = X[i, j]
            yf[k] = y[i]
            k += 1
        fold_seed = base_seed + fold
        for t in range(n_trees):
            state = stream_state(fold_seed, t)
            n_nodes, state = grow_tree(
                Xf,
                yf,
                n_classes,
                min_leaf,
                max_depth,
                mtry,
                use_bootstrap,
                state,
                node_feature,
                node_thresh,
                node_left,
                node_right,
                node_counts,
                imp_sink,
            )
            leaf = apply_tree(node_feature, node_thresh, node_left, node_right, X[fold])
            total = np.int64(0)
            for c in range(n_classes):
                total += node_counts[leaf, c]
            for c in range(n_classes):
                proba[fold, c] += node_counts[leaf, c] / total
        for c in range(n_classes):
            proba[fold, c] /= n_trees
    return proba
