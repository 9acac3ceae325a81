"""Pure-numpy forest kernels, interchangeable with the compiled ones.

Same contract as _kernels_njit, same MINSTD draws, same candidate
ordering and tie rules, so models and LOOCV probabilities come out
bit-identical. Split bookkeeping stays in int64 (cumulative class
counts and sums of squares); only the final score involves floats, and
those are the same IEEE-754 divisions the compiled path performs.

Expect it to be much slower per tree: the value of this module is
having a dependency-light fallback plus an independent implementation
to hold the compiled one against.
"""

from __future__ import annotations

import numpy as np

from ._rng import stream_state


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
    """Vectorized twin of the compiled grow_tree. Returns (n_nodes, state)."""
    n, p = X.shape
    state = int(state)

    if use_bootstrap == 1:
        samples = np.empty(n, np.intp)
        for i in range(n):
            state = (48271 * state) % 2147483647
            samples[i] = (state - 1) % n
    else:
        samples = np.arange(n, dtype=np.intp)

    m = min(int(mtry), p)
    n_nodes = 1
    stack = [(0, samples, 0)]  # (node id, row indices, depth)
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        n_node = idx.size
        cnt = np.bincount(yn, minlength=n_classes).astype(np.int64)
        node_counts[node, :] = cnt
        ssq_p = int((cnt * cnt).sum())

        node_feature[node] = -1
        node_thresh[node] = 0.0
        node_left[node] = -1
        node_right[node] = -1

        if int(cnt.max()) == n_node or n_node < 2 * min_leaf or n_node < 2:
            continue
        if max_depth > 0 and depth >= max_depth:
            continue

        chosen = []
        for j in range(p - m, p):
            state = (48271 * state) % 2147483647
            t = (state - 1) % (j + 1)
            chosen.append(j if t in chosen else t)
        chosen.sort()

        parent_measure = ssq_p / n_node
        best_score = -1.0
        best_feat = -1
        best_thr = 0.0
        Xn = X[idx]
        positions = np.arange(1, n_node, dtype=np.int64)
        for f in chosen:
            v = Xn[:, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            if vs[0] == vs[-1]:
                continue
            ls = yn[order]
            onehot = np.zeros((n_node, n_classes), np.int64)
            onehot[np.arange(n_node), ls] = 1
            cum = onehot.cumsum(axis=0)
            cnt_l = cum[:-1]                  # counts left of each boundary
            n_l = positions
            n_r = n_node - n_l
            ssq_l = (cnt_l * cnt_l).sum(axis=1)
            cnt_r = cnt[None, :] - cnt_l
            ssq_r = (cnt_r * cnt_r).sum(axis=1)
            valid = (vs[:-1] != vs[1:]) & (n_l >= min_leaf) & (n_r >= min_leaf)
            if not valid.any():
                continue
            score = np.where(valid, ssq_l / n_l + ssq_r / n_r, -1.0)
            jbest = int(np.argmax(score))
            sc = float(score[jbest])
            if sc > best_score:
                best_score = sc
                best_feat = int(f)
                best_thr = float((vs[jbest] + vs[jbest + 1]) * 0.5)

        if best_feat < 0 or not best_score > parent_measure:
            continue

        mask = X[idx, best_feat] <= best_thr
        left_idx = idx[mask]
        right_idx = idx[~mask]
        imp[best_feat] += (best_score - parent_measure) / n

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        node_feature[node] = best_feat
        node_thresh[node] = best_thr
        node_left[node] = left_id
        node_right[node] = right_id
        stack.append((right_id, right_idx, depth + 1))
        stack.append((left_id, left_idx, depth + 1))

    return n_nodes, state


def apply_tree(node_feature, node_thresh, node_left, node_right, x):
    node = 0
    while node_feature[node] >= 0:
        node = node_left[node] if x[node_feature[node]] <= node_thresh[node] else node_right[node]
    return int(node)


def apply_tree_batch(node_feature, node_thresh, node_left, node_right, X, out):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = node_feature[node] >= 0
    while active.any():
        rows = np.nonzero(active)[0]
        cur = node[rows]
        feats = node_feature[cur]
        go_left = X[rows, feats] <= node_thresh[cur]
        node[rows] = np.where(go_left, node_left[cur], node_right[cur])
        active[rows] = node_feature[node[rows]] >= 0
    out[:] = node


def loocv_predict(X, y, n_classes, n_trees, mtry, min_leaf, max_depth, use_bootstrap, base_seed):
    """Leave-one-out probabilities; the slow-backend twin of the compiled one."""
    n, p = X.shape
    proba = np.zeros((n, n_classes), np.float64)
    max_nodes = 2 * (n - 1) + 1
    node_feature = np.empty(max_nodes, np.int32)
    node_thresh = np.empty(max_nodes, np.float64)
    node_left = np.empty(max_nodes, np.int32)
    node_right = np.empty(max_nodes, np.int32)
    node_counts = np.empty((max_nodes, n_classes), np.int64)
    imp_sink = np.zeros(p, np.float64)

    for fold in range(n):
        Xf = np.delete(X, fold, axis=0)
        yf = np.delete(y, fold)
        fold_seed = base_seed + fold
        for t in range(n_trees):
            state = stream_state(fold_seed, t)
            _, state = grow_tree(
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
            counts = node_counts[leaf]
            proba[fold] += counts / counts.sum()
        proba[fold] /= n_trees
    return proba
