"""Regression trees, random forests, and pinball-objective gradient boosting.

Trees are exact-split CART regressors (variance reduction) built by a numba
kernel over flat node arrays. The booster fits each tree to pinball
pseudo-residuals and then refits every leaf to the tau-quantile of the true
residuals in that leaf, stepped by the learning rate.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import ModelError

_U64 = np.uint64


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(state):
    state = state + _U64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return state, z ^ (z >> _U64(31))


@njit(cache=True, nogil=True)
def _build_tree(X, y, rows, max_depth, min_leaf, max_features, seed):
    """Grow one CART regression tree on the given (possibly repeated) rows.

    Returns flat node arrays: feature (-1 marks a leaf), threshold, left,
    right child ids, and leaf/internal mean values.
    """
    n_node_rows = rows.shape[0]
    p = X.shape[1]
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)

    idx = rows.copy()
    scratch = np.empty(n_node_rows, dtype=np.int64)
    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    stack_depth = np.empty(max_nodes, dtype=np.int64)
    top = 0
    stack_node[top] = 0
    stack_start[top] = 0
    stack_end[top] = n_node_rows
    stack_depth[top] = 0
    top += 1
    node_count = 1

    feat_order = np.arange(p)
    rng = _U64(seed) if seed >= 0 else _U64(0)

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        n_node = end - start

        total_sum = 0.0
        total_sq = 0.0
        for i in range(start, end):
            yy = y[idx[i]]
            total_sum += yy
            total_sq += yy * yy
        value[node] = total_sum / n_node

        if depth >= max_depth or n_node < 2 * min_leaf:
            continue
        total_sse = total_sq - total_sum * total_sum / n_node
        if total_sse <= 0.0:
            continue

        m_try = max_features if 0 < max_features < p else p
        if m_try < p:
            # partial Fisher-Yates; keeps the scan order deterministic per seed
            for j in range(m_try):
                rng, draw = _splitmix64(rng)
                k = j + np.int64(draw % _U64(p - j))
                feat_order[j], feat_order[k] = feat_order[k], feat_order[j]

        best_gain = 1e-12
        best_feat = -1
        best_thr = 0.0
        vals = np.empty(n_node, dtype=np.float64)
        ys = np.empty(n_node, dtype=np.float64)
        for fi in range(m_try):
            f = feat_order[fi]
            for i in range(n_node):
                r = idx[start + i]
                vals[i] = X[r, f]
                ys[i] = y[r]
            order = np.argsort(vals, kind="mergesort")
            sum_l = 0.0
            sq_l = 0.0
            for s_pos in range(n_node - 1):
                yy = ys[order[s_pos]]
                sum_l += yy
                sq_l += yy * yy
                v_here = vals[order[s_pos]]
                v_next = vals[order[s_pos + 1]]
                if v_here == v_next:
                    continue
                n_l = s_pos + 1
                n_r = n_node - n_l
                if n_l < min_leaf or n_r < min_leaf:
                    continue
                sum_r = total_sum - sum_l
                sq_r = total_sq - sq_l
                sse = (sq_l - sum_l * sum_l / n_l) + (sq_r - sum_r * sum_r / n_r)
                gain = total_sse - sse
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (v_here + v_next)
        if best_feat < 0:
            continue

        # stable partition: left block keeps rows with value <= threshold
        n_left = 0
        n_right = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_feat] <= best_thr:
                idx[start + n_left] = r
                n_left += 1
            else:
                scratch[n_right] = r
                n_right += 1
        for i in range(n_right):
            idx[start + n_left + i] = scratch[i]

        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = node_count
        right[node] = node_count + 1
        stack_node[top] = node_count
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = node_count + 1
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        node_count += 2

    return feature[:node_count], threshold[:node_count], left[:node_count], right[:node_count], value[:node_count]


@njit(cache=True, nogil=True)
def _build_tree_presorted(X, y, sorted_idx, max_depth, min_leaf):
    """Level-wise CART build over globally presorted feature orders.

    Used by the booster, which grows hundreds of trees on the same rows: the
    per-feature sort happens once per fit instead of once per node. One pass
    per feature per level accumulates running sums for every frontier node
    simultaneously.
    """
    n = y.shape[0]
    p = X.shape[1]
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)

    node_of = np.zeros(n, dtype=np.int64)
    node_count = 1

    tot_n = np.zeros(max_nodes, dtype=np.float64)
    tot_sum = np.zeros(max_nodes, dtype=np.float64)
    tot_sq = np.zeros(max_nodes, dtype=np.float64)
    candidate = np.zeros(max_nodes, dtype=np.bool_)
    best_gain = np.zeros(max_nodes, dtype=np.float64)
    best_feat = np.full(max_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(max_nodes, dtype=np.float64)
    run_n = np.zeros(max_nodes, dtype=np.float64)
    run_sum = np.zeros(max_nodes, dtype=np.float64)
    run_sq = np.zeros(max_nodes, dtype=np.float64)
    last_val = np.zeros(max_nodes, dtype=np.float64)
    has_last = np.zeros(max_nodes, dtype=np.bool_)

    frontier_start = 0
    for _ in range(max_depth):
        frontier_end = node_count
        for node in range(frontier_start, frontier_end):
            tot_n[node] = 0.0
            tot_sum[node] = 0.0
            tot_sq[node] = 0.0
        for i in range(n):
            nd = node_of[i]
            if nd >= frontier_start:
                yy = y[i]
                tot_n[nd] += 1.0
                tot_sum[nd] += yy
                tot_sq[nd] += yy * yy

        any_candidate = False
        for node in range(frontier_start, frontier_end):
            if tot_n[node] > 0:
                value[node] = tot_sum[node] / tot_n[node]
            sse = tot_sq[node] - tot_sum[node] * tot_sum[node] / max(tot_n[node], 1.0)
            ok = tot_n[node] >= 2 * min_leaf and sse > 0.0
            candidate[node] = ok
            best_gain[node] = 1e-12
            best_feat[node] = -1
            if ok:
                any_candidate = True
        if not any_candidate:
            break

        for f in range(p):
            for node in range(frontier_start, frontier_end):
                run_n[node] = 0.0
                run_sum[node] = 0.0
                run_sq[node] = 0.0
                has_last[node] = False
            for k in range(n):
                r = sorted_idx[f, k]
                nd = node_of[r]
                if nd < frontier_start or not candidate[nd]:
                    continue
                v = X[r, f]
                if has_last[nd] and v != last_val[nd]:
                    n_l = run_n[nd]
                    n_r = tot_n[nd] - n_l
                    if n_l >= min_leaf and n_r >= min_leaf:
                        sum_l = run_sum[nd]
                        sq_l = run_sq[nd]
                        sum_r = tot_sum[nd] - sum_l
                        sq_r = tot_sq[nd] - sq_l
                        total_sse = tot_sq[nd] - tot_sum[nd] * tot_sum[nd] / tot_n[nd]
                        sse = (sq_l - sum_l * sum_l / n_l) + (sq_r - sum_r * sum_r / n_r)
                        gain = total_sse - sse
                        if gain > best_gain[nd]:
                            best_gain[nd] = gain
                            best_feat[nd] = f
                            best_thr[nd] = 0.5 * (last_val[nd] + v)
                yy = y[r]
                last_val[nd] = v
                has_last[nd] = True
                run_n[nd] += 1.0
                run_sum[nd] += yy
                run_sq[nd] += yy * yy

        split_any = False
        for node in range(frontier_start, frontier_end):
            if candidate[node] and best_feat[node] >= 0:
                feature[node] = best_feat[node]
                threshold[node] = best_thr[node]
                left[node] = node_count
                right[node] = node_count + 1
                node_count += 2
                split_any = True
        if not split_any:
            break
        for i in range(n):
            nd = node_of[i]
            if nd >= frontier_start and feature[nd] >= 0:
                if X[i, feature[nd]] <= threshold[nd]:
                    node_of[i] = left[nd]
                else:
                    node_of[i] = right[nd]
        frontier_start = frontier_end

    # leaf values for the last frontier
    frontier_end = node_count
    for node in range(frontier_start, frontier_end):
        tot_n[node] = 0.0
        tot_sum[node] = 0.0
    for i in range(n):
        nd = node_of[i]
        if nd >= frontier_start:
            tot_n[nd] += 1.0
            tot_sum[nd] += y[i]
    for node in range(frontier_start, frontier_end):
        if tot_n[node] > 0:
            value[node] = tot_sum[node] / tot_n[node]

    return feature[:node_count], threshold[:node_count], left[:node_count], right[:node_count], value[:node_count]


@njit(cache=True, nogil=True)
def _apply_tree(X, feature, threshold, left, right):
    """Leaf node index for every row."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


class RegressionTree:
    """Thin wrapper over the flat node arrays."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value

    @staticmethod
    def fit(X, y, rows=None, max_depth=6, min_leaf=5, max_features=0, seed=-1):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if rows is None:
            rows = np.arange(len(y), dtype=np.int64)
        arrays = _build_tree(X, y, rows.astype(np.int64), max_depth, min_leaf,
                             max_features, seed)
        return RegressionTree(*arrays)

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_payload(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @staticmethod
    def from_payload(payload):
        return RegressionTree(
            np.asarray(payload["feature"], dtype=np.int64),
            np.asarray(payload["threshold"], dtype=np.float64),
            np.asarray(payload["left"], dtype=np.int64),
            np.asarray(payload["right"], dtype=np.int64),
            np.asarray(payload["value"], dtype=np.float64),
        )


def fit_random_forest(X, y, trees=100, depth=12, min_leaf=5, seed=0):
    """Bootstrap forest of variance-reduction trees, sqrt(p) features per split."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    max_features = int(np.ceil(np.sqrt(p)))
    rng = np.random.default_rng(seed)
    members = []
    for _ in range(trees):
        rows = rng.integers(0, n, size=n).astype(np.int64)
        tree_seed = int(rng.integers(0, 2**63 - 1))
        members.append(
            RegressionTree.fit(X, y, rows=rows, max_depth=depth, min_leaf=min_leaf,
                               max_features=max_features, seed=tree_seed)
        )
    return members


def forest_member_predictions(members, X):
    """(n_members, n_rows) prediction matrix."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    return np.stack([m.predict(X) for m in members])


def _quantile_minimizer(values, tau):
    """Lower tau-quantile: the canonical pinball-loss minimizer of a sample."""
    return float(np.quantile(values, tau, method="inverted_cdf"))


def fit_gradient_boosted(X, y, tau, trees=300, depth=4, learning_rate=0.1, min_leaf=5):
    """Boosted trees minimizing pinball loss at the given quantile.

    Each round fits a tree to the pinball subgradient, then replaces every
    leaf value with the lower tau-quantile of the true residuals in that leaf
    (the exact per-leaf minimizer, so the training loss never increases for
    learning_rate <= 1). Feature orders are sorted once and shared by all
    rounds.
    """
    if not 0 < tau < 1:
        raise ModelError(f"tau must be in (0, 1), got {tau}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sorted_idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    base = _quantile_minimizer(y, tau)
    current = np.full(len(y), base)
    members = []
    losses = []
    for _ in range(trees):
        residual = y - current
        pseudo = np.where(residual >= 0, tau, tau - 1.0)
        tree = RegressionTree(
            *_build_tree_presorted(X, pseudo, sorted_idx, depth, min_leaf)
        )
        leaves = tree.apply(X)
        for leaf in np.unique(leaves):
            members_mask = leaves == leaf
            tree.value[leaf] = _quantile_minimizer(residual[members_mask], tau)
        current = current + learning_rate * tree.value[leaves]
        members.append(tree)
        diff = y - current
        losses.append(float(np.mean(np.where(diff >= 0, tau * diff, (tau - 1.0) * diff))))
    return base, members, np.asarray(losses)


def gradient_boosted_predict(base, members, learning_rate, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.full(X.shape[0], base)
    for tree in members:
        out += learning_rate * tree.predict(X)
    return out
