"""Gradient-boosted regression trees minimizing absolute error.

Boosting recursion: F(x) = F0 + sum_m nu * rho_m * h_m(x), with F0 the target
median.  Each round fits a depth-limited tree to the sign of the current
residuals (the LAD negative gradient) and then replaces every leaf value with
the median of the raw residuals routed to it, which solves the per-leaf line
search exactly, so rho_m = 1.  Splits minimize the summed absolute deviation
of the sign targets around each child's best constant; because signs take at
most three values this is computed exactly from cumulative class counts.

Trees are stored as flat padded arrays so a whole model evaluates with a few
vectorized gathers per depth level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_NO_IMPROVE_EPS = 1e-12


def _sad_ternary(n_neg, n_zero, n_pos):
    """Summed |g - c| for the best constant c in {-1, 0, +1} given sign counts."""
    at_neg = n_zero + 2 * n_pos
    at_zero = n_neg + n_pos
    at_pos = 2 * n_neg + n_zero
    return np.minimum(at_neg, np.minimum(at_zero, at_pos))


def _grow_tree(X, presort, g, r, idx, min_leaf, max_depth):
    """Grow one tree on row subset ``idx``; returns flat node arrays.

    ``presort`` holds per-feature argsort orders of the full matrix; node-level
    sorted orders come from filtering them, keeping split search linear.
    """
    n, p = X.shape
    feat, thr, left, right, value = [], [], [], [], []

    def new_node():
        feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1); value.append(0.0)
        return len(feat) - 1

    member = np.zeros(n, dtype=bool)

    def split_node(node, rows, depth):
        m = len(rows)
        gs_all = g[rows]
        parent = _sad_ternary(int(np.sum(gs_all < 0)), int(np.sum(gs_all == 0)),
                              int(np.sum(gs_all > 0)))
        if depth >= max_depth or m < 2 * min_leaf or parent == 0:
            value[node] = float(np.median(r[rows]))
            return
        member[rows] = True
        best_imp = parent - _NO_IMPROVE_EPS
        best_j = -1
        best_t = 0.0
        for j in range(p):
            order = presort[:, j]
            srt = order[member[order]]
            xs = X[srt, j]
            gs = g[srt]
            cneg = np.cumsum(gs < 0)[:-1]
            czero = np.cumsum(gs == 0)[:-1]
            cpos = np.cumsum(gs > 0)[:-1]
            tneg, tzero, tpos = cneg[-1] + (gs[-1] < 0), czero[-1] + (gs[-1] == 0), cpos[-1] + (gs[-1] > 0)
            imp = (_sad_ternary(cneg, czero, cpos)
                   + _sad_ternary(tneg - cneg, tzero - czero, tpos - cpos))
            sizes = np.arange(1, m)
            ok = (sizes >= min_leaf) & (m - sizes >= min_leaf) & (xs[:-1] != xs[1:])
            if not ok.any():
                continue
            imp = np.where(ok, imp, np.iinfo(np.int64).max)
            i = int(np.argmin(imp))
            if imp[i] < best_imp:
                best_imp = imp[i]
                best_j = j
                best_t = float(xs[i])
        member[rows] = False
        if best_j < 0:
            value[node] = float(np.median(r[rows]))
            return
        go_left = X[rows, best_j] <= best_t
        feat[node] = best_j
        thr[node] = best_t
        l, rt = new_node(), new_node()
        left[node], right[node] = l, rt
        split_node(l, rows[go_left], depth + 1)
        split_node(rt, rows[~go_left], depth + 1)

    root = new_node()
    split_node(root, idx, 0)
    return (np.asarray(feat, dtype=np.int32), np.asarray(thr),
            np.asarray(left, dtype=np.int32), np.asarray(right, dtype=np.int32),
            np.asarray(value))


@dataclass(frozen=True)
class GbtModel:
    """Fitted boosted-tree model as stacked flat node arrays."""

    f0: float
    nu: float
    rho: np.ndarray         # per-round line-search multipliers (all ones)
    features: np.ndarray    # (rounds, max_nodes), -1 marks a leaf or padding
    thresholds: np.ndarray
    lefts: np.ndarray
    rights: np.ndarray
    values: np.ndarray
    max_depth: int
    n_features: int
    best_val_mae: float = float("nan")

    @property
    def n_rounds(self) -> int:
        return len(self.rho)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected (n, {self.n_features}) feature matrix, got {X.shape}")
        n = X.shape[0]
        out = np.full(n, self.f0)
        if self.n_rounds == 0 or n == 0:
            return out
        m_idx = np.arange(self.n_rounds)[:, None]
        node = np.zeros((self.n_rounds, n), dtype=np.int32)
        cols = np.arange(n)[None, :]
        for _ in range(self.max_depth):
            f = self.features[m_idx, node]
            at_leaf = f < 0
            xv = X[cols, np.maximum(f, 0)]
            go_left = xv <= self.thresholds[m_idx, node]
            nxt = np.where(go_left, self.lefts[m_idx, node], self.rights[m_idx, node])
            node = np.where(at_leaf, node, nxt)
        leaf_vals = self.values[m_idx, node]
        out += self.nu * (self.rho[:, None] * leaf_vals).sum(axis=0)
        return out

    def truncated(self, rounds: int) -> "GbtModel":
        """Model using only the first ``rounds`` boosting rounds."""
        if not 0 <= rounds <= self.n_rounds:
            raise ValueError("rounds out of range")
        return GbtModel(
            f0=self.f0, nu=self.nu, rho=self.rho[:rounds],
            features=self.features[:rounds], thresholds=self.thresholds[:rounds],
            lefts=self.lefts[:rounds], rights=self.rights[:rounds],
            values=self.values[:rounds], max_depth=self.max_depth,
            n_features=self.n_features, best_val_mae=self.best_val_mae,
        )


def _stack(trees, n_rounds, max_depth, n_features, f0, nu, best_val_mae):
    if n_rounds == 0:
        empty_i = np.zeros((0, 1), dtype=np.int32)
        empty_f = np.zeros((0, 1))
        return GbtModel(f0=f0, nu=nu, rho=np.zeros(0), features=empty_i,
                        thresholds=empty_f, lefts=empty_i, rights=empty_i,
                        values=empty_f, max_depth=max_depth, n_features=n_features,
                        best_val_mae=best_val_mae)
    width = max(len(t[0]) for t in trees[:n_rounds])
    features = np.full((n_rounds, width), -1, dtype=np.int32)
    thresholds = np.zeros((n_rounds, width))
    lefts = np.zeros((n_rounds, width), dtype=np.int32)
    rights = np.zeros((n_rounds, width), dtype=np.int32)
    values = np.zeros((n_rounds, width))
    for m in range(n_rounds):
        f, t, l, rt, v = trees[m]
        k = len(f)
        features[m, :k] = f
        thresholds[m, :k] = t
        lefts[m, :k] = l
        rights[m, :k] = rt
        values[m, :k] = v
    return GbtModel(f0=f0, nu=nu, rho=np.ones(n_rounds), features=features,
                    thresholds=thresholds, lefts=lefts, rights=rights, values=values,
                    max_depth=max_depth, n_features=n_features, best_val_mae=best_val_mae)


def _predict_single_tree(tree, X, max_depth):
    f_arr, t_arr, l_arr, r_arr, v_arr = tree
    node = np.zeros(X.shape[0], dtype=np.int32)
    rows = np.arange(X.shape[0])
    for _ in range(max_depth):
        f = f_arr[node]
        at_leaf = f < 0
        go_left = X[rows, np.maximum(f, 0)] <= t_arr[node]
        nxt = np.where(go_left, l_arr[node], r_arr[node])
        node = np.where(at_leaf, node, nxt)
    return v_arr[node]


def fit_gbt(X, y, X_val=None, y_val=None, *, nu: float = 0.1, max_rounds: int = 200,
            patience: int = 10, max_depth: int = 4, min_leaf: int = 20) -> GbtModel:
    """Fit an LAD boosted-tree model with validation-based early stopping.

    Stops once the validation MAE has not improved for ``patience`` rounds and
    returns the model truncated to the best-validation round count.  Without a
    validation set all ``max_rounds`` rounds are kept.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("need a nonempty feature matrix with matching targets")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("features and targets must be finite")
    has_val = X_val is not None and y_val is not None
    if has_val:
        X_val = np.asarray(X_val, dtype=float)
        y_val = np.asarray(y_val, dtype=float)

    f0 = float(np.median(y))
    presort = np.argsort(X, axis=0)
    idx_all = np.arange(len(y))
    pred = np.full(len(y), f0)
    trees = []
    best_rounds = 0
    best_mae = float(np.mean(np.abs(y_val - f0))) if has_val else float("inf")
    val_pred = np.full(len(y_val), f0) if has_val else None
    since_best = 0
    for m in range(max_rounds):
        resid = y - pred
        signs = np.sign(resid)
        tree = _grow_tree(X, presort, signs, resid, idx_all, min_leaf, max_depth)
        trees.append(tree)
        pred += nu * _predict_single_tree(tree, X, max_depth)
        if has_val:
            val_pred += nu * _predict_single_tree(tree, X_val, max_depth)
            mae = float(np.mean(np.abs(y_val - val_pred)))
            if mae < best_mae - _NO_IMPROVE_EPS:
                best_mae = mae
                best_rounds = m + 1
                since_best = 0
            else:
                since_best += 1
                if since_best >= patience:
                    break
        else:
            best_rounds = m + 1
    return _stack(trees, best_rounds, max_depth, X.shape[1], f0, nu,
                  best_mae if has_val else float("nan"))
