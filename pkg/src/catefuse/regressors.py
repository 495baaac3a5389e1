"""From-scratch regression and classification components.

Three workhorses cover every nuisance and final-stage fit in the library:

* :class:`LinearRegressor` -- weighted least squares with an optional ridge
  penalty, solved by normal equations.
* :class:`RidgeLogisticCV` -- binary logistic regression fit by damped
  Newton iterations, with the ridge penalty chosen by cross-validated
  log-loss and predicted probabilities clipped away from 0 and 1.
* :class:`GradientBoostedTrees` -- least-squares gradient boosting over
  histogram-binned regression trees.

All three subclass :class:`sklearn.base.BaseEstimator`, so ``get_params`` /
``set_params`` / ``clone`` work and they compose with scikit-learn
utilities. The algorithms themselves are implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit
from sklearn.base import BaseEstimator

from .rng import stream
from .validation import (
    as_matrix,
    as_vector,
    check_binary,
    check_fitted,
    check_lengths,
    check_weights,
)

__all__ = [
    "LinearRegressor",
    "RidgeLogisticCV",
    "GradientBoostedTrees",
    "ConstantClassifier",
    "ZeroRegressor",
]


class LinearRegressor(BaseEstimator):
    """Weighted least squares with an unpenalized intercept.

    Minimizes ``sum_i w_i (y_i - b0 - x_i @ b)^2 + ridge * ||b||^2`` via the
    normal equations. Sample weights are normalized to mean 1 before
    solving, so rescaling all weights by a positive constant leaves the fit
    unchanged even when ``ridge > 0``. A singular system falls back to a
    jittered solve (1e-10 added to the diagonal); ``jittered_`` records
    whether that happened.

    Parameters
    ----------
    ridge : float
        Non-negative penalty on the slope coefficients.
    """

    def __init__(self, ridge: float = 0.0):
        self.ridge = ridge

    def fit(self, X, y, sample_weight=None):
        X = as_matrix(X)
        y = as_vector(y)
        n = check_lengths(("x", X), ("y", y))
        w = check_weights(sample_weight, n)
        if self.ridge < 0:
            raise ValueError(f"ridge must be non-negative, got {self.ridge}")
        w = w / w.mean()
        design = np.hstack([np.ones((n, 1)), X])
        p = design.shape[1]
        gram = design.T @ (design * w[:, None])
        gram[np.arange(1, p), np.arange(1, p)] += self.ridge
        moment = design.T @ (w * y)
        beta, jittered = _solve_spd(gram, moment)
        self.jittered_ = jittered
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.n_features_ = X.shape[1]
        return self

    def predict(self, X):
        check_fitted(self, "coef_")
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_}")
        return self.intercept_ + X @ self.coef_


def _solve_spd(gram, moment):
    """Solve gram @ beta = moment, jittering the diagonal if singular."""
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), moment), False
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    jittered = gram + 1e-10 * np.eye(gram.shape[0])
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(jittered), moment), True
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return np.linalg.lstsq(jittered, moment, rcond=None)[0], True


class RidgeLogisticCV(BaseEstimator):
    """Ridge-penalized logistic regression with cross-validated penalty.

    The penalty is selected from ``penalties`` (default: 7 points log-spaced
    over [1e-3, 1e3]) by ``cv``-fold out-of-fold log-loss, folds stratified
    by label, then the model is refit on all rows. Predicted probabilities
    are clipped to ``[clip, 1 - clip]``; the clipped scale is also what the
    CV criterion scores, matching how predictions are consumed downstream.

    Fitting runs damped Newton iterations on the penalized log-loss
    (intercept unpenalized), stopping when the gradient's max-norm falls
    below ``tol``. If ``max_iter`` is exhausted the best iterate seen is
    kept and ``converged_`` is False.
    """

    def __init__(self, penalties=None, cv: int = 5, clip: float = 0.01,
                 max_iter: int = 100, tol: float = 1e-8, seed: int = 0):
        self.penalties = penalties
        self.cv = cv
        self.clip = clip
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed

    def fit(self, X, y):
        X = as_matrix(X)
        y = check_binary(np.asarray(y), "y").astype(float)
        n = check_lengths(("x", X), ("y", y))
        if y.min() == y.max():
            raise ValueError("y contains a single class; need both 0 and 1")
        if not 0 < self.clip < 0.5:
            raise ValueError(f"clip must lie in (0, 0.5), got {self.clip}")
        penalties = (np.logspace(-3.0, 3.0, 7) if self.penalties is None
                     else np.sort(np.asarray(self.penalties, dtype=float)))
        if np.any(penalties <= 0):
            raise ValueError("penalties must be positive")
        design = np.hstack([np.ones((n, 1)), X])

        if len(penalties) > 1:
            assign = self._cv_assignments(y, n)
            cv_losses = np.empty(len(penalties))
            for j, lam in enumerate(penalties):
                oof = np.empty(n)
                for f in range(self.cv):
                    train = assign != f
                    beta, _, _ = _fit_logistic(design[train], y[train], lam,
                                               self.max_iter, self.tol)
                    prob = np.clip(expit(design[~train] @ beta),
                                   self.clip, 1.0 - self.clip)
                    oof[~train] = -(y[~train] * np.log(prob)
                                    + (1.0 - y[~train]) * np.log1p(-prob))
                cv_losses[j] = oof.mean()
            best = int(np.argmin(cv_losses))
            self.cv_losses_ = cv_losses
        else:
            best = 0
            self.cv_losses_ = None
        self.penalty_ = float(penalties[best])
        beta, converged, iters = _fit_logistic(design, y, self.penalty_,
                                               self.max_iter, self.tol)
        self.converged_ = converged
        self.n_iter_ = iters
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.n_features_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        return self

    def _cv_assignments(self, y, n):
        if n < self.cv:
            raise ValueError(f"need at least cv={self.cv} rows, got {n}")
        assign = np.zeros(n, dtype=np.int64)
        for label in (0, 1):
            pos = np.flatnonzero(y == label)
            perm = stream(self.seed, "logistic-cv", label).permutation(len(pos))
            assign[pos[perm]] = np.arange(len(pos)) % self.cv
        return assign

    def predict_proba(self, X):
        check_fitted(self, "coef_")
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_}")
        p1 = np.clip(expit(self.intercept_ + X @ self.coef_),
                     self.clip, 1.0 - self.clip)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


def _penalized_loss(design, y, beta, lam):
    z = design @ beta
    nll = np.sum(np.logaddexp(0.0, z) - y * z)
    return nll + 0.5 * lam * np.sum(beta[1:] ** 2)


def _fit_logistic(design, y, lam, max_iter, tol):
    """Damped Newton on the ridge-penalized log-loss; intercept unpenalized."""
    p = design.shape[1]
    pen = np.ones(p)
    pen[0] = 0.0
    beta = np.zeros(p)
    best_beta, best_loss = beta, _penalized_loss(design, y, beta, lam)
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        prob = expit(design @ beta)
        grad = design.T @ (prob - y) + lam * pen * beta
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        curvature = prob * (1.0 - prob)
        hess = design.T @ (design * curvature[:, None]) + lam * np.diag(pen)
        step, _ = _solve_spd(hess, grad)
        current = _penalized_loss(design, y, beta, lam)
        scale = 1.0
        candidate = None
        for _ in range(30):
            trial = beta - scale * step
            if _penalized_loss(design, y, trial, lam) < current:
                candidate = trial
                break
            scale *= 0.5
        if candidate is None:
            break
        beta = candidate
        loss = _penalized_loss(design, y, beta, lam)
        if loss < best_loss:
            best_beta, best_loss = beta, loss
    if not converged:
        beta = best_beta
    return beta, converged, iters


@dataclass
class _Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def evaluate(self, X):
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
            else:
                go_left = X[rows, f] <= self.threshold[node]
                stack.append((self.left[node], rows[go_left]))
                stack.append((self.right[node], rows[~go_left]))
        return out


class GradientBoostedTrees(BaseEstimator):
    """Least-squares gradient boosting over histogram-binned trees.

    Each feature is bucketed into at most ``max_bins`` quantile bins once,
    up front. Every boosting round fits one depth-limited tree to the
    current residuals: each node picks the (feature, bin boundary) pair
    maximizing the exact weighted squared-error gain

        GL^2 / HL + GR^2 / HR - G^2 / H

    where G / H are the weighted residual sum and total weight on each
    side, subject to ``min_leaf`` rows per child. Leaves predict the
    weighted mean residual, shrunk by ``learning_rate``.

    Rows are internally re-sorted into a canonical order before any
    accumulation, which makes the fit (and therefore every prediction)
    invariant to the order rows arrive in, bit for bit.
    """

    def __init__(self, n_rounds: int = 100, learning_rate: float = 0.1,
                 max_depth: int = 3, min_leaf: int = 20, max_bins: int = 255):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_bins = max_bins

    def fit(self, X, y, sample_weight=None):
        X = as_matrix(X)
        y = as_vector(y)
        n = check_lengths(("x", X), ("y", y))
        w = check_weights(sample_weight, n)
        if self.n_rounds < 1:
            raise ValueError(f"n_rounds must be at least 1, got {self.n_rounds}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_depth < 1 or self.min_leaf < 1 or self.max_bins < 2:
            raise ValueError("max_depth and min_leaf must be >= 1, max_bins >= 2")
        d = X.shape[1]

        order = np.lexsort((w, y) + tuple(X[:, j] for j in range(d - 1, -1, -1)))
        Xs, ys, ws = X[order], y[order], w[order]

        quantiles = np.arange(1, self.max_bins) / self.max_bins
        cuts = [np.unique(np.quantile(Xs[:, j], quantiles)) for j in range(d)]
        bins = np.empty((n, d), dtype=np.int64)
        for j in range(d):
            bins[:, j] = np.searchsorted(cuts[j], Xs[:, j], side="left")
        n_bins = max(len(c) for c in cuts) + 1

        wsum = ws.sum()
        self.base_ = float((ws * ys).sum() / wsum)
        preds = np.full(n, self.base_)
        trees = []
        losses = [float((ws * (ys - preds) ** 2).sum() / wsum)]
        for _ in range(self.n_rounds):
            resid = ys - preds
            tree = _grow_tree(bins, cuts, n_bins, resid, ws, preds,
                              self.max_depth, self.min_leaf, self.learning_rate)
            trees.append(tree)
            losses.append(float((ws * (ys - preds) ** 2).sum() / wsum))
        self.trees_ = trees
        self.train_losses_ = np.array(losses)
        self.n_features_ = d
        return self

    def predict(self, X):
        check_fitted(self, "trees_")
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_}")
        out = np.full(len(X), self.base_)
        for tree in self.trees_:
            out += self.learning_rate * tree.evaluate(X)
        return out


def _grow_tree(bins, cuts, n_bins, resid, w, preds, max_depth, min_leaf, lr):
    """Grow one tree on the residuals, updating ``preds`` in place at leaves."""
    d = bins.shape[1]
    offsets = np.arange(d) * n_bins
    feature, threshold, left, right, value = [], [], [], [], []

    def best_split(idx):
        codes = (bins[idx] + offsets).ravel()
        size = d * n_bins
        cnt = np.bincount(codes, minlength=size).reshape(d, n_bins)
        hw = np.bincount(codes, weights=np.repeat(w[idx], d),
                         minlength=size).reshape(d, n_bins)
        hg = np.bincount(codes, weights=np.repeat(w[idx] * resid[idx], d),
                         minlength=size).reshape(d, n_bins)
        cl = np.cumsum(cnt, axis=1)[:, :-1]
        hl = np.cumsum(hw, axis=1)[:, :-1]
        gl = np.cumsum(hg, axis=1)[:, :-1]
        ct = cnt.sum(axis=1, keepdims=True)
        ht = hw.sum(axis=1, keepdims=True)
        gt = hg.sum(axis=1, keepdims=True)
        ok = (cl >= min_leaf) & (ct - cl >= min_leaf) & (hl > 0) & (ht - hl > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = gl**2 / hl + (gt - gl) ** 2 / (ht - hl) - gt**2 / ht
        gain = np.where(ok, gain, -np.inf)
        flat = int(np.argmax(gain))
        if gain.flat[flat] <= 1e-12:
            return None
        f, b = divmod(flat, n_bins - 1)
        return f, b, float(cuts[f][b])

    def build(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        h = w[idx].sum()
        value.append(float((w[idx] * resid[idx]).sum() / h) if h > 0 else 0.0)
        split = None
        if depth < max_depth and idx.size >= 2 * min_leaf:
            split = best_split(idx)
        if split is None:
            preds[idx] += lr * value[node]
            return node
        f, b, thr = split
        feature[node] = f
        threshold[node] = thr
        go_left = bins[idx, f] <= b
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(bins.shape[0]), 0)
    return _Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
    )


class ConstantClassifier(BaseEstimator):
    """Predicts a fixed probability for class 1. No clipping is applied."""

    def __init__(self, p: float = 0.5):
        self.p = p

    def fit(self, X, y=None):
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        X = as_matrix(X)
        p1 = np.full(len(X), float(self.p))
        return np.column_stack([1.0 - p1, p1])


class ZeroRegressor(BaseEstimator):
    """Predicts zero everywhere. Turns plug-in stages into pure weighting."""

    def fit(self, X, y, sample_weight=None):
        self.n_features_ = as_matrix(X).shape[1]
        return self

    def predict(self, X):
        check_fitted(self, "n_features_")
        return np.zeros(len(as_matrix(X)))
