"""Robust standardization, multi-target ridge with leave-one-out lambda
selection, and the cross-validated correlation scoring loop.

The ridge solver eigendecomposes the smaller Gram matrix (features-by-features
or samples-by-samples) once per fit and reuses it across the whole penalty
grid and all targets; per-target penalties come from the closed-form
leave-one-out identity on that factorization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from ._validation import as_float_matrix, check_finite
from .align import LaggedDesign

DEFAULT_LAMBDA_GRID = tuple(np.logspace(-1, 8, 10))


# ---------------------------------------------------------------------------
# standardization


class StoryScaler(BaseEstimator, TransformerMixin):
    """Robust per-group standardization.

    Mean and population std are estimated per column on data clipped to the
    percentile band, so extremes cannot distort the statistics; the
    transform itself is affine. Groups are typically stories. A constant
    column maps to zeros.
    """

    def __init__(self, clip_low=0.01, clip_high=99.99):
        self.clip_low = clip_low
        self.clip_high = clip_high

    def fit(self, X, y=None, groups=None):
        X = as_float_matrix(X, "X")
        self.stats_ = {}
        for key, rows in _group_rows(X.shape[0], groups).items():
            block = X[rows]
            lo, hi = np.percentile(block, [self.clip_low, self.clip_high], axis=0)
            clipped = np.clip(block, lo, hi)
            mean = clipped.mean(axis=0)
            std = clipped.std(axis=0)
            self.stats_[key] = (mean, np.where(std == 0.0, 1.0, std))
        return self

    def transform(self, X, groups=None):
        X = as_float_matrix(X, "X")
        out = np.empty_like(X)
        for key, rows in _group_rows(X.shape[0], groups).items():
            if key not in self.stats_:
                raise ValueError(f"group {key!r} was not seen during fit")
            mean, std = self.stats_[key]
            out[rows] = (X[rows] - mean) / std
        return out

    def fit_transform(self, X, y=None, groups=None):
        return self.fit(X, groups=groups).transform(X, groups=groups)


def _group_rows(n_rows, groups):
    if groups is None:
        return {0: np.arange(n_rows)}
    groups = np.asarray(groups).ravel()
    if groups.shape[0] != n_rows:
        raise ValueError(f"{groups.shape[0]} group labels for {n_rows} rows")
    return {key: np.flatnonzero(groups == key) for key in np.unique(groups)}


def robust_standardize(matrix, clip_low=0.01, clip_high=99.99, groups=None):
    """One-shot scaling: fit and apply on the same rows."""
    return StoryScaler(clip_low, clip_high).fit_transform(matrix, groups=groups)


# ---------------------------------------------------------------------------
# ridge


class RidgeLOO(BaseEstimator, RegressorMixin):
    """Multi-target ridge regression with built-in leave-one-out selection.

    Parameters
    ----------
    alphas : ascending penalty grid searched by closed-form LOO.
    alpha_per_target : pick a penalty per output column; otherwise one shared
        penalty minimizing the mean LOO error across columns.
    fit_intercept : center inputs/outputs on the training data. The encoding
        path feeds standardized data and leaves this off.
    """

    def __init__(self, alphas=DEFAULT_LAMBDA_GRID, alpha_per_target=True, fit_intercept=False):
        self.alphas = alphas
        self.alpha_per_target = alpha_per_target
        self.fit_intercept = fit_intercept

    def fit(self, X, Y):
        X = as_float_matrix(X, "X")
        Y = as_float_matrix(Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"{X.shape[0]} design rows vs {Y.shape[0]} target rows")
        alphas = _check_grid(self.alphas)

        if self.fit_intercept:
            self._x_mean = X.mean(axis=0)
            self._y_mean = Y.mean(axis=0)
            X = X - self._x_mean
            Y = Y - self._y_mean
        factors = _gram_eigh(X)
        self.loo_mse_ = _loo_mse_grid(factors, Y, alphas)
        if self.alpha_per_target:
            choice = np.argmin(self.loo_mse_, axis=0)  # first (smallest) wins ties
        else:
            choice = np.full(Y.shape[1], int(np.argmin(self.loo_mse_.mean(axis=1))))
        self.alpha_ = alphas[choice]
        self.coef_ = _solve_grouped(factors, Y, alphas, choice)
        if self.fit_intercept:
            self.intercept_ = self._y_mean - self._x_mean @ self.coef_
        else:
            self.intercept_ = np.zeros(Y.shape[1])
        return self

    def predict(self, X):
        X = as_float_matrix(X, "X")
        return X @ self.coef_ + self.intercept_


def _check_grid(alphas):
    grid = np.asarray(alphas, dtype=np.float64).ravel()
    if grid.size == 0:
        raise ValueError("empty penalty grid")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValueError("penalties must be finite and non-negative")
    if np.any(np.diff(grid) < 0):
        raise ValueError("penalty grid must be sorted ascending")
    return grid


def _gram_eigh(X):
    """Eigendecompose the smaller Gram matrix of X.

    Returns (mode, eigenvalues, projector B, X) where the hat matrix for
    penalty a is B diag(s(a)) B^T with s depending on the mode.
    """
    n, d = X.shape
    if d <= n:
        evals, Q = np.linalg.eigh(X.T @ X)
        return ("primal", np.maximum(evals, 0.0), X @ Q, Q, X)
    evals, U = np.linalg.eigh(X @ X.T)
    return ("dual", np.maximum(evals, 0.0), U, None, X)


def _inv_eigs(evals, alpha):
    shifted = evals + alpha
    if alpha == 0.0:
        cutoff = evals.max(initial=0.0) * evals.size * np.finfo(np.float64).eps
        return np.where(shifted > cutoff, 1.0 / np.where(shifted > 0, shifted, 1.0), 0.0)
    return 1.0 / shifted


def _loo_mse_grid(factors, Y, alphas):
    """Closed-form leave-one-out MSE for every (penalty, target) pair.

    Penalties are batched into one matrix product per chunk; with a 10-value
    grid that turns ten medium GEMMs into one large one.
    """
    mode, evals, B, _, _ = factors
    Bsq = B**2
    C = B.T @ Y
    n, v = Y.shape
    k = C.shape[0]
    mse = np.empty((alphas.size, v))
    chunk = max(1, int(2e7) // max(1, n * v))
    for start in range(0, alphas.size, chunk):
        batch = alphas[start : start + chunk]
        weights = np.stack(
            [
                _inv_eigs(evals, a) * (evals if mode == "dual" else 1.0)
                for a in batch
            ]
        )  # (n_batch, k)
        scaled = (C[None, :, :] * weights[:, :, None]).transpose(1, 0, 2).reshape(k, -1)
        preds = B @ scaled  # n x (n_batch * v)
        h = Bsq @ weights.T  # n x n_batch
        for j in range(batch.size):
            denom = 1.0 - h[:, j]
            denom = np.where(np.abs(denom) < np.finfo(np.float64).eps, np.nan, denom)
            resid = (Y - preds[:, j * v : (j + 1) * v]) / denom[:, None]
            with np.errstate(invalid="ignore"):
                mse[start + j] = np.nansum(resid**2, axis=0) / n
            mse[start + j, np.all(np.isnan(resid), axis=0)] = np.inf
    return mse


def _solve_grouped(factors, Y, alphas, choice):
    """Ridge weights, sharing each penalty's solve across its targets."""
    mode, evals, B, Q, X = factors
    coef = np.empty((X.shape[1], Y.shape[1]))
    C = B.T @ Y
    for i in np.unique(choice):
        mask = choice == i
        inv = _inv_eigs(evals, alphas[i])
        if mode == "primal":
            coef[:, mask] = Q @ (C[:, mask] * inv[:, None])
        else:
            coef[:, mask] = X.T @ (B @ (C[:, mask] * inv[:, None]))
    return coef


def ridge_fit(X, Y, alpha):
    """Weights minimizing ||Y - XW||^2 + alpha ||W||^2 (no intercept)."""
    X = as_float_matrix(X, "X")
    Y = as_float_matrix(Y, "Y")
    if alpha < 0 or not np.isfinite(alpha):
        raise ValueError("alpha must be finite and non-negative")
    factors = _gram_eigh(X)
    return _solve_grouped(factors, Y, np.array([float(alpha)]), np.zeros(Y.shape[1], dtype=int))


def select_lambda(X, Y, grid=DEFAULT_LAMBDA_GRID):
    """Per-target penalty minimizing the closed-form LOO error; ties pick
    the smaller penalty."""
    model = RidgeLOO(alphas=grid, alpha_per_target=True).fit(X, Y)
    return model.alpha_


# ---------------------------------------------------------------------------
# correlation scoring


def pearson(a, b):
    """Sample Pearson correlation; degenerate inputs score 0 (flagged
    variant available via pearson_columns)."""
    r, _ = _pearson_pair(a, b)
    return r


def _pearson_pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 3:
        raise ValueError("need at least 3 samples for a correlation")
    r, defined = pearson_columns(a[:, None], b[:, None])
    return float(r[0]), bool(defined[0])


def pearson_columns(A, B):
    """Columnwise Pearson r between two equally-shaped matrices.

    Returns (r, defined); columns where either side is constant get r=0 and
    defined=False.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    Ac = A - A.mean(axis=0)
    Bc = B - B.mean(axis=0)
    na = np.sqrt((Ac**2).sum(axis=0))
    nb = np.sqrt((Bc**2).sum(axis=0))
    defined = (na > 0) & (nb > 0)
    denom = np.where(defined, na * nb, 1.0)
    r = np.where(defined, (Ac * Bc).sum(axis=0) / denom, 0.0)
    return np.clip(r, -1.0, 1.0), defined


# ---------------------------------------------------------------------------
# cross-validated scoring


@dataclass(frozen=True)
class RidgeConfig:
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    folds: int = 100
    min_test_samples: int = 10

    def __post_init__(self):
        grid = _check_grid(self.lambda_grid)
        object.__setattr__(self, "lambda_grid", tuple(grid))
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass(frozen=True)
class FoldPlan:
    """Contiguous, disjoint, covering test blocks in temporal order."""

    splits: tuple  # of (train indices, test indices)
    n_samples: int

    def __post_init__(self):
        covered = np.concatenate([test for _, test in self.splits])
        if covered.size != self.n_samples or not np.array_equal(
            covered, np.arange(self.n_samples)
        ):
            raise ValueError("test folds must be contiguous, disjoint and covering")


def fold_plan(n_samples, folds):
    """Unshuffled k-fold split with contiguous test blocks."""
    if folds < 2 or folds > n_samples:
        raise ValueError(f"cannot split {n_samples} samples into {folds} folds")
    sizes = np.full(folds, n_samples // folds, dtype=np.int64)
    sizes[: n_samples % folds] += 1
    edges = np.concatenate([[0], np.cumsum(sizes)])
    all_idx = np.arange(n_samples)
    splits = []
    for k in range(folds):
        test = all_idx[edges[k] : edges[k + 1]]
        train = np.concatenate([all_idx[: edges[k]], all_idx[edges[k + 1] :]])
        splits.append((train, test))
    return FoldPlan(splits=tuple(splits), n_samples=n_samples)


@dataclass(frozen=True)
class ScoreTable:
    """Per-fold, per-target correlation scores for one feature set."""

    scores: np.ndarray  # folds x targets
    feature_set: str
    layer: int | None = None
    meta: dict = field(default_factory=dict)
    undefined: np.ndarray | None = None  # True where the correlation was degenerate

    def __post_init__(self):
        scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "scores", scores)
        und = self.undefined
        if und is None:
            und = np.zeros(scores.shape, dtype=bool)
        object.__setattr__(self, "undefined", np.asarray(und, dtype=bool))
        ok = np.isfinite(scores) & (scores >= -1.0) & (scores <= 1.0)
        if not np.all(ok | self.undefined):
            raise ValueError("scores outside [-1, 1] without an undefined flag")

    @property
    def n_folds(self):
        return self.scores.shape[0]

    @property
    def n_targets(self):
        return self.scores.shape[1]


def write_score_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_set", "layer", "fold", "target", "score"])
        layer = "" if table.layer is None else table.layer
        for fold in range(table.n_folds):
            for target in range(table.n_targets):
                writer.writerow(
                    [table.feature_set, layer, fold, target, repr(float(table.scores[fold, target]))]
                )


def read_score_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty score table")
    folds = max(int(r["fold"]) for r in rows) + 1
    targets = max(int(r["target"]) for r in rows) + 1
    scores = np.full((folds, targets), np.nan)
    for r in rows:
        scores[int(r["fold"]), int(r["target"])] = float(r["score"])
    check_finite(scores, f"{path} scores")
    layer = rows[0]["layer"]
    return ScoreTable(
        scores=scores,
        feature_set=rows[0]["feature_set"],
        layer=None if layer == "" else int(layer),
    )


def brain_scores(
    design,
    Y,
    cfg=None,
    story_ids=None,
    normalize="per_fold",
    feature_set="",
    layer=None,
):
    """Cross-validated correlation between ridge predictions and responses.

    Each fold standardizes with training-row statistics only, selects the
    penalty per target on the training rows, fits, and scores the held-out
    block with a per-target Pearson correlation. ``normalize="global"``
    reproduces the scale-first variant that shares statistics across folds.
    """
    cfg = cfg or RidgeConfig()
    if isinstance(design, LaggedDesign):
        design = design.matrix
    X = as_float_matrix(design, "design")
    Y = as_float_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"design rows {X.shape[0]} != signal rows {Y.shape[0]}")
    if normalize not in ("per_fold", "global"):
        raise ValueError(f"unknown normalize mode {normalize!r}")
    plan = fold_plan(X.shape[0], cfg.folds)
    short = [t.size for _, t in plan.splits if t.size < cfg.min_test_samples]
    if short:
        raise ValueError(
            f"test folds of size {short} are below min_test_samples={cfg.min_test_samples}"
        )

    if normalize == "global":
        X = StoryScaler().fit_transform(X, groups=story_ids)
        Y = StoryScaler().fit_transform(Y, groups=story_ids)

    scores = np.empty((cfg.folds, Y.shape[1]))
    undefined = np.zeros_like(scores, dtype=bool)
    for k, (train, test) in enumerate(plan.splits):
        if normalize == "per_fold":
            gtr = None if story_ids is None else np.asarray(story_ids)[train]
            gte = None if story_ids is None else np.asarray(story_ids)[test]
            sx = StoryScaler().fit(X[train], groups=gtr)
            sy = StoryScaler().fit(Y[train], groups=gtr)
            Xtr, Xte = sx.transform(X[train], groups=gtr), sx.transform(X[test], groups=gte)
            Ytr, Yte = sy.transform(Y[train], groups=gtr), sy.transform(Y[test], groups=gte)
        else:
            Xtr, Xte, Ytr, Yte = X[train], X[test], Y[train], Y[test]
        model = RidgeLOO(alphas=cfg.lambda_grid).fit(Xtr, Ytr)
        pred = model.predict(Xte)
        scores[k], defined = pearson_columns(pred, Yte)
        undefined[k] = ~defined
    return ScoreTable(
        scores=scores,
        feature_set=feature_set,
        layer=layer,
        meta={"folds": cfg.folds, "normalize": normalize},
        undefined=undefined,
    )
