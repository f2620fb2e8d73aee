"""Classical comparison estimators: Gaussian KDE, k-NN density, add-a-constant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dictionary import midpoints
from .errors import ConfigError, DegenerateFitError, InvalidInputError, InvalidStateError

__all__ = [
    "KDEModel",
    "KNNModel",
    "AddConstantModel",
    "bandwidth_grid",
    "kde_holdout_scores",
    "fit_kde",
    "eval_kde",
    "kde_on_grid",
    "fit_knn",
    "eval_knn",
    "knn_score",
    "knn_brute_force_radius",
    "fit_add_constant",
]


def bandwidth_grid(lo=0.01, hi=10.0, n=30) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


@dataclass(frozen=True, eq=False)
class KDEModel:
    data: np.ndarray = field(repr=False)
    bandwidth: float
    grid: np.ndarray = field(repr=False, default=None)
    scores: np.ndarray = field(repr=False, default=None)

    kind = "kde"

    def hyperparameters(self) -> dict:
        return {"bandwidth": self.bandwidth, "n": len(self.data)}


def _sq_dists(a, b):
    return (a[:, None, 0] - b[None, :, 0]) ** 2 + (a[:, None, 1] - b[None, :, 1]) ** 2


def kde_holdout_scores(train, holdout, grid, chunk=512) -> np.ndarray:
    """Mean held-out log-likelihood of the 2-D Gaussian KDE for every bandwidth."""
    train = np.asarray(train, dtype=np.float64)
    holdout = np.asarray(holdout, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    total = np.zeros(len(grid))
    for s in range(0, len(holdout), chunk):
        d2 = _sq_dists(holdout[s : s + chunk], train)
        # shift by the nearest distance once; logsumexp per bandwidth follows
        dmin = d2.min(axis=1, keepdims=True)
        excess = d2 - dmin
        for k, h in enumerate(grid):
            c = 1.0 / (2 * h * h)
            total[k] += np.sum(np.log(np.exp(-c * excess).sum(axis=1)) - c * dmin[:, 0])
    n = len(train)
    return total / len(holdout) - np.log(2 * np.pi * grid**2) - math.log(n)


def fit_kde(samples, holdout_fraction=0.2, bandwidth_grid_values=None, seed=0) -> KDEModel:
    """Pick the bandwidth maximizing held-out log-likelihood, then refit on everything.

    The split is a seeded permutation; ties go to the smaller bandwidth.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise InvalidInputError(f"KDE expects (n, 2) samples, got shape {x.shape}")
    if len(x) < 10:
        raise InvalidInputError(f"KDE needs at least 10 samples, got {len(x)}")
    grid = bandwidth_grid() if bandwidth_grid_values is None else np.asarray(bandwidth_grid_values, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("bandwidth grid must be non-empty and positive")
    if not 0 < holdout_fraction < 1:
        raise ConfigError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    perm = np.random.default_rng(seed).permutation(len(x))
    n_hold = max(1, int(round(holdout_fraction * len(x))))
    holdout, train = x[perm[:n_hold]], x[perm[n_hold:]]
    scores = kde_holdout_scores(train, holdout, grid)
    finite = np.isfinite(scores)
    if not np.any(finite):
        raise DegenerateFitError("every bandwidth gives -inf held-out likelihood")
    order = np.argsort(grid, kind="stable")
    best = order[np.argmax(np.where(finite, scores, -np.inf)[order])]
    return KDEModel(x, float(grid[best]), grid, scores)


def eval_kde(model: KDEModel, zeta, chunk=2048) -> np.ndarray:
    """``(1/n) sum_j exp(-|zeta - x_j|^2 / 2h^2) / (2 pi h^2)``."""
    pts = np.asarray(zeta, dtype=np.float64)
    flat = pts.reshape(-1, 2)
    h = model.bandwidth
    out = np.empty(len(flat))
    for s in range(0, len(flat), chunk):
        d2 = _sq_dists(flat[s : s + chunk], model.data)
        out[s : s + chunk] = np.exp(-d2 / (2 * h * h)).mean(axis=1)
    out /= 2 * np.pi * h * h
    return out.reshape(pts.shape[:-1]) if pts.ndim > 1 else float(out[0])


def kde_on_grid(model: KDEModel, xs, ys) -> np.ndarray:
    """KDE on the tensor grid ``xs x ys`` via the separable Gaussian kernel."""
    h = model.bandwidth
    ex = np.exp(-((xs[None, :] - model.data[:, :1]) ** 2) / (2 * h * h))
    ey = np.exp(-((ys[None, :] - model.data[:, 1:]) ** 2) / (2 * h * h))
    return (ex.T @ ey) / (len(model.data) * 2 * np.pi * h * h)


@dataclass(frozen=True, eq=False)
class KNNModel:
    """k-NN density ``1 / (pi (r_k^2 + delta))`` divided by its integral over ``domain``."""

    data: np.ndarray = field(repr=False)
    k: int
    delta: float
    domain: np.ndarray = field(repr=False)
    normalizer: float
    tree: cKDTree = field(repr=False, default=None)
    # raw scores on the quadrature grid, shape (quadrature, quadrature)
    grid_scores: np.ndarray = field(repr=False, default=None)

    kind = "knn"

    def hyperparameters(self) -> dict:
        return {"k": self.k, "delta": self.delta, "normalizer": self.normalizer, "n": len(self.data)}


def knn_score(r_k, delta):
    return 1.0 / (np.pi * (np.asarray(r_k) ** 2 + delta))


def knn_brute_force_radius(data, points, k) -> np.ndarray:
    """Distance from each point to its k-th nearest stored point, by exhaustive search."""
    d2 = _sq_dists(np.asarray(points, dtype=np.float64).reshape(-1, 2), np.asarray(data, dtype=np.float64))
    return np.sqrt(np.partition(d2, k - 1, axis=1)[:, k - 1])


def _knn_radius(tree, points, k):
    flat = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    dist, _ = tree.query(flat, k=[k])
    return dist[:, 0]


def fit_knn(samples, domain, k=None, delta=1e-6, quadrature=400) -> KNNModel:
    """Store the samples and compute the normalizing constant over ``domain``.

    ``k`` defaults to ``ceil(sqrt(n))``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise InvalidInputError(f"k-NN expects (n, 2) samples, got shape {x.shape}")
    k = int(math.ceil(math.sqrt(len(x)))) if k is None else int(k)
    if k < 1 or not delta > 0:
        raise ConfigError(f"need k >= 1 and delta > 0, got k={k}, delta={delta}")
    if len(x) < k:
        raise InvalidStateError(f"k-NN with k={k} needs at least {k} samples, got {len(x)}")
    box = np.asarray(domain, dtype=np.float64)
    tree = cKDTree(x)
    xs = midpoints(box[0, 0], box[0, 1], quadrature)
    ys = midpoints(box[1, 0], box[1, 1], quadrature)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    r = _knn_radius(tree, np.stack([X.ravel(), Y.ravel()], axis=1), k)
    cell = (box[0, 1] - box[0, 0]) * (box[1, 1] - box[1, 0]) / quadrature**2
    scores = knn_score(r, delta)
    normalizer = float(scores.sum() * cell)
    return KNNModel(x, k, float(delta), box, normalizer, tree, scores.reshape(X.shape))


def eval_knn(model: KNNModel, zeta, normalized: bool = True):
    """k-NN density at ``zeta``; ``normalized=False`` gives the raw score."""
    if len(model.data) < model.k:
        raise InvalidStateError(f"model holds {len(model.data)} points, fewer than k={model.k}")
    pts = np.asarray(zeta, dtype=np.float64)
    tree = model.tree if model.tree is not None else cKDTree(model.data)
    val = knn_score(_knn_radius(tree, pts, model.k), model.delta)
    if normalized:
        val = val / model.normalizer
    return val.reshape(pts.shape[:-1]) if pts.ndim > 1 else float(val[0])


@dataclass(frozen=True, eq=False)
class AddConstantModel:
    counts: np.ndarray
    c: float
    pmf: np.ndarray

    kind = "add_constant"

    def hyperparameters(self) -> dict:
        return {"c": self.c, "n": int(self.counts.sum())}


def fit_add_constant(counts, c: float = 1.0) -> AddConstantModel:
    """``pmf_j = (counts_j + c) / (n + c K)``."""
    cnt = np.asarray(counts)
    if cnt.ndim != 1 or len(cnt) < 2:
        raise ConfigError("counts must be a vector over K >= 2 symbols")
    if np.any(cnt < 0):
        raise InvalidInputError("counts must be non-negative")
    if c < 0:
        raise ConfigError(f"additive constant must be >= 0, got {c}")
    denom = cnt.sum() + c * len(cnt)
    if denom == 0:
        raise ConfigError("add-a-constant with c = 0 and no observations is undefined")
    if c == 0 and np.any(cnt == 0):
        raise ConfigError("c = 0 requires every symbol to be observed")
    pmf = (cnt + c) / denom
    return AddConstantModel(cnt.copy(), float(c), pmf)
