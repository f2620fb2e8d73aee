"""Oracles and metrics: best-in-class weights, curvature, KL by quadrature,
theorem bounds and empirical rate fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dictionary import MIXTURE_FLOOR, CategoricalDictionary, Dictionary, midpoints
from .errors import DegenerateDictionaryWarning, InvalidInputError
from .simplex import kl_divergence, project_simplex, uniform

__all__ = [
    "BestInClass",
    "NuEstimate",
    "KLEstimate",
    "RateFit",
    "reference_matrix",
    "objective",
    "solve_best_in_class",
    "hessian",
    "estimate_nu",
    "kl_continuous",
    "kl_on_grid",
    "bound_proposition1",
    "bound_theorem1",
    "bound_theorem1_statement",
    "bound_theorem2",
    "bound_theorem2_statement",
    "fit_rate",
]


@dataclass(frozen=True)
class BestInClass:
    weights: np.ndarray
    objective: float
    iterations: int
    gradient_mapping_norm: float
    converged: bool


def reference_matrix(dic: Dictionary, reference, chunk: int = 4096):
    """Component values at the reference points plus per-point weights.

    ``reference`` is either a set of sample points (equal weights) or, for a
    categorical dictionary, an exact pmf over the alphabet given as a mapping
    ``{"pmf": p}``. A precomputed pair is passed through as
    ``{"matrix": F, "weights": w}``.

    Returns
    -------
    F : ndarray, shape (n_points, M)
    w : ndarray, shape (n_points,)
    """
    if isinstance(reference, dict) and "matrix" in reference:
        F = np.asarray(reference["matrix"], dtype=np.float64)
        w = np.asarray(reference["weights"], dtype=np.float64)
        if F.ndim != 2 or F.shape != (len(w), dic.M):
            raise InvalidInputError(f"reference matrix has shape {F.shape}, expected ({len(w)}, {dic.M})")
        return F, w
    if isinstance(reference, dict) and "pmf" in reference:
        if not isinstance(dic, CategoricalDictionary):
            raise InvalidInputError("an exact pmf reference needs a categorical dictionary")
        p = np.asarray(reference["pmf"], dtype=np.float64)
        if p.shape != (dic.K,):
            raise InvalidInputError(f"pmf has shape {p.shape}, alphabet has K = {dic.K}")
        keep = np.flatnonzero(p > 0)
        return dic.table.T[keep], p[keep]
    pts = np.asarray(reference)
    F = np.concatenate([dic.values(pts[s : s + chunk]) for s in range(0, len(pts), chunk)])
    return F, np.full(len(pts), 1.0 / len(pts))


def objective(F, w, m) -> np.ndarray:
    """``-sum_k w_k log <m, F_k>``; batch-aware in ``m``."""
    Q = np.asarray(m) @ F.T
    return -(np.log(np.maximum(Q, MIXTURE_FLOOR)) @ w)


def solve_best_in_class(
    dic: Dictionary, reference, tol: float = 1e-8, max_iter: int = 100_000, polish_iter: int = 20_000
) -> BestInClass:
    """Minimize the cross-entropy objective over the simplex.

    Phase one is full-gradient mirror descent in the entropy geometry with
    backtracking, started from the uniform weights, until the gradient
    mapping ``||m - m+||_1 / eta`` drops below ``tol``. Entropic steps only
    approach a face of the simplex geometrically, so phase two polishes with
    Euclidean projected gradient (also backtracked), which lands on the
    face exactly. Hitting the iteration caps returns ``converged=False``.
    """
    F, w = reference_matrix(dic, reference)
    m = uniform(dic.M)
    Q = F @ m
    f = -(w @ np.log(Q))
    eta = 1.0
    gm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = -(F.T @ (w / Q))
        while True:
            cand = m * np.exp(-eta * (grad - grad.min()))
            cand /= cand.sum()
            Qc = F @ cand
            if np.all(Qc > 0):
                fc = -(w @ np.log(Qc))
                kl = float(np.sum(cand * np.log(np.maximum(cand, 1e-300) / np.maximum(m, 1e-300))))
                if fc <= f + grad @ (cand - m) + kl / eta + 1e-15 * abs(f):
                    break
            eta *= 0.5
            if eta < 1e-30:
                return BestInClass(m, float(f), it, gm, False)
        gm = float(np.abs(m - cand).sum() / eta)
        m, Q, f = cand, Qc, fc
        eta *= 2.0
        if gm < tol:
            break

    # fixed step 1/L: objective comparisons cannot resolve progress below
    # sqrt(machine eps), gradients can
    L = 2.0 * _lambda_max(hessian(F, w, m))
    for k in range(1, polish_iter + 1):
        grad = -(F.T @ (w / Q))
        cand = project_simplex(m - grad / L)
        d = cand - m
        gm = float(np.abs(d).sum() * L)
        Qc = F @ cand
        if not np.all(Qc > 0):
            L *= 2.0
            continue
        m, Q = cand, Qc
        if gm < tol:
            return BestInClass(m, float(-(w @ np.log(Q))), it + k, gm, True)
        if k % 100 == 0:
            L = max(L, 2.0 * _lambda_max(hessian(F, w, m)))
    return BestInClass(m, float(-(w @ np.log(Q))), it + polish_iter, gm, False)


def _lambda_max(H, n_iter: int = 50) -> float:
    if len(H) <= 2000:
        return float(np.linalg.eigvalsh(H)[-1])
    v = np.ones(len(H)) / np.sqrt(len(H))
    for _ in range(n_iter):
        v = H @ v
        v /= np.linalg.norm(v)
    return float(v @ H @ v)


def hessian(F, w, m) -> np.ndarray:
    """``sum_k w_k g_k g_k^T`` with score vectors ``g_k = F_k / <m, F_k>``."""
    G = F / np.maximum(F @ m, MIXTURE_FLOOR)[:, None]
    return (G * w[:, None]).T @ G


class NuEstimate(NamedTuple):
    nu: float
    per_probe: np.ndarray
    probes: np.ndarray


def estimate_nu(dic: Dictionary, reference, m_grid=None, n_random: int = 20, seed: int = 0) -> NuEstimate:
    """Smallest eigenvalue of the objective's Hessian over a set of probe weights.

    Default probes are the uniform weights plus ``n_random`` Dirichlet(1)
    interior points. Emits :class:`DegenerateDictionaryWarning` when some
    probe has ``lambda_min <= 1e-10``.
    """
    F, w = reference_matrix(dic, reference)
    if m_grid is None:
        rng = np.random.default_rng(seed)
        probes = np.vstack([uniform(dic.M)[None], rng.dirichlet(np.ones(dic.M), size=n_random)])
    else:
        probes = np.atleast_2d(np.asarray(m_grid, dtype=np.float64))
    lam = np.array([np.linalg.eigvalsh(hessian(F, w, p))[0] for p in probes])
    if np.any(lam <= 1e-10):
        warnings.warn(
            f"Hessian is numerically singular (lambda_min = {lam.min():.3g}); "
            "the components are likely linearly dependent on the target's support",
            DegenerateDictionaryWarning,
            stacklevel=2,
        )
    return NuEstimate(float(lam.min()), lam, probes)


class KLEstimate(NamedTuple):
    value: float
    half_resolution: float
    resolution: int


def kl_on_grid(p_vals, q_vals, cell_area: float, p_min: float = 1e-12) -> float:
    p = np.asarray(p_vals, dtype=np.float64)
    q = np.asarray(q_vals, dtype=np.float64)
    if np.any(p < 0) or np.any(q < 0):
        raise InvalidInputError("densities must be non-negative")
    mask = p > p_min
    pm = p[mask]
    return float(np.sum(pm * np.log(pm / np.maximum(q[mask], MIXTURE_FLOOR))) * cell_area)


def _grid(box, n):
    return midpoints(box[0, 0], box[0, 1], n), midpoints(box[1, 0], box[1, 1], n)


def kl_continuous(p_density, q_density, box, resolution: int = 400) -> KLEstimate:
    """KL(p || q) on a 2-D box by the midpoint rule.

    ``p_density`` and ``q_density`` take the two coordinate arrays of a
    meshgrid (``indexing='ij'``) and return densities of the same shape.
    The value at half resolution is reported for a convergence check.
    """
    box = np.asarray(box, dtype=np.float64)
    out = []
    for n in (resolution, max(1, resolution // 2)):
        xs, ys = _grid(box, n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        cell = (box[0, 1] - box[0, 0]) * (box[1, 1] - box[1, 0]) / n**2
        out.append(kl_on_grid(p_density(X, Y), q_density(X, Y), cell))
    return KLEstimate(out[0], out[1], resolution)


def bound_proposition1(r_phi: float, g_inf: float, N: int) -> float:
    """Suboptimality bound ``R_phi G_inf / sqrt(N)`` for the constant-step averaged estimator."""
    return r_phi * g_inf / math.sqrt(N)


def _over_n_plus_1(c: float, N):
    out = c / (np.asarray(N, dtype=np.float64) + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def bound_theorem1(a0: float, g_inf: float, nu: float, N):
    """Mean squared l2 error bound ``max{2 a0, 8 G^2 / nu^2} / (N + 1)``.

    ``a0 = 0.5 ||m0 - m*||^2``; this is ``2B / (N + 1)`` with
    ``B = max{a0, 4 G^2 / nu^2}``. ``N`` may be an array of checkpoints.
    """
    return _over_n_plus_1(max(2.0 * a0, 8.0 * g_inf**2 / nu**2), N)


def bound_theorem1_statement(r_l2: float, g_inf: float, nu: float, N):
    """Same bound with the diameter ``R_l2`` in the first slot."""
    return _over_n_plus_1(max(r_l2, 8.0 * g_inf**2 / nu**2), N)


def bound_theorem2(kl0: float, g_inf: float, nu: float, N):
    """Expected KL(m* || m^N) bound ``max{KL(m* || m0), 2 G^2 / nu^2} / (N + 1)``."""
    return _over_n_plus_1(max(kl0, 2.0 * g_inf**2 / nu**2), N)


def bound_theorem2_statement(r_kl: float, g_inf: float, nu: float, N):
    return _over_n_plus_1(max(r_kl, 2.0 * g_inf**2 / nu**2), N)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_rate(checkpoints, metrics=None) -> RateFit:
    """Least-squares line through ``(log N, log metric)``.

    Accepts either two arrays or a single sequence of ``(N, metric)`` pairs.
    Non-positive metrics are dropped with a warning; fewer than five
    survivors raise :class:`InvalidInputError`.
    """
    if metrics is None:
        pairs = np.asarray(checkpoints, dtype=np.float64)
        N, y = pairs[:, 0], pairs[:, 1]
    else:
        N = np.asarray(checkpoints, dtype=np.float64)
        y = np.asarray(metrics, dtype=np.float64)
    ok = (y > 0) & np.isfinite(y) & (N > 0)
    if not np.all(ok):
        warnings.warn(f"dropping {int((~ok).sum())} non-positive or non-finite points from the rate fit", stacklevel=2)
    N, y = N[ok], y[ok]
    if len(N) < 5:
        raise InvalidInputError(f"rate fit needs at least 5 positive points, got {len(N)}")
    lx, ly = np.log(N), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, len(N))


def kl_weights(p, q):
    """KL between weight vectors; exact, no quadrature."""
    return kl_divergence(p, q)
