"""Component-density dictionaries {f_i}.

Two families are provided: multi-scale grids of isotropic 2-D Gaussians and
smoothed point masses over a finite alphabet. Both evaluate all ``M``
components at a batch of sample points in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InvalidInputError, NumericError

__all__ = [
    "MIXTURE_FLOOR",
    "Dictionary",
    "GaussianGridDictionary",
    "CategoricalDictionary",
    "DensityEvaluation",
    "GInfinity",
    "build_multiscale_gaussian",
    "build_categorical",
    "evaluate",
    "stochastic_gradient",
    "estimate_g_infinity",
    "dictionary_from_config",
    "DEFAULT_LAYERS",
]

MIXTURE_FLOOR = 1e-300

# coarse / medium / fine layers of the four-mode experiment
DEFAULT_LAYERS = ((8, 1.5), (15, 0.5), (30, 0.15))


class DensityEvaluation(NamedTuple):
    values: np.ndarray
    mixture: float


class GInfinity(NamedTuple):
    """Bound on component ratios, with its log and the grid used (0 = exact)."""

    value: float
    log_value: float
    resolution: int


class Dictionary:
    kind: str = ""
    M: int

    def values(self, points) -> np.ndarray:
        """Evaluate every component at ``points``; returns shape ``(..., M)``."""
        raise NotImplementedError

    def check_point(self, zeta):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


def _box(domain) -> np.ndarray:
    box = np.asarray(domain, dtype=np.float64)
    if box.shape != (2, 2) or not np.all(np.isfinite(box)) or np.any(box[:, 1] <= box[:, 0]):
        raise ConfigError(f"domain must be [[xmin, xmax], [ymin, ymax]] with xmin < xmax, got {domain!r}")
    return box


def midpoints(lo: float, hi: float, n: int) -> np.ndarray:
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5)


@dataclass(frozen=True, eq=False)
class GaussianGridDictionary(Dictionary):
    """Isotropic Gaussians on evenly spaced grids over a 2-D box.

    Each layer ``(side, sigma)`` places ``side**2`` kernels on the grid
    ``linspace(lo, hi, side)`` in each coordinate, edges included (a single
    node sits at the box centre). Component ``a * side + b`` of a layer is
    centred at ``(x_a, y_b)``.
    """

    domain: np.ndarray
    layers: tuple
    centers: np.ndarray = field(repr=False)
    sigmas: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    interior: np.ndarray = field(repr=False)

    kind = "gaussian_grid"

    @property
    def M(self) -> int:
        return len(self.sigmas)

    def layer_nodes(self):
        """Yield ``(start, side, sigma, xs, ys)`` for each layer."""
        start = 0
        for side, sigma in self.layers:
            xs = _grid_nodes(self.domain[0], side)
            ys = _grid_nodes(self.domain[1], side)
            yield start, side, sigma, xs, ys
            start += side * side

    def values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape[-1:] != (2,):
            raise InvalidInputError(f"expected points of shape (..., 2), got {pts.shape}")
        d2 = (pts[..., None, 0] - self.centers[:, 0]) ** 2 + (pts[..., None, 1] - self.centers[:, 1]) ** 2
        s2 = self.sigmas**2
        return np.exp(-d2 / (2.0 * s2)) / (2.0 * np.pi * s2)

    def log_values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        d2 = (pts[..., None, 0] - self.centers[:, 0]) ** 2 + (pts[..., None, 1] - self.centers[:, 1]) ** 2
        s2 = self.sigmas**2
        return -d2 / (2.0 * s2) - np.log(2.0 * np.pi * s2)

    def mixture_on_grid(self, m, xs, ys) -> np.ndarray:
        """Mixture density on the tensor grid ``xs x ys``; shape ``(len(xs), len(ys))``.

        Uses separability of isotropic Gaussians: per layer the mixture is
        ``Ex.T @ W @ Ey`` with ``Ex[a, i] = exp(-(x_i - cx_a)^2 / 2s^2)``.
        """
        m = np.asarray(m, dtype=np.float64)
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        out = np.zeros((len(xs), len(ys)))
        for start, side, sigma, cx, cy in self.layer_nodes():
            W = m[start : start + side * side].reshape(side, side)
            ex = np.exp(-((xs[None, :] - cx[:, None]) ** 2) / (2 * sigma**2))
            ey = np.exp(-((ys[None, :] - cy[:, None]) ** 2) / (2 * sigma**2))
            out += (ex.T @ W @ ey) / (2 * np.pi * sigma**2)
        return out

    def check_point(self, zeta):
        pts = np.asarray(zeta, dtype=np.float64)
        if pts.shape[-1:] != (2,):
            raise InvalidInputError(f"expected a 2-D point, got shape {pts.shape}")
        inside = (pts >= self.domain[:, 0]) & (pts <= self.domain[:, 1])
        if not np.all(inside):
            raise InvalidInputError(f"point {pts.tolist()} lies outside the domain box")
        return pts

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "domain": self.domain.tolist(),
            "layers": [{"grid_side": int(s), "sigma": float(sig)} for s, sig in self.layers],
        }


def _grid_nodes(interval, side: int) -> np.ndarray:
    lo, hi = interval
    if side == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, side)


def build_multiscale_gaussian(domain=((-5.0, 5.0), (-5.0, 5.0)), layers=DEFAULT_LAYERS, quadrature=400, mass_tol=1e-3):
    """Build a multi-scale Gaussian grid dictionary.

    Parameters
    ----------
    domain : 2x2 array_like
        Bounding box ``[[xmin, xmax], [ymin, ymax]]``.
    layers : sequence of (grid_side, sigma)
        One ``grid_side x grid_side`` layer of kernels with width ``sigma`` each.
    quadrature : int
        Midpoint-rule resolution per axis for the unit-mass check.
    mass_tol : float
        Allowed deviation from unit mass for components whose +-4 sigma
        square lies inside the box. Edge components are exempt and flagged
        through ``interior``.
    """
    box = _box(domain)
    parsed = []
    for layer in layers:
        if isinstance(layer, dict):
            side, sigma = layer.get("grid_side"), layer.get("sigma")
        else:
            side, sigma = layer
        if side is None or sigma is None or int(side) != side or int(side) < 1:
            raise ConfigError(f"grid_side must be a positive integer, got {layer!r}")
        if not (float(sigma) > 0 and np.isfinite(sigma)):
            raise ConfigError(f"sigma must be positive, got {layer!r}")
        parsed.append((int(side), float(sigma)))
    if not parsed:
        raise ConfigError("at least one dictionary layer is required")
    M = sum(s * s for s, _ in parsed)
    if M < 2:
        raise ConfigError(f"dictionary needs M >= 2 components, layers give M = {M}")

    centers, sigmas, masses = [], [], []
    qx = midpoints(box[0, 0], box[0, 1], quadrature)
    qy = midpoints(box[1, 0], box[1, 1], quadrature)
    hx = (box[0, 1] - box[0, 0]) / quadrature
    hy = (box[1, 1] - box[1, 0]) / quadrature
    for side, sigma in parsed:
        cx = _grid_nodes(box[0], side)
        cy = _grid_nodes(box[1], side)
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        centers.append(np.stack([gx.ravel(), gy.ravel()], axis=1))
        sigmas.append(np.full(side * side, sigma))
        # separable 1-D midpoint integrals
        ix = np.exp(-((qx[None, :] - cx[:, None]) ** 2) / (2 * sigma**2)).sum(1) * hx
        iy = np.exp(-((qy[None, :] - cy[:, None]) ** 2) / (2 * sigma**2)).sum(1) * hy
        masses.append(np.outer(ix, iy).ravel() / (2 * np.pi * sigma**2))
    centers = np.concatenate(centers)
    sigmas = np.concatenate(sigmas)
    masses = np.concatenate(masses)
    lo = centers - 4 * sigmas[:, None]
    hi = centers + 4 * sigmas[:, None]
    interior = np.all((lo >= box[:, 0]) & (hi <= box[:, 1]), axis=1)
    bad = interior & (np.abs(masses - 1.0) > mass_tol)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ConfigError(
            f"component {i} (sigma={sigmas[i]}) integrates to {masses[i]:.6f}; "
            f"increase the quadrature resolution"
        )
    return GaussianGridDictionary(
        domain=box, layers=tuple(parsed), centers=centers, sigmas=sigmas, masses=masses, interior=interior
    )


@dataclass(frozen=True, eq=False)
class CategoricalDictionary(Dictionary):
    """Components given as pmfs over ``K`` symbols; ``table[i, j] = f_i(j)``."""

    table: np.ndarray = field(repr=False)
    epsilon: float | None = None

    kind = "categorical"

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] < 2 or t.shape[1] < 2:
            raise ConfigError(f"categorical table must be (M >= 2, K >= 2), got shape {t.shape}")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise ConfigError("categorical components must be strictly positive on every symbol")
        if np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigError("every categorical component must sum to 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def M(self) -> int:
        return self.table.shape[0]

    @property
    def K(self) -> int:
        return self.table.shape[1]

    @classmethod
    def from_table(cls, table):
        return cls(table=np.array(table, dtype=np.float64))

    def values(self, symbols) -> np.ndarray:
        s = np.asarray(symbols)
        if not np.issubdtype(s.dtype, np.integer):
            if np.all(np.equal(np.mod(s, 1), 0)):
                s = s.astype(np.int64)
            else:
                raise InvalidInputError("categorical sample points must be integer symbols")
        return self.table.T[s]

    def mixture_pmf(self, m) -> np.ndarray:
        """Mixture pmf ``Q(j) = sum_i m_i f_i(j)``; batch-aware."""
        return np.asarray(m, dtype=np.float64) @ self.table

    def check_point(self, zeta):
        s = np.asarray(zeta)
        if s.ndim != 0 or not np.issubdtype(s.dtype, np.integer) or not (0 <= int(s) < self.K):
            raise InvalidInputError(f"symbol must be an integer in [0, {self.K}), got {zeta!r}")
        return int(s)

    def to_config(self) -> dict:
        if self.epsilon is None:
            return {"kind": "categorical_table", "table": self.table.tolist()}
        return {"kind": "categorical", "K": self.K, "epsilon": self.epsilon}


def build_categorical(K: int, epsilon: float = 0.01) -> CategoricalDictionary:
    """Smoothed point masses: ``f_i(j) = (1 - epsilon) 1{i = j} + epsilon / K``."""
    if int(K) != K or K < 2:
        raise ConfigError(f"alphabet size K must be an integer >= 2, got {K!r}")
    if not (0.0 < epsilon < 1.0):
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    K = int(K)
    table = np.full((K, K), epsilon / K)
    table[np.diag_indices(K)] += 1.0 - epsilon
    return CategoricalDictionary(table=table, epsilon=float(epsilon))


def _check_m(dic: Dictionary, m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (dic.M,):
        raise InvalidInputError(f"weight vector has shape {m.shape}, dictionary has M = {dic.M}")
    return m


def evaluate(dic: Dictionary, m, zeta) -> DensityEvaluation:
    """Component values at ``zeta`` and the mixture ``sum_i m_i f_i(zeta)``."""
    m = _check_m(dic, m)
    vals = dic.values(dic.check_point(zeta))
    mixture = max(float(m @ vals), MIXTURE_FLOOR)
    return DensityEvaluation(values=vals, mixture=mixture)


def score(values, m) -> np.ndarray:
    """Score vectors ``f(zeta) / <m, f(zeta)>`` for batched ``values`` and ``m``.

    No validation; the hot path of the estimators.
    """
    mix = np.sum(values * m, axis=-1, keepdims=True)
    return values / np.maximum(mix, MIXTURE_FLOOR)


def stochastic_gradient(dic: Dictionary, m, zeta) -> np.ndarray:
    """Score vector ``g_i = f_i(zeta) / sum_t m_t f_t(zeta)``.

    The gradient in ``m`` of the loss ``log(1 / Q(zeta))`` is ``-g``.
    """
    m = _check_m(dic, m)
    vals = dic.values(dic.check_point(zeta))
    mix = float(m @ vals)
    if not mix > MIXTURE_FLOOR:
        raise NumericError(f"mixture density underflows at {np.asarray(zeta).tolist()} (value {mix:.3g})")
    g = vals / mix
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite score vector at {np.asarray(zeta).tolist()}")
    return g


def estimate_g_infinity(dic: Dictionary, resolution: int = 200, chunk: int = 2000) -> GInfinity:
    """Largest component ratio ``max_i f_i(zeta) / min_j f_j(zeta)``.

    Exact for categorical dictionaries. For Gaussian grids it is the maximum
    over a ``resolution x resolution`` grid spanning the box (edges
    included), computed in log space because the ratio routinely overflows.
    """
    if isinstance(dic, CategoricalDictionary):
        t = dic.table
        ratio = float(np.max(t.max(axis=0) / t.min(axis=0)))
        return GInfinity(ratio, float(np.log(ratio)), 0)
    if isinstance(dic, GaussianGridDictionary):
        gx = np.linspace(dic.domain[0, 0], dic.domain[0, 1], resolution)
        gy = np.linspace(dic.domain[1, 0], dic.domain[1, 1], resolution)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        best = -np.inf
        for k in range(0, len(pts), chunk):
            lv = dic.log_values(pts[k : k + chunk])
            best = max(best, float(np.max(lv.max(axis=1) - lv.min(axis=1))))
        with np.errstate(over="ignore"):
            value = float(np.exp(best))
        return GInfinity(value, best, resolution)
    raise InvalidInputError(f"unsupported dictionary type {type(dic).__name__}")


def dictionary_from_config(cfg: dict) -> Dictionary:
    """Build a dictionary from its config mapping (see ``to_config``)."""
    kind = str(cfg.get("kind", "gaussian_grid")).lower()
    if kind in ("gaussian_grid", "multiscale_gaussian", "gaussian"):
        return build_multiscale_gaussian(
            domain=cfg.get("domain", ((-5.0, 5.0), (-5.0, 5.0))),
            layers=cfg.get("layers", DEFAULT_LAYERS),
        )
    if kind == "categorical":
        if "K" not in cfg:
            raise ConfigError("categorical dictionary needs K")
        return build_categorical(cfg["K"], cfg.get("epsilon", 0.01))
    if kind == "categorical_table":
        return CategoricalDictionary.from_table(cfg["table"])
    raise ConfigError(f"unknown dictionary kind {kind!r}")
