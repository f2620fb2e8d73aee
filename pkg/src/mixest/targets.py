"""Synthetic ground-truth distributions.

Continuous targets are equal-weight mixtures of modes truncated to a 2-D box;
each mode is renormalized on the box with a cached midpoint-quadrature
constant. Samplers draw exactly from the truncated modes by rejection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dictionary import midpoints
from .errors import ConfigError, InvalidInputError

__all__ = [
    "Mode",
    "GaussianMode",
    "DonutMode",
    "RectangleMode",
    "ContinuousTarget",
    "CategoricalTarget",
    "build_four_mode",
    "build_wide_plus_spikes",
    "build_sparse_categorical",
    "sample",
    "density",
    "target_from_config",
    "write_density_grid_csv",
    "DEFAULT_BOX",
]

DEFAULT_BOX = ((-5.0, 5.0), (-5.0, 5.0))
NORMALIZER_RESOLUTION = 1000


class Mode:
    """One unnormalized component; subclasses provide ``unnormalized`` and ``draw``."""

    def unnormalized(self, x, y):
        raise NotImplementedError

    def draw(self, rng, n):
        """Draw ``n`` points from the untruncated mode, shape ``(n, 2)``."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianMode(Mode):
    """``exp(-0.5 (z - mean)^T precision (z - mean))``."""

    mean: tuple
    precision: tuple

    def __post_init__(self):
        P = np.asarray(self.precision, dtype=np.float64)
        if P.shape != (2, 2) or not np.allclose(P, P.T) or np.any(np.linalg.eigvalsh(P) <= 0):
            raise ConfigError(f"precision must be a symmetric positive-definite 2x2 matrix, got {self.precision}")

    @classmethod
    def isotropic(cls, center, sigma):
        if not sigma > 0:
            raise ConfigError(f"sigma must be positive, got {sigma}")
        s = 1.0 / sigma**2
        return cls(tuple(map(float, center)), ((s, 0.0), (0.0, s)))

    def unnormalized(self, x, y):
        P = np.asarray(self.precision)
        u = x - self.mean[0]
        v = y - self.mean[1]
        return np.exp(-0.5 * (P[0, 0] * u * u + 2 * P[0, 1] * u * v + P[1, 1] * v * v))

    def draw(self, rng, n):
        cov = np.linalg.inv(np.asarray(self.precision))
        L = np.linalg.cholesky(cov)
        z = rng.standard_normal((n, 2))
        return np.asarray(self.mean) + z @ L.T

    def to_config(self):
        return {"kind": "gaussian", "mean": list(self.mean), "precision": [list(r) for r in self.precision]}


@dataclass(frozen=True)
class DonutMode(Mode):
    """Ring ``exp(-(r - radius)^2 / (2 width^2))`` centred at the origin."""

    radius: float = 2.5
    width: float = 0.2
    r_max: float = 5.0 * np.sqrt(2.0)

    def unnormalized(self, x, y):
        r = np.hypot(x, y)
        return np.exp(-((r - self.radius) ** 2) / (2 * self.width**2))

    def draw(self, rng, n):
        # Normal(radius, width) proposal; the area element r dr makes the
        # exact radial law r * exp(...), so accept with probability r / r_max.
        out = np.empty((0, 2))
        while len(out) < n:
            k = max(2 * (n - len(out)), 16)
            r = rng.normal(self.radius, self.width, k)
            theta = rng.uniform(0.0, 2 * np.pi, k)
            u = rng.uniform(0.0, 1.0, k)
            ok = (r > 0) & (u * self.r_max < r)
            pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)[ok]
            out = np.concatenate([out, pts])
        return out[:n]

    def to_config(self):
        return {"kind": "donut", "radius": self.radius, "width": self.width}


@dataclass(frozen=True)
class RectangleMode(Mode):
    """Indicator of ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def unnormalized(self, x, y):
        return ((x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)).astype(np.float64)

    def draw(self, rng, n):
        return np.stack([rng.uniform(self.x0, self.x1, n), rng.uniform(self.y0, self.y1, n)], axis=1)

    def to_config(self):
        return {"kind": "rectangle", "x": [self.x0, self.x1], "y": [self.y0, self.y1]}


@dataclass(frozen=True, eq=False)
class ContinuousTarget:
    """Mixture of box-truncated modes with weights ``weights``."""

    kind: str
    domain: np.ndarray
    modes: tuple
    weights: np.ndarray
    normalizers: np.ndarray = field(repr=False)
    params: dict = field(default_factory=dict)

    def density_xy(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        out = np.zeros(np.broadcast(x, y).shape)
        for w, z, mode in zip(self.weights, self.normalizers, self.modes):
            out += (w / z) * mode.unnormalized(x, y)
        inside = (x >= self.domain[0, 0]) & (x <= self.domain[0, 1]) & (y >= self.domain[1, 0]) & (y <= self.domain[1, 1])
        return np.where(inside, out, 0.0)

    def density(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape[-1:] != (2,):
            raise InvalidInputError(f"expected points of shape (..., 2), got {pts.shape}")
        if np.any(pts < self.domain[:, 0]) or np.any(pts > self.domain[:, 1]):
            raise InvalidInputError("density requested outside the target's domain box")
        return self.density_xy(pts[..., 0], pts[..., 1])

    def density_on_grid(self, xs, ys) -> np.ndarray:
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return self.density_xy(X, Y)

    def sample(self, rng, n: int) -> np.ndarray:
        n = int(n)
        if n < 0:
            raise InvalidInputError("sample count must be non-negative")
        which = rng.choice(len(self.modes), size=n, p=self.weights)
        out = np.empty((n, 2))
        for k, mode in enumerate(self.modes):
            idx = np.flatnonzero(which == k)
            if len(idx):
                out[idx] = _draw_in_box(mode, rng, len(idx), self.domain)
        return out

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params}


def _draw_in_box(mode, rng, n, box):
    out = np.empty((0, 2))
    while len(out) < n:
        pts = mode.draw(rng, max(n - len(out), 16))
        ok = np.all((pts >= box[:, 0]) & (pts <= box[:, 1]), axis=1)
        out = np.concatenate([out, pts[ok]])
    return out[:n]


def _make_continuous(kind, domain, modes, weights=None, params=None, resolution=NORMALIZER_RESOLUTION):
    box = np.asarray(domain, dtype=np.float64)
    if box.shape != (2, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ConfigError(f"invalid domain box {domain!r}")
    weights = np.full(len(modes), 1.0 / len(modes)) if weights is None else np.asarray(weights, dtype=np.float64)
    xs = midpoints(box[0, 0], box[0, 1], resolution)
    ys = midpoints(box[1, 0], box[1, 1], resolution)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    cell = (box[0, 1] - box[0, 0]) * (box[1, 1] - box[1, 0]) / resolution**2
    normalizers = np.array([mode.unnormalized(X, Y).sum() * cell for mode in modes])
    if np.any(normalizers <= 0):
        raise ConfigError("a mode has no mass inside the domain box")
    return ContinuousTarget(kind, box, tuple(modes), weights, normalizers, params or {})


def build_four_mode(domain=DEFAULT_BOX) -> ContinuousTarget:
    """Donut + square + correlated Gaussian + spike, a quarter each, on [-5, 5]^2."""
    # exp(-[2u^2 - 3.5uv + 2v^2]) = exp(-0.5 z^T (2A) z) with A = [[2, -1.75], [-1.75, 2]]
    diagonal = GaussianMode((2.5, 2.5), ((4.0, -3.5), (-3.5, 4.0)))
    modes = (
        DonutMode(2.5, 0.2),
        RectangleMode(-2.75, -1.25, 1.25, 2.75),
        diagonal,
        GaussianMode.isotropic((-2.0, -2.0), 0.1),
    )
    return _make_continuous("four_mode", domain, modes, params={"domain": np.asarray(domain).tolist()})


WIDE_SPIKES_DEFAULT = {
    "wide_sigma": 2.0,
    "wide_center": (0.0, 0.0),
    "spikes": (((3.0, 3.0), 0.1), ((3.0, -3.0), 0.1), ((-3.0, 3.0), 0.1), ((-3.0, -3.0), 0.1)),
}


def build_wide_plus_spikes(wide_sigma=2.0, spikes=WIDE_SPIKES_DEFAULT["spikes"], wide_center=(0.0, 0.0), domain=DEFAULT_BOX):
    """One wide Gaussian plus sharp spikes, equal weights, truncated to the box.

    ``spikes`` is a sequence of ``(center, sigma)`` pairs.
    """
    spikes = [(tuple(map(float, c)), float(s)) for c, s in spikes]
    if not spikes:
        raise ConfigError("at least one spike is required")
    box = np.asarray(domain, dtype=np.float64)
    for c, s in spikes:
        if not s > 0:
            raise ConfigError(f"spike sigma must be positive, got {s}")
        if not (box[0, 0] <= c[0] <= box[0, 1] and box[1, 0] <= c[1] <= box[1, 1]):
            raise ConfigError(f"spike centre {c} lies outside the domain")
    if not wide_sigma > 0:
        raise ConfigError(f"wide_sigma must be positive, got {wide_sigma}")
    modes = [GaussianMode.isotropic(wide_center, wide_sigma)] + [GaussianMode.isotropic(c, s) for c, s in spikes]
    params = {
        "wide_sigma": float(wide_sigma),
        "wide_center": list(map(float, wide_center)),
        "spikes": [{"center": list(c), "sigma": s} for c, s in spikes],
        "domain": box.tolist(),
    }
    return _make_continuous("wide_plus_spikes", box, modes, params=params)


@dataclass(frozen=True, eq=False)
class CategoricalTarget:
    kind: str
    pmf: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.pmf)

    def density(self, symbols) -> np.ndarray:
        s = np.asarray(symbols)
        if not np.issubdtype(s.dtype, np.integer) or np.any(s < 0) or np.any(s >= self.K):
            raise InvalidInputError(f"symbols must be integers in [0, {self.K})")
        return self.pmf[s]

    def sample(self, rng, n: int) -> np.ndarray:
        n = int(n)
        if n < 0:
            raise InvalidInputError("sample count must be non-negative")
        cdf = np.cumsum(self.pmf)
        idx = np.searchsorted(cdf / cdf[-1], rng.random(n), side="right")
        # guard the u -> 1 edge against rounding in the cumulative sum
        return np.minimum(idx, np.flatnonzero(self.pmf)[-1]).astype(np.int64)

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params}


def build_sparse_categorical(K=1000, support_size=50, decay="zipf", seed=0) -> CategoricalTarget:
    """Mass on a seeded random subset of ``support_size`` symbols, uniform or Zipf(1) decayed."""
    K, s = int(K), int(support_size)
    if K < 2:
        raise ConfigError(f"K must be >= 2, got {K}")
    if not 1 <= s <= K:
        raise ConfigError(f"support_size must lie in [1, K={K}], got {s}")
    rng = np.random.default_rng(seed)
    support = rng.choice(K, size=s, replace=False)
    if decay == "uniform":
        w = np.ones(s)
    elif decay == "zipf":
        w = 1.0 / np.arange(1, s + 1)
    else:
        raise ConfigError(f"decay must be 'uniform' or 'zipf', got {decay!r}")
    pmf = np.zeros(K)
    pmf[support] = w / w.sum()
    params = {"K": K, "support_size": s, "decay": decay, "seed": seed}
    return CategoricalTarget("sparse_categorical", pmf, params)


def categorical_from_pmf(pmf) -> CategoricalTarget:
    p = np.asarray(pmf, dtype=np.float64)
    if p.ndim != 1 or len(p) < 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError("pmf must be a non-negative vector of length >= 2 summing to 1")
    return CategoricalTarget("categorical_pmf", p, {"pmf": p.tolist()})


def sample(target, rng, n: int):
    """Draw ``n`` i.i.d. points (``(n, 2)`` floats or ``(n,)`` symbols)."""
    return target.sample(rng, n)


def density(target, zeta):
    """Normalized density (or pmf) of ``target`` at ``zeta``."""
    return target.density(zeta)


def target_from_config(cfg: dict):
    kind = str(cfg.get("kind", "")).lower()
    domain = cfg.get("domain", DEFAULT_BOX)
    if kind == "four_mode":
        return build_four_mode(domain)
    if kind == "wide_plus_spikes":
        spikes = cfg.get("spikes", WIDE_SPIKES_DEFAULT["spikes"])
        spikes = [(s["center"], s["sigma"]) if isinstance(s, dict) else s for s in spikes]
        return build_wide_plus_spikes(
            cfg.get("wide_sigma", 2.0), spikes, cfg.get("wide_center", (0.0, 0.0)), domain
        )
    if kind == "sparse_categorical":
        return build_sparse_categorical(
            cfg.get("K", 1000), cfg.get("support_size", 50), cfg.get("decay", "zipf"), cfg.get("seed", 0)
        )
    if kind in ("categorical_pmf", "categorical"):
        if "pmf" not in cfg:
            raise ConfigError("categorical target needs a pmf")
        return categorical_from_pmf(cfg["pmf"])
    raise ConfigError(f"unknown target kind {kind!r}")


def write_density_grid_csv(target: ContinuousTarget, path, resolution: int = 200):
    """Write ``x,y,p`` rows of the target density on a midpoint grid."""
    xs = midpoints(target.domain[0, 0], target.domain[0, 1], resolution)
    ys = midpoints(target.domain[1, 0], target.domain[1, 1], resolution)
    P = target.density_on_grid(xs, ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    data = np.stack([X.ravel(), Y.ravel(), P.ravel()], axis=1)
    np.savetxt(path, data, delimiter=",", header="x,y,p", comments="", fmt="%.10g")
