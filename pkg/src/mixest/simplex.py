"""Geometry of the probability simplex.

Everything here works on the last axis of its array arguments, so a batch of
weight vectors of shape ``(..., M)`` is handled in one call.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, InvalidInputError

__all__ = [
    "SUM_TOL",
    "ENTROPY_FLOOR",
    "as_weights",
    "uniform",
    "project_simplex",
    "kl_divergence",
    "bregman_divergence",
    "r_phi",
    "MirrorMap",
    "EuclideanMap",
    "NegativeEntropyMap",
    "EUCLIDEAN",
    "NEGATIVE_ENTROPY",
    "get_mirror",
]

SUM_TOL = 1e-9
ENTROPY_FLOOR = 1e-12
_ON_SIMPLEX_TOL = 1e-12


def as_weights(m, tol=SUM_TOL) -> np.ndarray:
    """Validate and return ``m`` as a float64 weight vector (or batch of them).

    Raises
    ------
    InvalidInputError
        If ``m`` has fewer than two entries, negative or non-finite entries,
        or does not sum to one within ``tol``.
    """
    w = np.asarray(m, dtype=np.float64)
    if w.ndim == 0 or w.shape[-1] < 2:
        raise InvalidInputError(f"weight vector needs at least 2 entries, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weight vector has non-finite entries")
    if np.any(w < 0):
        raise InvalidInputError(f"weight vector has negative entries (min {w.min():.3g})")
    dev = np.abs(w.sum(axis=-1) - 1.0)
    if np.any(dev > tol):
        raise InvalidInputError(f"weights do not sum to 1 (deviation {np.max(dev):.3g})")
    return w


def uniform(M: int) -> np.ndarray:
    if M < 2:
        raise InvalidInputError(f"M must be >= 2, got {M}")
    return np.full(M, 1.0 / M)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sort-and-threshold: with ``u`` sorted in decreasing order, the projection
    is ``max(v - theta, 0)`` where ``theta = (sum_{j<=rho} u_j - 1) / rho`` and
    ``rho`` is the largest index with ``u_rho > theta_rho``. Runs in
    O(M log M) and accepts a batch along the leading axes.

    Parameters
    ----------
    v : array_like, shape (..., M)

    Returns
    -------
    ndarray, shape (..., M)
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0 or v.shape[-1] < 2:
        raise InvalidInputError(f"need at least 2 entries, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("cannot project a vector with non-finite entries")
    M = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, M + 1, dtype=np.float64)
    rho = np.count_nonzero(u - css / ind > 0, axis=-1, keepdims=True)
    theta = np.take_along_axis(css, rho - 1, axis=-1) / rho
    out = np.maximum(v - theta, 0.0)
    # rows already on the simplex (up to summation rounding) are returned as
    # is, which makes the projection exactly idempotent
    on = np.all(v >= 0, axis=-1, keepdims=True) & (np.abs(v.sum(axis=-1, keepdims=True) - 1.0) <= _ON_SIMPLEX_TOL)
    return np.where(on, v, out)


def kl_divergence(p, q):
    """KL(p || q) = sum p_i log(p_i / q_i), with 0 log 0 = 0.

    Returns ``inf`` (rather than raising) when some ``p_i > 0`` meets
    ``q_i = 0``, so metric streams stay total.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-1] != q.shape[-1]:
        raise InvalidInputError(f"length mismatch: {p.shape} vs {q.shape}")
    support = p > 0
    blocked = np.any(support & (q <= 0), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(support, p * np.log(np.where(support, p, 1.0) / np.where(q > 0, q, 1.0)), 0.0)
    out = terms.sum(axis=-1)
    out = np.where(blocked, np.inf, np.maximum(out, 0.0))
    if out.ndim == 0:
        return float(out)
    return out


class MirrorMap:
    """A distance-generating function on the simplex.

    Subclasses provide ``phi`` and ``grad_phi``; the Bregman divergence is
    derived from them. New geometries can be added by subclassing, but only
    the Euclidean and negative-entropy maps ship.
    """

    kind: str = ""

    def phi(self, x):
        raise NotImplementedError

    def grad_phi(self, x):
        raise NotImplementedError

    def check_domain(self, y):
        pass

    def bregman(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.check_domain(y)
        val = self.phi(x) - self.phi(y) - np.sum(self.grad_phi(y) * (x - y), axis=-1)
        return np.maximum(val, 0.0)

    def r_phi(self, M: int) -> float:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class EuclideanMap(MirrorMap):
    """phi(x) = 0.5 ||x||^2; Bregman divergence is half the squared distance."""

    kind = "euclidean"

    def phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad_phi(self, x):
        return np.asarray(x, dtype=np.float64)

    def r_phi(self, M: int) -> float:
        # max 1/2 at a vertex, min 1/(2M) at the barycentre
        if M < 2:
            raise InvalidInputError(f"M must be >= 2, got {M}")
        return math.sqrt((M - 1) / (2.0 * M))


class NegativeEntropyMap(MirrorMap):
    """phi(x) = sum x log x; Bregman divergence is the KL divergence."""

    kind = "negative_entropy"

    def phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.sum(xlogy(x, x), axis=-1)

    def grad_phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        self.check_domain(x)
        return np.log(x) + 1.0

    def check_domain(self, y):
        if np.any(np.asarray(y) <= 0):
            raise DomainError("negative-entropy map needs a strictly positive point")

    def r_phi(self, M: int) -> float:
        # max 0 at a vertex, min -log M at the barycentre
        if M < 2:
            raise InvalidInputError(f"M must be >= 2, got {M}")
        return math.sqrt(math.log(M))


EUCLIDEAN = EuclideanMap()
NEGATIVE_ENTROPY = NegativeEntropyMap()

_MIRRORS = {
    "euclidean": EUCLIDEAN,
    "l2": EUCLIDEAN,
    "negative_entropy": NEGATIVE_ENTROPY,
    "entropy": NEGATIVE_ENTROPY,
    "kl": NEGATIVE_ENTROPY,
}


def get_mirror(name) -> MirrorMap:
    if isinstance(name, MirrorMap):
        return name
    try:
        return _MIRRORS[str(name).lower()]
    except KeyError:
        raise InvalidInputError(f"unknown mirror map {name!r}; choose from {sorted(_MIRRORS)}") from None


def bregman_divergence(mirror, x, y):
    """D_phi(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>."""
    out = get_mirror(mirror).bregman(x, y)
    if np.ndim(out) == 0:
        return float(out)
    return out


def r_phi(mirror, M: int) -> float:
    """Square root of the range of phi over the M-simplex."""
    return get_mirror(mirror).r_phi(M)
