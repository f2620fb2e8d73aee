"""Online mixture-weight estimators driven by stochastic mirror descent.

The update for a sample ``zeta`` uses the score vector
``g = f(zeta) / <m, f(zeta)>``; the loss ``log(1 / <m, f(zeta)>)`` has
gradient ``-g``, so a descent step moves *along* ``g``:

* Euclidean geometry:        ``m <- Proj(m + gamma * g)``
* negative-entropy geometry: ``m_j <- m_j exp(gamma * g_j) / Z``

Both are the closed-form solutions of the prox step
``argmin_z D_phi(z, m) - gamma * <g, z>`` over the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .dictionary import Dictionary, score
from .errors import ConfigError, InvalidInputError
from .simplex import ENTROPY_FLOOR, MirrorMap, get_mirror, project_simplex, uniform

__all__ = [
    "StepSchedule",
    "make_schedule",
    "EstimatorState",
    "Snapshots",
    "init_state",
    "sgd_step",
    "exp_smd_step",
    "mirror_step",
    "smd_step",
    "run_estimator",
    "run_snapshots",
    "softmax",
    "softmax_loss_grad",
    "softmax_sgd_baseline",
]

SIGNS = ("descent", "literal")


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``gamma_i`` for ``i = 0, 1, ...`` (the step index).

    kinds
    -----
    constant_sqrt_n : ``r_phi / (g_inf * sqrt(N))`` for every step
    strongly_convex : ``2 / (nu * (i + 1))``
    power_decay     : ``gamma0 / (1 + i) ** decay``
    constant        : ``gamma`` for every step
    """

    kind: str
    params: dict = field(default_factory=dict)

    def steps(self, start: int, n: int) -> np.ndarray:
        i = np.arange(start, start + n, dtype=np.float64)
        p = self.params
        if self.kind == "constant_sqrt_n":
            return np.full(n, p["r_phi"] / (p["g_inf"] * math.sqrt(p["N"])))
        if self.kind == "strongly_convex":
            return 2.0 / (p["nu"] * (i + 1.0))
        if self.kind == "power_decay":
            return p["gamma0"] / (1.0 + i) ** p["decay"]
        if self.kind == "constant":
            return np.full(n, float(p["gamma"]))
        raise ConfigError(f"unknown schedule kind {self.kind!r}")

    def __call__(self, i: int) -> float:
        return float(self.steps(i, 1)[0])

    def to_config(self) -> dict:
        return {"kind": self.kind, **{k: float(v) for k, v in self.params.items()}}


_SCHEDULE_PARAMS = {
    "constant_sqrt_n": ("N", "r_phi", "g_inf"),
    "strongly_convex": ("nu",),
    "power_decay": ("gamma0", "decay"),
    "constant": ("gamma",),
}

_SCHEDULE_ALIASES = {
    "constantsqrtn": "constant_sqrt_n",
    "constant_sqrt_n": "constant_sqrt_n",
    "stronglyconvex": "strongly_convex",
    "strongly_convex": "strongly_convex",
    "powerdecay": "power_decay",
    "power_decay": "power_decay",
    "constant": "constant",
}


def make_schedule(kind: str, params: dict | None = None, **kwargs) -> StepSchedule:
    """Build and validate a step schedule.

    >>> make_schedule("power_decay", gamma0=0.1, decay=0.35)(0)
    0.1
    """
    key = _SCHEDULE_ALIASES.get(str(kind).lower().replace("-", "_"))
    if key is None:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    p = dict(params or {}, **kwargs)
    need = _SCHEDULE_PARAMS[key]
    missing = [k for k in need if k not in p]
    if missing:
        raise ConfigError(f"schedule {key!r} is missing {missing}")
    extra = sorted(set(p) - set(need))
    if extra:
        raise ConfigError(f"schedule {key!r} got unexpected parameters {extra}")
    p = {k: float(p[k]) for k in need}
    for k, v in p.items():
        if not math.isfinite(v):
            raise ConfigError(f"schedule parameter {k} must be finite, got {v}")
        if k == "decay":
            if v < 0:
                raise ConfigError(f"decay must be >= 0, got {v}")
        elif v <= 0:
            raise ConfigError(f"schedule parameter {k} must be positive, got {v}")
    return StepSchedule(key, p)


def sgd_step(m, g, gamma, sign: str = "descent") -> np.ndarray:
    """Projected step ``Proj(m + gamma g)`` (``Proj(m - gamma g)`` if ``sign='literal'``).

    ``gamma`` may be a scalar or broadcast against the leading axes of ``m``.
    """
    m = np.asarray(m, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("score vector has non-finite entries")
    if sign == "descent":
        return project_simplex(m + gamma * g)
    if sign == "literal":
        return project_simplex(m - gamma * g)
    raise ConfigError(f"sign must be one of {SIGNS}, got {sign!r}")


def _floor_renormalize(m: np.ndarray, floor: float) -> np.ndarray:
    m = np.maximum(m, floor)
    m /= m.sum(axis=-1, keepdims=True)
    # second clip removes the sub-floor drift introduced by renormalizing
    return np.maximum(m, floor)


def exp_smd_step(m, g, gamma, floor: float = ENTROPY_FLOOR) -> np.ndarray:
    """Multiplicative update ``m_j exp(gamma g_j) / Z``.

    The exponent is shifted by ``max_k g_k`` before exponentiating, and the
    result is floored at ``floor`` and renormalized.
    """
    m = np.asarray(m, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("score vector has non-finite entries")
    if np.any(m < floor):
        m = _floor_renormalize(m, floor)
    a = gamma * (g - g.max(axis=-1, keepdims=True))
    w = m * np.exp(a)
    w /= w.sum(axis=-1, keepdims=True)
    if np.any(w < floor):
        w = _floor_renormalize(w, floor)
    return w


def mirror_step(mirror: MirrorMap, m, g, gamma, sign: str = "descent") -> np.ndarray:
    """Closed-form prox step for ``mirror`` (a map or its name)."""
    mirror = get_mirror(mirror)
    if mirror.kind == "euclidean":
        return sgd_step(m, g, gamma, sign)
    if mirror.kind == "negative_entropy":
        return exp_smd_step(m, g, gamma)
    raise ConfigError(f"no closed-form step for mirror map {mirror.kind!r}")


@dataclass(frozen=True)
class EstimatorState:
    """Current iterate ``m^i``, its running Cesàro mean, and the step count ``i``."""

    current: np.ndarray
    cesaro: np.ndarray
    step_count: int
    schedule: StepSchedule
    mirror: MirrorMap
    sign: str = "descent"


def init_state(M: int, schedule: StepSchedule, mirror="negative_entropy", m0=None, sign="descent") -> EstimatorState:
    mirror = get_mirror(mirror)
    m0 = _initial_weights(M, mirror, m0)
    return EstimatorState(current=m0, cesaro=m0.copy(), step_count=0, schedule=schedule, mirror=mirror, sign=sign)


def _initial_weights(M: int, mirror: MirrorMap, m0) -> np.ndarray:
    if m0 is None or (isinstance(m0, str) and m0 == "uniform"):
        return uniform(M)
    w = np.array(m0, dtype=np.float64)
    if w.shape[-1] != M:
        raise ConfigError(f"m0 has length {w.shape[-1]}, dictionary has M = {M}")
    if np.any(w < 0) or np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-9):
        raise ConfigError("m0 must lie on the simplex")
    if mirror.kind == "negative_entropy" and np.any(w <= 0):
        raise ConfigError("m0 must be strictly positive for the negative-entropy map")
    return w


def smd_step(state: EstimatorState, dic: Dictionary, zeta) -> EstimatorState:
    """One mirror-descent step on sample ``zeta``, then the Cesàro update."""
    vals = dic.values(dic.check_point(zeta))
    g = score(vals, state.current)
    gamma = state.schedule(state.step_count)
    new = mirror_step(state.mirror, state.current, g, gamma, state.sign)
    i = state.step_count + 1
    cesaro = new / i + ((i - 1) / i) * state.cesaro
    return replace(state, current=new, cesaro=cesaro, step_count=i)


class Snapshots(NamedTuple):
    """Weights recorded after ``checkpoints[k]`` completed steps.

    ``last`` and ``cesaro`` have shape ``(n_checkpoints, ..., M)``; the middle
    axes are the batch axes of the run (none for a single stream).
    """

    checkpoints: np.ndarray
    last: np.ndarray
    cesaro: np.ndarray

    def select(self, output_mode: str) -> np.ndarray:
        if output_mode in ("cesaro", "average"):
            return self.cesaro
        if output_mode in ("last", "last_iterate"):
            return self.last
        raise ConfigError(f"output_mode must be 'cesaro' or 'last_iterate', got {output_mode!r}")


def _checkpoints(checkpoints, n_stream: int) -> np.ndarray:
    ck = np.asarray(list(checkpoints), dtype=np.int64)
    if ck.size == 0:
        return ck
    if np.any(ck < 0) or np.any(np.diff(ck) <= 0):
        raise ConfigError("checkpoints must be strictly increasing non-negative integers")
    if ck[-1] > n_stream:
        raise ConfigError(f"stream has {n_stream} samples but the last checkpoint is {ck[-1]}")
    return ck


def _run(dic, update, m0, stream, checkpoints, schedule, batched, transform=None):
    """Shared single-pass loop; ``update(state, g, gamma) -> state``."""
    stream = np.asarray(stream)
    if batched:
        n_stream = stream.shape[1]
    else:
        n_stream = stream.shape[0]
        stream = stream[None]
    ck = _checkpoints(checkpoints, n_stream)
    state = np.array(m0, dtype=np.float64)
    T = stream.shape[0]
    if state.ndim == 1:
        state = np.broadcast_to(state, (T,) + state.shape).copy()
    to_m = transform if transform is not None else (lambda s: s)
    m = to_m(state)
    M = m.shape[-1]
    last = np.empty((len(ck), T, M))
    cesaro = np.empty((len(ck), T, M))
    avg = m.copy()
    n_total = int(ck[-1]) if len(ck) else 0
    gammas = schedule.steps(0, n_total)
    chunk = max(1, min(4096, (1 << 21) // max(1, T * M)))
    k = 0
    while k < len(ck) and ck[k] == 0:
        last[k], cesaro[k] = m, avg
        k += 1
    for s in range(0, n_total, chunk):
        e = min(n_total, s + chunk)
        vals = dic.values(stream[:, s:e])
        for j in range(e - s):
            t = s + j
            g = score(vals[:, j], m)
            state = update(state, m, g, gammas[t])
            m = to_m(state)
            i = t + 1
            avg = m / i + ((i - 1) / i) * avg
            while k < len(ck) and ck[k] == i:
                last[k], cesaro[k] = m, avg
                k += 1
    if not batched:
        last, cesaro = last[:, 0], cesaro[:, 0]
    return Snapshots(ck, last, cesaro)


def run_snapshots(
    dic: Dictionary,
    mirror,
    schedule: StepSchedule,
    m0,
    stream,
    checkpoints,
    sign: str = "descent",
    batched: bool = False,
) -> Snapshots:
    """Run one estimator over ``stream`` recording both output modes.

    With ``batched=True`` the stream has shape ``(T, N, ...)``: ``T``
    independent runs advance in lock-step and snapshots gain a trial axis.
    """
    mirror = get_mirror(mirror)
    if sign not in SIGNS:
        raise ConfigError(f"sign must be one of {SIGNS}, got {sign!r}")
    m0 = _initial_weights(dic.M, mirror, m0)

    def update(state, m, g, gamma):
        return mirror_step(mirror, m, g, gamma, sign)

    return _run(dic, update, m0, stream, checkpoints, schedule, batched)


def run_estimator(
    dic: Dictionary,
    mirror,
    schedule: StepSchedule,
    m0,
    stream,
    checkpoints,
    output_mode: str = "cesaro",
    sign: str = "descent",
    batched: bool = False,
) -> np.ndarray:
    """Snapshots of the Cesàro mean or the last iterate, shape ``(n_checkpoints, [T,] M)``."""
    snaps = run_snapshots(dic, mirror, schedule, m0, stream, checkpoints, sign=sign, batched=batched)
    return snaps.select(output_mode)


def softmax(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    z = np.exp(w - w.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_loss_grad(w, values) -> np.ndarray:
    """Gradient in the logits of ``-log <softmax(w), f>``: ``m_j (1 - g_j)``."""
    m = softmax(w)
    g = score(np.asarray(values, dtype=np.float64), m)
    return m * (1.0 - g)


def softmax_sgd_baseline(dic: Dictionary, schedule: StepSchedule, w0, stream, checkpoints, batched=False) -> Snapshots:
    """Plain SGD on unconstrained logits ``w`` with ``m = softmax(w)``."""
    w0 = np.zeros(dic.M) if w0 is None else np.asarray(w0, dtype=np.float64)
    if w0.shape[-1] != dic.M:
        raise ConfigError(f"w0 has length {w0.shape[-1]}, dictionary has M = {dic.M}")

    def update(w, m, g, gamma):
        return w - gamma * (m * (1.0 - g))

    return _run(dic, update, w0, stream, checkpoints, schedule, batched, transform=softmax)
