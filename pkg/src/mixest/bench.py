"""Declarative experiment runner.

A run builds the target, the dictionary and the oracles once, then for
every trial draws a single sample stream that all estimators and baselines
consume (paired comparison). Metrics are recorded at checkpoints, one row
per ``(estimator, trial, checkpoint, metric)``.

Trials are processed in fixed-size blocks that advance in lock-step; the
block size comes from the config, never from the worker count, so results
do not depend on ``jobs``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import platform
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import fit_add_constant, fit_kde, fit_knn, kde_on_grid
from .dictionary import CategoricalDictionary, dictionary_from_config, estimate_g_infinity, midpoints
from .errors import ConfigError, MixestError, OutputError, TrialError
from .estimators import make_schedule, run_snapshots, softmax_sgd_baseline
from .evaluation import (
    bound_proposition1,
    bound_theorem1,
    bound_theorem1_statement,
    bound_theorem2,
    bound_theorem2_statement,
    estimate_nu,
    fit_rate,
    kl_on_grid,
    objective,
    reference_matrix,
    solve_best_in_class,
)
from .simplex import get_mirror, kl_divergence, r_phi, uniform
from .targets import CategoricalTarget, ContinuousTarget, target_from_config

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "METRICS",
    "FORMATS",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "verify_theorems",
    "sweep",
    "emit_outputs",
    "read_record",
    "trial_seed",
]

METRICS = ("kl_vs_best_in_class", "kl_vs_target", "l2_vs_best_in_class", "gap_vs_best_in_class")
FORMATS = ("csv", "json", "svg", "grid")
CSV_HEADER = "estimator,trial,checkpoint,metric,value"
SEED_ENV = "MIXEST_SEED"

_WEIGHT_METRICS = {"kl_vs_best_in_class", "l2_vs_best_in_class", "gap_vs_best_in_class"}
_ESTIMATOR_KINDS = ("smd", "softmax_sgd")
_BASELINE_KINDS = ("kde", "knn", "add_constant")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``estimators`` entries: ``name``, ``kind`` (``smd`` or ``softmax_sgd``),
    ``mirror``, ``schedule`` (mapping with ``kind`` plus parameters),
    ``output_mode``, ``sign``, ``m0``. Schedule parameters that can be
    derived (``nu``, ``g_inf``, ``r_phi``, ``N``) are filled in from the
    oracles when omitted.

    ``baselines`` entries: ``name``, ``kind`` (``kde``, ``knn`` or
    ``add_constant``) and the fit options of that baseline.
    """

    target: dict
    dictionary: dict
    estimators: list = field(default_factory=list)
    baselines: list = field(default_factory=list)
    N: int = 1000
    checkpoints: list | None = None
    n_checkpoints: int = 20
    baseline_checkpoints: list | None = None
    trials: int = 1
    seed: int = 0
    metrics: list = field(default_factory=lambda: ["kl_vs_target"])
    reference_size: int = 100_000
    kl_resolution: int = 400
    trial_block: int = 50
    oracles: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output_dir: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json"])
    name: str = "experiment"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        for key in ("target", "dictionary"):
            if key not in d:
                raise ConfigError(f"config is missing the [{key}] table")
        cfg = cls(**copy.deepcopy(d))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def validate(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials!r}")
        if self.trial_block < 1:
            raise ConfigError("trial_block must be >= 1")
        bad = sorted(set(self.metrics) - set(METRICS))
        if bad:
            raise ConfigError(f"unknown metrics {bad}; choose from {list(METRICS)}")
        bad = sorted(set(self.formats) - set(FORMATS))
        if bad:
            raise ConfigError(f"unknown output formats {bad}; choose from {list(FORMATS)}")
        for ck in (self.checkpoints, self.baseline_checkpoints):
            if ck is None:
                continue
            a = np.asarray(ck)
            if a.ndim != 1 or np.any(np.diff(a) <= 0) or np.any(a < 0) or np.any(a != np.round(a)):
                raise ConfigError("checkpoints must be strictly increasing non-negative integers")
            if len(a) and a[-1] > self.N:
                raise ConfigError(f"checkpoint {int(a[-1])} exceeds the stream length N = {self.N}")
        if not self.estimators and not self.baselines:
            raise ConfigError("config lists no estimators and no baselines")
        names = [_spec_name(s, "estimator", i) for i, s in enumerate(self.estimators)]
        names += [_spec_name(s, "baseline", i) for i, s in enumerate(self.baselines)]
        if len(set(names)) != len(names):
            raise ConfigError(f"estimator and baseline names must be unique, got {names}")
        for s in self.estimators:
            if s.get("kind", "smd") not in _ESTIMATOR_KINDS:
                raise ConfigError(f"estimator kind must be one of {_ESTIMATOR_KINDS}, got {s.get('kind')!r}")
            if "schedule" not in s:
                raise ConfigError(f"estimator {s.get('name')!r} has no schedule")
        for s in self.baselines:
            if s.get("kind") not in _BASELINE_KINDS:
                raise ConfigError(f"baseline kind must be one of {_BASELINE_KINDS}, got {s.get('kind')!r}")

    def checkpoint_list(self) -> np.ndarray:
        if self.checkpoints is not None:
            return np.asarray(self.checkpoints, dtype=np.int64)
        return default_checkpoints(self.N, self.n_checkpoints)

    def baseline_checkpoint_list(self) -> np.ndarray:
        if self.baseline_checkpoints is not None:
            return np.asarray(self.baseline_checkpoints, dtype=np.int64)
        ck = self.checkpoint_list()
        return ck[ck >= 10]


def default_checkpoints(N: int, n: int = 20) -> np.ndarray:
    """About ``n`` log-spaced integers from 1 to ``N`` (duplicates removed)."""
    return np.unique(np.round(np.geomspace(1, N, n)).astype(np.int64))


def _spec_name(spec: dict, role: str, i: int) -> str:
    return str(spec.get("name", f"{spec.get('kind', role)}_{i}"))


def load_config(path, env=None) -> ExperimentConfig:
    """Read a TOML or JSON config; ``MIXEST_SEED`` in ``env`` overrides ``seed``."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            d = json.loads(text)
        else:
            d = tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            d["seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    return ExperimentConfig.from_dict(d)


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    """Seed of trial ``trial``; equal to ``SeedSequence(seed).spawn(..)[1].spawn(..)[trial]``."""
    return np.random.SeedSequence(int(seed), spawn_key=(1, int(trial)))


def _reference_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(0,))


# ---------------------------------------------------------------------------
# context: target, dictionary, oracles


class _Context:
    """Objects shared by all trials; rebuilt from plain data in worker processes."""

    def __init__(self, cfg: ExperimentConfig, oracles: dict | None = None):
        self.cfg = cfg
        self.target = target_from_config(cfg.target)
        self.dic = dictionary_from_config(cfg.dictionary)
        self.categorical = isinstance(self.target, CategoricalTarget)
        if self.categorical != isinstance(self.dic, CategoricalDictionary):
            raise ConfigError("target and dictionary must both be categorical or both continuous")
        if self.categorical and self.dic.K != self.target.K:
            raise ConfigError(f"dictionary alphabet K = {self.dic.K} differs from target K = {self.target.K}")
        if isinstance(self.target, ContinuousTarget):
            box = self.target.domain
            n = cfg.kl_resolution
            self.xs = midpoints(box[0, 0], box[0, 1], n)
            self.ys = midpoints(box[1, 0], box[1, 1], n)
            self.cell = float((box[0, 1] - box[0, 0]) * (box[1, 1] - box[1, 0]) / n**2)
            self.p_grid = self.target.density_on_grid(self.xs, self.ys)
            X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
            self.grid_points = np.stack([X.ravel(), Y.ravel()], axis=1)
        self.oracles = oracles if oracles is not None else self._compute_oracles()
        m_star = self.oracles.get("m_star")
        self.m_star = None if m_star is None else np.asarray(m_star, dtype=np.float64)
        if self.m_star is not None:
            self.F, self.w = self._reference()
            self.f_star = float(self.oracles["objective"])
            if not self.categorical:
                self.q_star_grid = self.dic.mixture_on_grid(self.m_star, self.xs, self.ys)

    # oracles -----------------------------------------------------------

    def _reference(self):
        if self.categorical:
            return reference_matrix(self.dic, {"pmf": self.target.pmf})
        rng = np.random.default_rng(_reference_seed(self.cfg.seed))
        return reference_matrix(self.dic, self.target.sample(rng, self.cfg.reference_size))

    def _needs(self) -> set:
        cfg = self.cfg
        need = set()
        if set(cfg.metrics) & _WEIGHT_METRICS:
            need.add("m_star")
        for s in cfg.estimators:
            kind = str(s["schedule"].get("kind", "")).lower()
            if "strongly" in kind and "nu" not in s["schedule"]:
                need.add("nu")
            if "sqrt" in kind and "g_inf" not in s["schedule"]:
                need.add("g_inf")
        for key, val in cfg.oracles.items():
            if key in ("m_star", "g_inf") and val:
                need.add(key)
            if key == "nu" and val not in (False, None):
                need.add("nu")
        if "m_star" in need and self.categorical:
            need |= {"nu", "g_inf"}
        return need

    def _compute_oracles(self) -> dict:
        need = self._needs()
        out = {"timings": {}}
        if "m_star" in need or "nu" in need:
            t0 = time.perf_counter()
            F, w = self._reference()
            out["timings"]["reference"] = time.perf_counter() - t0
        if "m_star" in need:
            t0 = time.perf_counter()
            bic = solve_best_in_class(self.dic, {"matrix": F, "weights": w})
            out.update(
                m_star=bic.weights.tolist(),
                objective=bic.objective,
                solver={"iterations": bic.iterations, "gradient_mapping_norm": bic.gradient_mapping_norm, "converged": bic.converged},
            )
            out["timings"]["m_star"] = time.perf_counter() - t0
        if "nu" in need:
            given = self.cfg.oracles.get("nu", "estimate")
            if isinstance(given, (int, float)) and not isinstance(given, bool):
                if not given > 0:
                    raise ConfigError(f"oracles.nu must be positive, got {given}")
                out["nu"] = float(given)
                out["nu_source"] = "config"
            else:
                t0 = time.perf_counter()
                est = estimate_nu(self.dic, {"matrix": F, "weights": w})
                out["nu"] = est.nu
                out["nu_source"] = "estimate"
                out["nu_probe_range"] = [float(est.per_probe.min()), float(est.per_probe.max())]
                out["timings"]["nu"] = time.perf_counter() - t0
        if "g_inf" in need:
            t0 = time.perf_counter()
            g = estimate_g_infinity(self.dic, resolution=int(self.cfg.oracles.get("g_inf_resolution", 200)))
            out.update(g_inf=g.value, log_g_inf=g.log_value)
            out["timings"]["g_inf"] = time.perf_counter() - t0
        return out

    # schedules -----------------------------------------------------------

    def schedule_for(self, spec: dict, N: int):
        params = {k: v for k, v in spec["schedule"].items() if k != "kind"}
        kind = spec["schedule"].get("kind")
        key = str(kind).lower().replace("-", "_")
        mirror = get_mirror(spec.get("mirror", "negative_entropy"))
        if "strongly" in key:
            params.setdefault("nu", self.oracles.get("nu"))
        if "sqrt" in key:
            params.setdefault("N", N)
            params.setdefault("r_phi", r_phi(mirror, self.dic.M))
            params.setdefault("g_inf", self.oracles.get("g_inf"))
        if any(v is None for v in params.values()):
            raise ConfigError(f"schedule {kind!r} needs oracle values that were not computed")
        return make_schedule(kind, params)


# ---------------------------------------------------------------------------
# metrics


def _weight_metrics(ctx: _Context, W: np.ndarray, metrics) -> dict:
    """Metrics for weight snapshots ``W`` of shape ``(n_ck, T, M)``; values ``(n_ck, T)``."""
    out = {}
    for metric in metrics:
        if metric in _WEIGHT_METRICS and ctx.m_star is None:
            raise ConfigError(f"metric {metric!r} needs the best-in-class oracle")
        if metric == "l2_vs_best_in_class":
            out[metric] = np.sum((W - ctx.m_star) ** 2, axis=-1)
        elif metric == "gap_vs_best_in_class":
            out[metric] = objective(ctx.F, ctx.w, W) - ctx.f_star
        elif ctx.categorical:
            if metric == "kl_vs_best_in_class":
                out[metric] = kl_divergence(np.broadcast_to(ctx.m_star, W.shape), W)
            else:
                out[metric] = kl_divergence(np.broadcast_to(ctx.target.pmf, W.shape[:-1] + (ctx.dic.K,)), W @ ctx.dic.table)
        else:
            ref = ctx.p_grid if metric == "kl_vs_target" else ctx.q_star_grid
            vals = np.empty(W.shape[:-1])
            for idx in np.ndindex(*W.shape[:-1]):
                vals[idx] = kl_on_grid(ref, ctx.dic.mixture_on_grid(W[idx], ctx.xs, ctx.ys), ctx.cell)
            out[metric] = vals
    return out


def _baseline_value(ctx: _Context, spec: dict, data, trial: int, n: int) -> float:
    kind = spec["kind"]
    opts = {k: v for k, v in spec.items() if k not in ("name", "kind")}
    if kind == "add_constant":
        if not ctx.categorical:
            raise ConfigError("add_constant needs a categorical target")
        model = fit_add_constant(np.bincount(data, minlength=ctx.target.K), **opts)
        return kl_divergence(ctx.target.pmf, model.pmf)
    if ctx.categorical:
        raise ConfigError(f"{kind} needs a continuous target")
    if kind == "kde":
        model = fit_kde(data, seed=[int(ctx.cfg.seed), trial, n], **opts)
        q = kde_on_grid(model, ctx.xs, ctx.ys)
    else:
        # the quadrature grid of the fit is the KL grid, so its scores are reused
        if opts.pop("quadrature", ctx.cfg.kl_resolution) != ctx.cfg.kl_resolution:
            raise ConfigError("knn quadrature is tied to kl_resolution; set that instead")
        model = fit_knn(data, ctx.target.domain, quadrature=ctx.cfg.kl_resolution, **opts)
        q = model.grid_scores / model.normalizer
    return kl_on_grid(ctx.p_grid, q, ctx.cell)


# ---------------------------------------------------------------------------
# trials

_WORKER: dict = {}


def _worker_init(cfg_dict, oracles):
    _WORKER["ctx"] = _Context(ExperimentConfig.from_dict(cfg_dict), oracles)


def _worker_block(trials):
    return _run_block(_WORKER["ctx"], trials)


def _stream_checksum(stream: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(stream).tobytes()).hexdigest()


def _run_block(ctx: _Context, trials) -> dict:
    """Run trials ``trials`` in lock-step; returns per-trial metric arrays and timings."""
    cfg = ctx.cfg
    trials = list(trials)
    streams = [ctx.target.sample(np.random.default_rng(trial_seed(cfg.seed, t)), cfg.N) for t in trials]
    stream = np.stack(streams)
    checksums = [_stream_checksum(s) for s in streams]
    ck = cfg.checkpoint_list()
    bck = cfg.baseline_checkpoint_list()
    values, timings, finals = {}, {}, {}
    for i, spec in enumerate(cfg.estimators):
        name = _spec_name(spec, "estimator", i)
        t0 = time.perf_counter()
        try:
            schedule = ctx.schedule_for(spec, cfg.N)
            if spec.get("kind", "smd") == "smd":
                snaps = run_snapshots(
                    ctx.dic, spec.get("mirror", "negative_entropy"), schedule, spec.get("m0"),
                    stream, ck, sign=spec.get("sign", "descent"), batched=True,
                )
            else:
                snaps = softmax_sgd_baseline(ctx.dic, schedule, spec.get("w0"), stream, ck, batched=True)
            W = snaps.select(spec.get("output_mode", "cesaro"))
            values[name] = _weight_metrics(ctx, W, cfg.metrics)
        except ConfigError as exc:
            raise ConfigError(f"estimator {name!r}: {exc}") from exc
        except MixestError as exc:
            raise TrialError(trials[0], f"estimator {name!r} ({spec})", exc) from exc
        if len(ck):
            finals[name] = W[-1, 0].tolist()
        timings[name] = time.perf_counter() - t0
    for i, spec in enumerate(cfg.baselines):
        name = _spec_name(spec, "baseline", i)
        t0 = time.perf_counter()
        vals = np.empty((len(bck), len(trials)))
        for j, t in enumerate(trials):
            try:
                for k, n in enumerate(bck):
                    vals[k, j] = _baseline_value(ctx, spec, streams[j][:n], t, int(n))
            except ConfigError as exc:
                raise ConfigError(f"baseline {name!r}: {exc}") from exc
            except MixestError as exc:
                raise TrialError(t, f"baseline {name!r} ({spec})", exc) from exc
        values[name] = {"kl_vs_target": vals}
        timings[name] = time.perf_counter() - t0
    return {"trials": trials, "values": values, "timings": timings, "checksums": checksums, "finals": finals}


def _blocks(trials: int, size: int):
    return [range(s, min(trials, s + size)) for s in range(0, trials, size)]


def _check_output_dir(path, formats):
    if not formats:
        return
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out, prefix=".write-test-"):
            pass
    except OSError as exc:
        raise OutputError(f"output directory {out} is not writable: {exc}") from exc


def run_experiment(config, jobs: int = 1, emit: bool = True) -> dict:
    """Run every trial of ``config`` and return the experiment record.

    With ``emit=True`` the record is written in ``config.formats`` to
    ``config.output_dir``; the directory is checked for writability before
    any computation starts.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    cfg.validate()
    if emit:
        _check_output_dir(cfg.output_dir, cfg.formats)
    t_start = time.perf_counter()
    ctx = _Context(cfg)
    blocks = _blocks(cfg.trials, cfg.trial_block)
    if jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init, initargs=(cfg.to_dict(), ctx.oracles)) as ex:
            results = list(ex.map(_worker_block, blocks))
    else:
        results = [_run_block(ctx, b) for b in blocks]
    record = _assemble(ctx, results)
    record["timings"]["total"] = time.perf_counter() - t_start
    if emit:
        emit_outputs(record, cfg.formats, cfg.output_dir)
    return record


# ---------------------------------------------------------------------------
# record assembly


def _mean_stderr(a: np.ndarray):
    """Cross-trial mean and standard error along axis 1 (trials)."""
    T = a.shape[1]
    with np.errstate(invalid="ignore"):
        mean = a.mean(axis=1)
        se = a.std(axis=1, ddof=1) / math.sqrt(T) if T > 1 else np.zeros(a.shape[0])
    return mean, se


def _rate(ck, mean):
    ok = (np.asarray(ck) > 0) & np.isfinite(mean) & (mean > 0)
    if ok.sum() < 5:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_rate(np.asarray(ck)[ok], mean[ok])
    return {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared, "n_points": fit.n_points}


def _bounds(ctx: _Context, ck) -> dict:
    """Theorem-bound curves for the estimators they apply to."""
    o = ctx.oracles
    if ctx.m_star is None or "nu" not in o or "g_inf" not in o or not math.isfinite(o["g_inf"]):
        return {}
    nu, g = o["nu"], o["g_inf"]
    M = ctx.dic.M
    out = {}
    for i, spec in enumerate(ctx.cfg.estimators):
        if spec.get("kind", "smd") != "smd":
            continue
        name = _spec_name(spec, "estimator", i)
        mirror = get_mirror(spec.get("mirror", "negative_entropy"))
        sched = str(spec["schedule"].get("kind", "")).lower()
        last = spec.get("output_mode", "cesaro") in ("last", "last_iterate")
        m0 = uniform(M) if spec.get("m0") is None else np.asarray(spec["m0"], dtype=np.float64)
        if "strongly" in sched and last:
            if mirror.kind == "negative_entropy" and "kl_vs_best_in_class" in ctx.cfg.metrics:
                kl0 = kl_divergence(ctx.m_star, m0)
                out[name] = {
                    "metric": "kl_vs_best_in_class",
                    "theorem": "theorem2",
                    "curve": np.atleast_1d(bound_theorem2(kl0, g, nu, ck)).tolist(),
                    "statement_curve": np.atleast_1d(bound_theorem2_statement(math.sqrt(math.log(M)), g, nu, ck)).tolist(),
                    "kl0": kl0,
                }
            if mirror.kind == "euclidean" and "l2_vs_best_in_class" in ctx.cfg.metrics:
                a0 = 0.5 * float(np.sum((m0 - ctx.m_star) ** 2))
                out[name] = {
                    "metric": "l2_vs_best_in_class",
                    "theorem": "theorem1",
                    "curve": np.atleast_1d(bound_theorem1(a0, g, nu, ck)).tolist(),
                    "statement_curve": np.atleast_1d(bound_theorem1_statement(math.sqrt((M - 1) / M), g, nu, ck)).tolist(),
                    "a0": a0,
                }
        if "sqrt" in sched and not last and "gap_vs_best_in_class" in ctx.cfg.metrics:
            out[name] = {
                "metric": "gap_vs_best_in_class",
                "theorem": "proposition1",
                "value_at_N": bound_proposition1(r_phi(mirror, M), g, ctx.cfg.N),
            }
    return out


def _assemble(ctx: _Context, results) -> dict:
    cfg = ctx.cfg
    ck = cfg.checkpoint_list()
    bck = cfg.baseline_checkpoint_list()
    names = [_spec_name(s, "estimator", i) for i, s in enumerate(cfg.estimators)]
    bnames = [_spec_name(s, "baseline", i) for i, s in enumerate(cfg.baselines)]
    per_trial, summary, fits, timings = {}, {}, {}, {}
    for name in names + bnames:
        per_trial[name], summary[name], fits[name] = {}, {}, {}
        timings[name] = float(sum(r["timings"][name] for r in results))
        for metric in results[0]["values"][name]:
            a = np.concatenate([r["values"][name][metric] for r in results], axis=1)
            per_trial[name][metric] = a.T.tolist()
            mean, se = _mean_stderr(a)
            summary[name][metric] = {"mean": mean.tolist(), "stderr": se.tolist()}
            fits[name][metric] = _rate(ck if name in names else bck, mean)
    oracles = {k: v for k, v in ctx.oracles.items() if k != "timings"}
    timings["oracles"] = ctx.oracles.get("timings", {})
    record = {
        "name": cfg.name,
        "config": cfg.to_dict(),
        "checkpoints": ck.tolist(),
        "baseline_checkpoints": bck.tolist(),
        "estimators": names,
        "baselines": bnames,
        "per_trial": per_trial,
        "summary": summary,
        "oracles": oracles,
        "bounds": _bounds(ctx, ck),
        "rate_fits": fits,
        "final_weights": results[0]["finals"],
        "timings": timings,
        "provenance": {
            "mixest": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "seed": int(cfg.seed),
            "trial_seeds": [{"entropy": int(cfg.seed), "spawn_key": [1, t]} for t in range(cfg.trials)],
            "stream_sha256": [c for r in results for c in r["checksums"]],
        },
    }
    if isinstance(ctx.target, ContinuousTarget):
        record["domain"] = ctx.target.domain.tolist()
    return record


# ---------------------------------------------------------------------------
# outputs


def _fmt(v: float) -> str:
    return repr(float(v))


def metric_rows(record: dict):
    """``(estimator, trial, checkpoint, metric, value)`` rows in a fixed order."""
    for name in record["estimators"] + record["baselines"]:
        ck = record["checkpoints"] if name in record["estimators"] else record["baseline_checkpoints"]
        for metric, trials in record["per_trial"][name].items():
            for t, vals in enumerate(trials):
                for c, v in zip(ck, vals):
                    yield name, t, c, metric, v


def write_csv(record: dict, path):
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for name, t, c, metric, v in metric_rows(record):
            fh.write(f"{name},{t},{c},{metric},{_fmt(v)}\n")


def read_record(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def emit_outputs(record: dict, formats, out_dir) -> list:
    """Write the requested formats; returns the paths written."""
    formats = list(formats)
    bad = sorted(set(formats) - set(FORMATS))
    if bad:
        raise ConfigError(f"unknown output formats {bad}")
    if not formats:
        return []
    _check_output_dir(out_dir, formats)
    out = Path(out_dir)
    written = []
    if "csv" in formats:
        write_csv(record, out / "metrics.csv")
        written.append(out / "metrics.csv")
    if "json" in formats:
        with open(out / "record.json", "w") as fh:
            json.dump(record, fh, indent=1)
        written.append(out / "record.json")
    if "svg" in formats:
        from .plotting import plot_curves, plot_densities

        written.append(plot_curves(record, out / "curves.svg"))
        if "domain" in record and record["final_weights"]:
            written.append(plot_densities(record, out / "density.svg"))
    if "grid" in formats:
        if "domain" not in record:
            raise ConfigError("the grid format needs a continuous target")
        from .targets import write_density_grid_csv

        write_density_grid_csv(target_from_config(record["config"]["target"]), out / "target_density.csv")
        written.append(out / "target_density.csv")
    return written


# ---------------------------------------------------------------------------
# theorem verification and sweeps


def _verify_config(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    d = cfg.to_dict()
    d.update(changes)
    d["formats"] = []
    return ExperimentConfig.from_dict(d)


def verify_theorems(config, jobs: int = 1) -> dict:
    """Empirical check of the strongly-convex bounds and the constant-step rate.

    Runs last-iterate projected SGD and Exp-SMD with ``gamma_i = 2 / (nu (i + 1))``
    and checks (a) the cross-trial mean stays below the bound at every
    checkpoint and (b) the log-log slope is at most ``-0.8``. A third
    section runs the averaged Exp-SMD with the horizon-tuned constant step
    for every horizon in ``verify.prop1_horizons`` and checks the slope of
    the mean suboptimality gap lies in ``[-0.8, -0.35]``.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    target = target_from_config(cfg.target)
    if not isinstance(target, CategoricalTarget):
        raise ConfigError("verify-theorems needs a categorical target (exact KL)")
    if cfg.trials < 50:
        raise ConfigError(f"verify-theorems needs trials >= 50, got {cfg.trials}")
    v = dict(cfg.verify)
    slope_max = float(v.get("slope_max", -0.8))
    sc = {"kind": "strongly_convex"}
    main = _verify_config(
        cfg,
        estimators=[
            {"name": "sgd", "kind": "smd", "mirror": "euclidean", "schedule": sc, "output_mode": "last_iterate"},
            {"name": "exp_smd", "kind": "smd", "mirror": "negative_entropy", "schedule": sc, "output_mode": "last_iterate"},
        ],
        baselines=[],
        metrics=["l2_vs_best_in_class", "kl_vs_best_in_class"],
    )
    rec = run_experiment(main, jobs=jobs, emit=False)
    ck = np.asarray(rec["checkpoints"])
    checks = []
    for name, theorem in (("sgd", "theorem1"), ("exp_smd", "theorem2")):
        b = rec["bounds"][name]
        mean = np.asarray(rec["summary"][name][b["metric"]]["mean"])
        curve = np.asarray(b["curve"])
        fit = rec["rate_fits"][name][b["metric"]]
        checks.append({
            "name": f"{theorem}_bound",
            "estimator": name,
            "passed": bool(np.all(mean <= curve)),
            "max_ratio": float(np.max(mean / curve)),
        })
        checks.append({
            "name": f"{theorem}_rate",
            "estimator": name,
            "passed": fit is not None and fit["slope"] <= slope_max,
            "slope": None if fit is None else fit["slope"],
            "r_squared": None if fit is None else fit["r_squared"],
        })

    horizons = [int(h) for h in v.get("prop1_horizons", [100, 316, 1000, 3162, 10000])]
    p1_target = cfg.target if "prop1_target" not in v else {"kind": "categorical_pmf", "pmf": v["prop1_target"]}
    gaps, bounds = [], []
    for H in horizons:
        sub = _verify_config(
            cfg,
            target=p1_target,
            N=H,
            checkpoints=[H],
            estimators=[{
                "name": "exp_smd_avg", "kind": "smd", "mirror": "negative_entropy",
                "schedule": {"kind": "constant_sqrt_n"}, "output_mode": "cesaro",
            }],
            baselines=[],
            metrics=["gap_vs_best_in_class"],
        )
        r = run_experiment(sub, jobs=jobs, emit=False)
        gaps.append(r["summary"]["exp_smd_avg"]["gap_vs_best_in_class"]["mean"][0])
        bounds.append(r["bounds"]["exp_smd_avg"]["value_at_N"])
    fit = _rate(horizons, np.asarray(gaps))
    lo, hi = v.get("prop1_slope_range", [-0.8, -0.35])
    checks.append({
        "name": "proposition1_rate",
        "estimator": "exp_smd_avg",
        "passed": fit is not None and lo <= fit["slope"] <= hi,
        "slope": None if fit is None else fit["slope"],
        "r_squared": None if fit is None else fit["r_squared"],
    })
    checks.append({
        "name": "proposition1_bound",
        "estimator": "exp_smd_avg",
        "passed": bool(np.all(np.asarray(gaps) <= np.asarray(bounds))),
        "max_ratio": float(np.max(np.asarray(gaps) / np.asarray(bounds))),
    })
    return {
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        "checkpoints": ck.tolist(),
        "oracles": rec["oracles"],
        "record": rec,
        "proposition1": {"horizons": horizons, "mean_gap": gaps, "bound": bounds},
    }


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    try:
        return json.loads(text)
    except ValueError:
        return text


def set_path(d: dict, path: str, value):
    """Set ``value`` at dotted ``path``; integer parts index lists."""
    parts = path.split(".")
    node = d
    try:
        for p in parts[:-1]:
            node = node[int(p)] if isinstance(node, list) else node.setdefault(p, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot set config path {path!r}: {exc}") from exc


def sweep(config, param: str, values, jobs: int = 1, emit: bool = True) -> list:
    """One run per value of the dotted config path ``param``.

    Each run writes to ``<output_dir>/<last path part>=<value>``.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    records = []
    for raw in values:
        value = _parse_value(raw) if isinstance(raw, str) else raw
        d = cfg.to_dict()
        set_path(d, param, value)
        d["output_dir"] = str(Path(cfg.output_dir) / f"{param.split('.')[-1]}={value}")
        d["name"] = f"{cfg.name}[{param}={value}]"
        records.append(run_experiment(ExperimentConfig.from_dict(d), jobs=jobs, emit=emit))
    return records
