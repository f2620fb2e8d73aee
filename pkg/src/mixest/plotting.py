"""SVG figures from an experiment record (re-plottable without rerunning)."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import PowerNorm  # noqa: E402

from .dictionary import dictionary_from_config, midpoints  # noqa: E402
from .targets import target_from_config  # noqa: E402

# fixed ids and no timestamp keep the SVG byte-stable across runs
matplotlib.rcParams["svg.hashsalt"] = "mixest"
_SVG_META = {"Date": None, "Creator": None}


def plot_curves(record: dict, path):
    """Log-log metric curves, one panel per metric, mean +- stderr bands.

    Each curve carries the SVG id ``curve-<estimator>-<metric>``, each bound
    overlay ``bound-<estimator>-<metric>``.
    """
    names = record["estimators"] + record["baselines"]
    metrics = sorted({m for n in names for m in record["summary"][n]})
    fig, axes = plt.subplots(1, len(metrics), figsize=(5.5 * len(metrics), 4.2), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        for name in names:
            if metric not in record["summary"][name]:
                continue
            ck = np.asarray(record["checkpoints"] if name in record["estimators"] else record["baseline_checkpoints"], float)
            s = record["summary"][name][metric]
            mean, se = np.asarray(s["mean"], float), np.asarray(s["stderr"], float)
            ok = (ck > 0) & np.isfinite(mean) & (mean > 0)
            (line,) = ax.plot(ck[ok], mean[ok], marker=".", label=name)
            line.set_gid(f"curve-{name}-{metric}")
            lo = np.maximum(mean - se, mean * 1e-3)
            band = ax.fill_between(ck[ok], lo[ok], (mean + se)[ok], alpha=0.2, color=line.get_color())
            band.set_gid(f"band-{name}-{metric}")
            b = record.get("bounds", {}).get(name)
            if b and b["metric"] == metric and "curve" in b:
                bc = np.asarray(b["curve"], float)
                (bl,) = ax.plot(ck[ck > 0], bc[ck > 0], ls="--", color=line.get_color(), label=f"{b['theorem']} bound ({name})")
                bl.set_gid(f"bound-{name}-{metric}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("iteration N")
        ax.set_ylabel(metric)
        ax.legend(fontsize=7)
    fig.suptitle(record.get("name", ""))
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_densities(record: dict, path, resolution: int = 200):
    """Heatmaps of the target density and each fitted mixture (trial 0, last checkpoint)."""
    cfg = record["config"]
    target = target_from_config(cfg["target"])
    dic = dictionary_from_config(cfg["dictionary"])
    box = np.asarray(record["domain"], float)
    xs = midpoints(box[0, 0], box[0, 1], resolution)
    ys = midpoints(box[1, 0], box[1, 1], resolution)
    panels = [("target", target.density_on_grid(xs, ys))]
    for name, w in record["final_weights"].items():
        panels.append((name, dic.mixture_on_grid(np.asarray(w), xs, ys)))
    vmax = max(float(p.max()) for _, p in panels)
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 4), squeeze=False)
    for ax, (title, P) in zip(axes[0], panels):
        # power norm keeps the wide modes visible next to sharp spikes
        im = ax.imshow(P.T, origin="lower", extent=box.ravel(), norm=PowerNorm(0.35, 0, vmax), cmap="viridis")
        im.set_gid(f"density-{title}")
        ax.set_title(title)
    fig.colorbar(im, ax=list(axes[0]), shrink=0.8)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path
