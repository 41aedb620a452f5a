"""Figure rendering for the CLI report paths.

Every report command writes its delimited output first; these helpers add a
PNG next to it.  All rendering targets the Agg backend so headless runs work.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def _new_fig(width=7.0, height=4.0):
    return plt.subplots(figsize=(width, height))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def sweep_figure(offsets, mus, statuses, path, axis_label="swept demand (pu)"):
    """Multiplier trajectories along a parameter sweep."""
    offsets = np.asarray(offsets, float)
    mus = np.asarray(mus, float)
    fig, ax = _new_fig()
    for j in range(mus.shape[1]):
        ax.plot(offsets, mus[:, j], label=f"mu_{j}", lw=1.2)
    bad = [d for d, s in zip(offsets, statuses) if s != "ok"]
    if bad:
        ax.axvline(min(bad), color="k", ls="--", lw=1, label="infeasible")
    ax.set_xlabel(axis_label)
    ax.set_ylabel("multiplier")
    ax.legend(ncol=2, fontsize=8)
    ax.set_title("multipliers along the sweep")
    return _save(fig, path)


def loss_figure(history, path, title="training loss"):
    fig, ax = _new_fig(6.0, 3.6)
    ax.semilogy(history["train"], label="train", lw=1.0)
    ax.semilogy(history["val"], label="val", lw=1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.legend()
    ax.set_title(title)
    return _save(fig, path)


def bench_figure(report_dict, path):
    """KKT means (log scale) and timing for each method/dataset pair."""
    methods = [m for m in ("psnn", "dnn") if m in report_dict["methods"]]
    datasets = list(report_dict["datasets"])
    metric_names = ["kkt1_x", "kkt1_delta", "kkt2_eq", "kkt2_ineq", "kkt3", "kkt4"]
    fig, axes = plt.subplots(1, 2, figsize=(10.5, 4.0))

    ax = axes[0]
    width = 0.8 / max(1, len(methods) * len(datasets))
    ticks = np.arange(len(metric_names))
    floor = 1e-30
    pos = 0
    for m in methods:
        for d in datasets:
            kkt = report_dict["methods"][m][d]["kkt"]
            vals = [max(kkt[name], floor) for name in metric_names]
            ax.bar(ticks + pos * width, vals, width, label=f"{m}/{d}")
            pos += 1
    ax.set_yscale("log")
    ax.set_xticks(ticks + 0.4 - width / 2)
    ax.set_xticklabels(metric_names, rotation=30, ha="right")
    ax.set_ylabel("mean KKT residual")
    ax.legend(fontsize=8)
    ax.set_title("KKT residual means")

    ax = axes[1]
    labels, times = [], []
    for m in methods:
        for d in datasets:
            t = report_dict["methods"][m][d].get("batch_seconds")
            if t is not None:
                labels.append(f"{m}\n{d}")
                times.append(t)
    for d in datasets:
        t = report_dict.get("oracle", {}).get(d, {}).get("loop_seconds")
        if t is not None:
            labels.append(f"oracle\n{d}")
            times.append(t)
    ax.bar(np.arange(len(labels)), times, color="tab:gray")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_yscale("log")
    ax.set_ylabel("seconds for the test set")
    ax.set_title("prediction time")
    return _save(fig, path)


def sim_figure(hours, dispatch_q, pass_counts, path, gen_labels=None):
    """Hourly dispatch quantile fans per generator plus acceptance counts.

    dispatch_q is (24, n_g, 5) with columns (min, q25, median, q75, max).
    """
    dispatch_q = np.asarray(dispatch_q, float)
    n_g = dispatch_q.shape[1]
    fig, axes = plt.subplots(1, 2, figsize=(10.5, 4.0))
    ax = axes[0]
    for g in range(n_g):
        label = gen_labels[g] if gen_labels else f"gen {g}"
        med = dispatch_q[:, g, 2]
        ax.plot(hours, med, lw=1.4, label=label)
        ax.fill_between(hours, dispatch_q[:, g, 1], dispatch_q[:, g, 3], alpha=0.25)
    ax.set_xlabel("hour")
    ax.set_ylabel("dispatch (pu)")
    ax.legend(fontsize=8)
    ax.set_title("hourly dispatch (median, interquartile band)")

    ax = axes[1]
    ax.bar(hours, pass_counts, color="tab:green", alpha=0.8)
    ax.set_xlabel("hour")
    ax.set_ylabel("KKT-passing samples")
    ax.set_title("verified samples per hour")
    return _save(fig, path)
