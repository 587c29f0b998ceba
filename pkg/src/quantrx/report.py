"""Delimited outputs and the matplotlib figures rendered alongside them.

Every CLI report writes a CSV (the machine-readable artifact) and a PNG
next to it.  BLER values of exactly 0 are stored as 0 in the CSV; the
1e-6 display floor exists only in the figures.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sweep import BlerCurve, BlerPoint

__all__ = [
    "BLER_CSV_SCHEMA",
    "PLOT_FLOOR",
    "write_bler_csv",
    "read_bler_csv",
    "write_loss_csv",
    "write_stats_csv",
    "write_sizes_csv",
    "plot_bler",
    "plot_weight_histograms",
    "plot_loss",
    "plot_sizes",
]

BLER_CSV_SCHEMA = "qrx-bler-v1"
PLOT_FLOOR = 1e-6

_STYLE = {
    "neural-receiver": dict(color="tab:blue", marker="o"),
    "neural-receiver-ptq-perChannel-int8": dict(color="tab:red", marker="s"),
    "neural-receiver-ptq-perChannel-int4": dict(color="tab:green", marker="^"),
    "neural-receiver-ptq-perTensor-int8": dict(color="tab:purple", marker="D"),
    "neural-receiver-ptq-perTensor-int4": dict(color="tab:orange", marker="*"),
    "baseline-perfect-csi": dict(color="tab:cyan", marker="+"),
    "baseline-ls-estimation": dict(color="black", marker="x"),
}


def write_bler_csv(curves: list, path) -> None:
    lines = [f"# {BLER_CSV_SCHEMA}", "variant,mobility,ebno_db,bler,blocks,errors"]
    for c in curves:
        for p in c.points:
            blocks = "" if p.blocks is None else p.blocks
            errors = "" if p.errors is None else p.errors
            lines.append(f"{c.variant},{c.mobility},{p.ebno_db!r},{p.bler!r},{blocks},{errors}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_bler_csv(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    lines = [ln for ln in lines if not ln.startswith("#")]
    if lines[0] != "variant,mobility,ebno_db,bler,blocks,errors":
        raise ValueError(f"unexpected BLER CSV header in {path}")
    curves: dict = {}
    for ln in lines[1:]:
        var, mob, x, y, blocks, errors = ln.split(",")
        point = BlerPoint(
            float(x),
            float(y),
            int(blocks) if blocks else None,
            int(errors) if errors else None,
        )
        curves.setdefault((var, mob), []).append(point)
    return [BlerCurve(var, mob, pts) for (var, mob), pts in curves.items()]


def write_loss_csv(trace: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,loss,l2_term\n")
        for it, loss, l2 in trace:
            fh.write(f"{it},{loss!r},{l2!r}\n")


def write_stats_csv(stats: list, summary_path, hist_path) -> None:
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("layer,count,min,max,mean,std\n")
        for s in stats:
            fh.write(f"{s.layer_name},{s.count},{s.min!r},{s.max!r},{s.mean!r},{s.std!r}\n")
    with open(hist_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("layer,bin_left,bin_right,count\n")
        for s in stats:
            for left, right, c in zip(s.bin_edges[:-1], s.bin_edges[1:], s.bin_counts):
                fh.write(f"{s.layer_name},{left!r},{right!r},{int(c)}\n")


def write_sizes_csv(reports: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,weight_payload_bytes,float_payload_bytes,total_payload_bytes,reduction_vs_float32\n")
        for r in reports:
            fh.write(
                f"{r.label},{r.weight_payload_bytes},{r.float_payload_bytes},"
                f"{r.total_payload_bytes},{r.reduction!r}\n"
            )


def _plot_curves_on(ax, curves: list, dashed: bool = False) -> None:
    for c in curves:
        pts = sorted(c.points, key=lambda p: p.ebno_db)
        x = [p.ebno_db for p in pts]
        y = [max(p.bler, PLOT_FLOOR) for p in pts]
        style = dict(_STYLE.get(c.variant, {}))
        label = c.variant + (" (reference)" if dashed else "")
        ax.semilogy(
            x, y, linestyle="--" if dashed else "-",
            alpha=0.45 if dashed else 1.0, markersize=4, label=label, **style,
        )


def plot_bler(curves: list, path, reference: list = None, title: str = None) -> None:
    mobilities = sorted({c.mobility for c in curves})
    fig, axes = plt.subplots(
        len(mobilities), 1, figsize=(7.0, 4.0 * len(mobilities)), squeeze=False
    )
    for ax, mob in zip(axes[:, 0], mobilities):
        _plot_curves_on(ax, [c for c in curves if c.mobility == mob])
        if reference:
            _plot_curves_on(ax, [c for c in reference if c.mobility == mob], dashed=True)
        ax.set_xlabel(r"$E_b/N_0$ [dB]")
        ax.set_ylabel("BLER")
        ax.set_title(f"{title + ' — ' if title else ''}{mob} mobility")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_weight_histograms(stats: list, path) -> None:
    n = len(stats)
    cols = min(4, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows), squeeze=False)
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    for ax, s in zip(axes.ravel(), stats):
        centers = 0.5 * (s.bin_edges[:-1] + s.bin_edges[1:])
        width = np.diff(s.bin_edges)
        ax.bar(centers, s.bin_counts, width=width, color="tab:blue", alpha=0.8)
        ax.set_title(f"{s.layer_name}\nstd={s.std:.3f}", fontsize=8)
        ax.tick_params(labelsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loss(trace: list, path, window: int = 50) -> None:
    its = np.array([row[0] for row in trace])
    loss = np.array([row[1] for row in trace])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(its, loss, alpha=0.35, label="loss")
    if loss.size >= window:
        kernel = np.ones(window) / window
        smooth = np.convolve(loss, kernel, mode="valid")
        ax.plot(its[window - 1 :], smooth, label=f"{window}-iter mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sizes(reports: list, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [r.label for r in reports]
    sizes = [r.total_payload_bytes / 1024.0 for r in reports]
    bars = ax.bar(labels, sizes, color="tab:blue", alpha=0.85)
    for bar, r in zip(bars, reports):
        ax.annotate(
            f"{r.reduction:.2f}x",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center", va="bottom", fontsize=8,
        )
    ax.set_ylabel("weight payload [KiB]")
    ax.tick_params(axis="x", rotation=20, labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
