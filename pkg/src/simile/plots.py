"""Figure rendering for the report-producing CLI commands.

Each function writes one PNG next to the command's delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_cost_histograms(histograms: dict, path: str) -> None:
    """Overlaid cost distributions, one bar series per cost kind."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, hist in histograms.items():
        edges = [e for e, _ in hist.bins]
        counts = [c for _, c in hist.bins]
        ax.bar(edges, counts, width=hist.bin_width, align="edge", alpha=0.55, label=name)
    ax.set_xlabel("cost")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_risk_curves(rows, path: str) -> None:
    """Expected BLEU cost and expected SimiLe cost against the epoch."""
    epochs = [r.epoch for r in rows]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    top.plot(epochs, [r.expected_bleu_cost for r in rows], marker="o")
    top.set_ylabel("expected BLEU cost")
    bottom.plot(epochs, [r.expected_simile_cost for r in rows], marker="o", color="tab:orange")
    bottom.set_ylabel("expected SimiLe cost")
    bottom.set_xlabel("epoch")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_nbest_sweep(rows, path: str) -> None:
    """Final validation BLEU and SIM against the n-best list size."""
    ks = [r["k"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [100.0 * r["val_bleu"] for r in rows], marker="o", label="BLEU")
    ax.plot(ks, [100.0 * r["val_sim"] for r in rows], marker="s", label="SIM")
    ax.set_xlabel("n-best size")
    ax.set_ylabel("score (x100)")
    ax.set_xticks(ks)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_f1_delta(deltas, path: str) -> None:
    """Per-bucket F1 difference between two systems."""
    labels = [label for label, _ in deltas]
    values = [value for _, value in deltas]
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(labels)), 4))
    ax.bar(range(len(labels)), values, color=["tab:green" if v >= 0 else "tab:red" for v in values])
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("F1 delta (x100)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_metric_compare(rows, path: str) -> None:
    """Scatter of |BLEU gap| against |SIM gap| per sentence."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter([abs(r[1]) for r in rows], [abs(r[2]) for r in rows], s=12, alpha=0.6)
    lim = max([abs(r[1]) for r in rows] + [abs(r[2]) for r in rows] + [1.0])
    ax.plot([0, lim], [0, lim], color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel("|BLEU gap| (x100)")
    ax.set_ylabel("|SIM gap| (x100)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
