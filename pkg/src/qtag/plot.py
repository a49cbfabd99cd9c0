"""Static SVG charts for harness CSV output."""
from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _histogram(rows, ax):
    bits = [int(r["correct_bits"]) for r in rows]
    for col, color in (("unwatermarked", "tab:blue"), ("watermarked", "tab:red")):
        ax.bar(bits, [int(r[col]) for r in rows], width=0.9, alpha=0.6, label=col, color=color)
    ax.set_xlabel("correct message bits")
    ax.set_ylabel("circuits")


def _tpr_lines(rows, ax):
    series = defaultdict(list)
    for r in rows:
        label = f"{r['experiment']} {r['attack_kind']}"
        if r["experiment"] == "capacity":
            label += f" k={r['capacity']}"
        if r["experiment"] == "steps":
            label += f" T={r['steps']}"
        series[label].append((int(r["attack_count"]), float(r["tpr"])))
    for label, pts in series.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel("attack count")
    ax.set_ylabel("TPR")
    ax.set_ylim(-0.02, 1.02)


def plot_csv(rows: list[dict], out_path) -> None:
    """Histogram for calibration CSV, TPR-vs-count lines for bench CSV."""
    if not rows:
        raise ValueError("CSV has no data rows")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if "correct_bits" in rows[0]:
        _histogram(rows, ax)
    elif "tpr" in rows[0]:
        _tpr_lines(rows, ax)
    else:
        plt.close(fig)
        raise ValueError("unrecognised CSV columns")
    ax.legend(fontsize="small")
    fig.tight_layout()
    # no date metadata, so identical data gives identical files
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
