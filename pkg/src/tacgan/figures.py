"""Report figures rendered next to the delimited outputs.

matplotlib is imported lazily with the Agg backend so library users who
never render figures pay no import cost and headless runs just work.
"""

from __future__ import annotations

import os

from .evaluation import DiversityReport


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_loss_curves(log_path: str, out_path: str) -> str:
    """Plot the four per-step loss terms from a training log TSV."""
    import numpy as np

    steps, series = [], {"L_DS": [], "L_DC": [], "L_GS": [], "L_GC": []}
    with open(log_path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                continue
            steps.append(int(parts[0]))
            for name, value in zip(header[1:], parts[1:]):
                series[name].append(float(value))

    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, values in series.items():
        ax.plot(steps, np.asarray(values), label=name, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("training losses")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_diversity_scatter(
    train: DiversityReport, generated: DiversityReport, out_path: str
) -> str:
    """Per-class similarity of training vs generated images, one point per
    class, with the identity line for reference."""
    plt = _plt()
    classes = sorted(set(train.per_class_mean_msssim) & set(generated.per_class_mean_msssim))
    xs = [train.per_class_mean_msssim[c] for c in classes]
    ys = [generated.per_class_mean_msssim[c] for c in classes]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(xs, ys, s=24, alpha=0.8)
    lim = max([0.05] + xs + ys) * 1.1
    ax.plot([0, lim], [0, lim], color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel("class mean MS-SSIM (training images)")
    ax.set_ylabel("class mean MS-SSIM (generated images)")
    ax.set_title("within-class similarity")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def maybe_render(render_fn, *args, **kwargs) -> str | None:
    """Render unless figures are disabled via TACGAN_NO_FIGURES=1."""
    if os.environ.get("TACGAN_NO_FIGURES") == "1":
        return None
    return render_fn(*args, **kwargs)
