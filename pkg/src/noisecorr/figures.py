"""Matplotlib rendering for reports.

Figures are written next to the delimited output with fixed size, dpi, and
PNG metadata so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_PNG_METADATA = {"Software": "noisecorr"}
_DPI = 120

_STAGE_STYLE = {"stage1": "--", "final": "-"}


def _save(fig, path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def save_training_curves(histories: dict[str, list], path) -> None:
    """Loss and accuracy curves, one panel per metric, one line per stage."""
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    metrics = [("train_loss", "training loss"), ("val_loss", "validation loss"),
               ("val_accuracy", "validation accuracy")]
    for ax, (key, label) in zip(axes, metrics):
        for stage, history in histories.items():
            epochs = [h.epoch for h in history]
            ax.plot(epochs, [getattr(h, key) for h in history],
                    _STAGE_STYLE.get(stage, "-"), label=stage)
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    if len(histories) > 1:
        axes[0].legend()
    fig.tight_layout()
    _save(fig, path)


def save_sweep_chart(rows: list, path) -> None:
    """Mean clean-test accuracy vs noise level, one line per loss/T-source."""
    groups: dict[tuple[str, str], list] = {}
    for row in rows:
        if row.acc_mean is None:
            continue
        groups.setdefault((row.loss_mode, row.t_source), []).append(row)

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for (loss_mode, t_source), grp in sorted(groups.items()):
        grp = sorted(grp, key=lambda r: r.level)
        label = loss_mode if t_source == "-" else f"{loss_mode} ({t_source})"
        ax.errorbar(
            [r.level for r in grp],
            [r.acc_mean for r in grp],
            yerr=[r.acc_std for r in grp],
            marker="o", capsize=3, label=label,
        )
    ax.set_xlabel("noise level")
    ax.set_ylabel("clean-test accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
