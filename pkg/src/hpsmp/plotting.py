"""Matplotlib renderings of the CSV reports, saved as PNG files."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0


def new_figure(width=6.0, height=None):
    fig, ax = plt.subplots(figsize=(width, height or width * GOLDEN))
    return fig, ax


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def correlation_heatmap(corr, labels, path):
    fig, ax = new_figure(5.5, 5.0)
    im = ax.imshow(np.ma.masked_invalid(corr), vmin=-1, vmax=1, cmap="coolwarm")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    for i in range(len(labels)):
        for j in range(len(labels)):
            if np.isfinite(corr[i, j]):
                ax.text(j, i, f"{corr[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8)
    return save(fig, path)


def training_curves(curves, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ep = [c.epoch for c in curves]
    ax1.plot(ep, [c.train_acc for c in curves], label="train")
    ax1.plot(ep, [c.val_acc for c in curves], label="validation")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("accuracy")
    ax1.legend()
    ax2.plot(ep, [c.train_loss for c in curves], label="train")
    ax2.plot(ep, [c.val_loss for c in curves], label="validation")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("loss")
    ax2.legend()
    return save(fig, path)


def confusion(report, path):
    fig, ax = new_figure(3.6, 3.2)
    mat = np.array([[report.tn, report.fp], [report.fn, report.tp]])
    ax.imshow(mat, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(mat[i, j]), ha="center", va="center")
    ax.set_xticks([0, 1], ["down", "up"])
    ax.set_yticks([0, 1], ["down", "up"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    return save(fig, path)


def ledger_chart(ledger, path, title=""):
    fig, ax = new_figure(8.0, 3.5)
    dates = [e.date for e in ledger.events]
    ax.plot(dates, [float(e.price) for e in ledger.events], color="0.3", lw=1)
    for action, marker, color in (("BUY", "^", "tab:green"), ("SELL", "v", "tab:red")):
        pts = [(e.date, float(e.price)) for e in ledger.events if e.action == action]
        if pts:
            ax.scatter(*zip(*pts), marker=marker, color=color, zorder=3, label=action)
    ax.set_ylabel("adjusted close")
    ax.set_title(title)
    if ledger.n_trades:
        ax.legend()
    fig.autofmt_xdate()
    return save(fig, path)


def profit_histogram(profits, path):
    fig, ax = new_figure()
    ax.hist(profits, bins=min(20, max(1, len(profits))), color="tab:blue", alpha=0.8)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("portfolio profit")
    ax.set_ylabel("runs")
    return save(fig, path)


def macd_chart(dates, state, path):
    fig, ax = new_figure(8.0, 3.5)
    ax.plot(dates, state.value, label="MACD")
    ax.plot(dates, state.signal, label="signal")
    ax.bar(dates, state.divergence, color="0.7", label="divergence")
    for action, marker, color in (("BUY", "^", "tab:green"), ("SELL", "v", "tab:red")):
        pts = [(d, v) for d, v, a in zip(dates, state.value, state.actions) if a == action]
        if pts:
            ax.scatter(*zip(*pts), marker=marker, color=color, zorder=3)
    ax.legend()
    fig.autofmt_xdate()
    return save(fig, path)
