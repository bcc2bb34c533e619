"""Figure rendering for simulation outputs.

Renders PNG files next to the delimited outputs; import stays cheap and
headless (Agg backend, no display needed).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import ConfigError, SlotRecord

_MAX_POINTS = 5000


def _stride(n: int) -> int:
    return max(1, n // _MAX_POINTS)


def render_slots(records: list[SlotRecord], path: str, title: str | None = None) -> str:
    """Time series of one run: draw and price, battery charge, queues."""
    if not records:
        raise ConfigError("nothing to plot")
    k = _stride(len(records))
    sub = records[::k]
    t = np.array([r.slot for r in sub])
    has_queues = any(r.backlog > 0 or r.delay_queue > 0 for r in sub)
    n_panels = 3 if has_queues else 2
    fig, axes = plt.subplots(
        n_panels, 1, figsize=(10, 2.6 * n_panels), sharex=True
    )

    ax = axes[0]
    ax.step(t, [r.grid_power for r in sub], where="post", lw=0.9, label="grid draw")
    ax.step(
        t, [r.discharge - r.recharge for r in sub],
        where="post", lw=0.9, label="battery to load",
    )
    ax.set_ylabel("power")
    ax.legend(loc="upper left", fontsize=8)
    twin = ax.twinx()
    twin.step(
        t, [r.unit_price for r in sub],
        where="post", lw=0.8, color="tab:red", alpha=0.6, label="unit price",
    )
    twin.set_ylabel("unit price")
    twin.legend(loc="upper right", fontsize=8)

    ax = axes[1]
    ax.step(t, [r.charge_after for r in sub], where="post", lw=0.9)
    ax.set_ylabel("charge")

    if has_queues:
        ax = axes[2]
        ax.step(t, [r.backlog for r in sub], where="post", lw=0.9, label="backlog")
        ax.step(
            t, [r.delay_queue for r in sub], where="post", lw=0.9, label="delay queue"
        )
        ax.set_ylabel("queued work")
        ax.legend(loc="upper left", fontsize=8)

    axes[-1].set_xlabel("slot")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_sweep(rows: list[dict], path: str, title: str | None = None) -> str:
    """Average slot cost against the swept value, oracle alongside when
    present; errored points are skipped."""
    ok = [r for r in rows if r.get("error") is None and r.get("total_cost") is not None]
    if not ok:
        raise ConfigError("no successful sweep points to plot")
    x = [r["value"] for r in ok]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x, [r["avg_cost_per_slot"] for r in ok], "o-", label="controller")
    if any(r.get("oracle_total_cost") is not None for r in ok):
        ax.plot(
            x,
            [
                r["oracle_total_cost"] / r["n_slots"]
                if r.get("oracle_total_cost") is not None
                else np.nan
                for r in ok
            ],
            "s--",
            label="offline oracle",
        )
    ax.set_xlabel(ok[0]["axis"])
    ax.set_ylabel("average cost per slot")
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_schemes(rows: list[dict], path: str, title: str | None = None) -> str:
    """Bar chart of each scheme's cost relative to serving from the grid."""
    if not rows:
        raise ConfigError("nothing to plot")
    labels = [f"{r['scheme']}\n{r['label']}" for r in rows]
    ratios = [r["ratio_pct"] for r in rows]
    if any(v is None for v in ratios):
        ratios = [r["total_cost"] for r in rows]
        ylabel = "total cost"
    else:
        ylabel = "cost relative to grid only (%)"
    fig, ax = plt.subplots(figsize=(7, 4.5))
    bars = ax.bar(labels, ratios, color="tab:blue", width=0.6)
    for bar, v in zip(bars, ratios):
        ax.text(
            bar.get_x() + bar.get_width() / 2, bar.get_height(),
            f"{v:.1f}", ha="center", va="bottom", fontsize=9,
        )
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
