"""Report figures rendered next to the CSV/JSON outputs (PNG, Agg backend)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import SimTrace  # noqa: E402
from .evaluation import EcpReport, SensitivityReport, SweepResult  # noqa: E402

# Fixed style and no Software/date metadata keep files byte-identical across runs.
STYLE = {
    "figure.figsize": (7.0, 4.3),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
_META = {"Software": None}
LEVEL_COLORS = ("#bbbbbb", "#f2c14e", "#f78154", "#b4436c")


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)
    return path


def plot_trace(trace: SimTrace, path: Path, title: str = "") -> Path:
    """Gap, speeds and warning level over time."""
    t = trace.column("t")
    with plt.rc_context(STYLE):
        fig, (ax1, ax2, ax3) = plt.subplots(3, 1, sharex=True, figsize=(7.0, 6.0))
        ax1.plot(t, trace.column("gap"), color="k", lw=1)
        ax1.set_ylabel("gap [m]")
        ax2.plot(t, [v * 3.6 for v in trace.column("v_vut")], label="VUT")
        ax2.plot(t, [v * 3.6 for v in trace.column("v_tgt")], label="target")
        ax2.set_ylabel("speed [km/h]")
        ax2.legend(loc="upper right", frameon=False)
        levels = trace.column("warning_level")
        ax3.step(t, levels, where="post", color=LEVEL_COLORS[-1], lw=1)
        ax3.plot(t, trace.column("decel_achieved"), color="0.4", lw=1, label="achieved decel")
        ax3.set_yticks(range(0, 10, 3))
        ax3.set_ylabel("level / decel [m/s²]")
        ax3.set_xlabel("t [s]")
        ax3.legend(loc="upper left", frameon=False)
        for e in trace.events:
            if e.kind in ("L3", "Collision"):
                for ax in (ax1, ax2, ax3):
                    ax.axvline(e.t, color="0.6", ls=":", lw=0.8)
        if title:
            ax1.set_title(title)
        return _save(fig, path)


def plot_matrix(ids, impact_speeds, points, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(7.0, 0.3 * len(ids)), 4.3))
        x = range(len(ids))
        ax.bar(x, impact_speeds, color=[LEVEL_COLORS[3] if p < 1 else LEVEL_COLORS[0] for p in points])
        ax.set_xticks(list(x))
        ax.set_xticklabels(ids, rotation=70, ha="right", fontsize=7)
        ax.set_ylabel("relative impact speed [m/s]")
        ax2 = ax.twinx()
        ax2.plot(list(x), points, "o", color="k", ms=3)
        ax2.set_ylim(-0.05, 1.05)
        ax2.set_ylabel("points")
        ax2.grid(False)
        return _save(fig, path)


def plot_distribution(result: SweepResult, path: Path, bins: int = 20) -> Path:
    """Histogram of points with the worst case marked."""
    pts = [e.score.points for e in result.scored()]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if pts:
            ax.hist(pts, bins=bins, range=(0.0, 1.0), color=LEVEL_COLORS[2], edgecolor="white")
            ax.axvline(min(pts), color="k", ls="--", lw=1, label=f"worst {min(pts):.3f}")
            ax.legend(frameon=False)
        ax.set_xlabel("points")
        ax.set_ylabel("runs")
        ax.set_title(f"{result.plan.base.id}: {result.plan.strategy.value}, n={len(pts)}")
        return _save(fig, path)


def plot_main_effects(report: SensitivityReport, path: Path) -> Path:
    paths = list(report.ranking)
    with plt.rc_context(STYLE):
        n = max(1, len(paths))
        fig, axes = plt.subplots(1, n + 1, figsize=(3.0 * (n + 1), 3.6), squeeze=False)
        axes = axes[0]
        axes[0].barh(paths[::-1], [report.main_effect[p] for p in paths[::-1]], color=LEVEL_COLORS[3])
        axes[0].set_xlabel("main effect [points]")
        for ax, p in zip(axes[1:], paths):
            lv = report.marginals[p]
            ax.plot([m.level for m in lv], [m.mean_points for m in lv], "o-", color="k", ms=3)
            ax.set_xlabel(p)
            ax.set_ylabel("mean points")
            ax.set_ylim(-0.05, 1.05)
        return _save(fig, path)


def plot_ecp(report: EcpReport, path: Path) -> Path:
    offs = [r.offset for r in report.rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(offs, [r.impact_speed for r in report.rows], "o-", color=LEVEL_COLORS[3], label="impact speed")
        ax.set_xlabel("lateral offset [m]")
        ax.set_ylabel("relative impact speed [m/s]")
        ax2 = ax.twinx()
        trig = [math.nan if r.trigger_ttc is None else r.trigger_ttc for r in report.rows]
        ax2.plot(offs, trig, "s--", color="0.3", ms=3, label="trigger TTC")
        ax2.set_ylabel("trigger TTC [s]")
        ax2.grid(False)
        ax.set_title(f"{report.base_id}: same class A, Δimpact {report.max_impact_difference:.2f} m/s")
        return _save(fig, path)
