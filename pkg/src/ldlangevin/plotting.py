"""SVG figures with reproducible bytes.

matplotlib's SVG backend writes a date and random element ids unless told
otherwise; both are pinned here so that a rerun produces the same file.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["save_svg", "plot_tail_curve", "plot_path", "plot_histogram_bound",
           "plot_xy", "plot_summary"]


def save_svg(fig, fname, description: str = "") -> None:
    """Write ``fig`` as SVG with a fixed hash salt and no timestamp."""
    with matplotlib.rc_context({"svg.hashsalt": "ldlangevin", "svg.fonttype": "path"}):
        fig.savefig(fname, format="svg", metadata={"Date": None, "Description": description})
    plt.close(fig)


def _fig(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def plot_tail_curve(curve, fname, title="tail curve", description=""):
    """Scatter of ``log P`` against ``level**r`` with the fitted line."""
    x = curve.levels ** curve.speed_r
    fig, ax = _fig(title, f"level^{curve.speed_r:.3g}", "log probability")
    ok = np.isfinite(curve.log_prob)
    ax.errorbar(x[ok], curve.log_prob[ok], yerr=np.where(np.isfinite(curve.log_se[ok]),
                                                         curve.log_se[ok], 0.0),
                fmt="o", ms=4, capsize=2, label="estimate")
    if np.isfinite(curve.slope):
        xx = np.linspace(x[ok].min(), x[ok].max(), 50)
        ax.plot(xx, curve.intercept + curve.slope * xx, "-",
                label=f"fit slope {curve.slope:.4g}, R2 {curve.r2:.4f}")
    ax.legend(loc="best")
    save_svg(fig, fname, description)


def plot_path(times, values, fname, title="path", ylabel="state", description=""):
    fig, ax = _fig(title, "time", ylabel)
    ax.plot(times, values, lw=0.8)
    save_svg(fig, fname, description)


def plot_histogram_bound(edges, empirical, bound, fname, title="first passage",
                         description=""):
    """Histogram density as steps and the bin-averaged bound as a line."""
    edges = np.asarray(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    fig, ax = _fig(title, "time", "density")
    ax.stairs(empirical, edges, label="empirical")
    ax.plot(mids, bound, "o-", ms=3, label="bound")
    ax.legend(loc="best")
    save_svg(fig, fname, description)


def plot_xy(x, ys: dict, fname, title="", xlabel="x", ylabel="y", description="",
            logy=False):
    fig, ax = _fig(title, xlabel, ylabel)
    for lab, y in ys.items():
        ax.plot(x, y, "o-", ms=3, label=lab)
    if logy:
        ax.set_yscale("log")
    ax.legend(loc="best")
    save_svg(fig, fname, description)


def plot_summary(names, values, fname, title="summary", ylabel="value", description=""):
    """Bar chart of one scalar per run."""
    fig, ax = _fig(title, "run", ylabel)
    pos = np.arange(len(names))
    ax.bar(pos, values)
    ax.set_xticks(pos, names, rotation=30, ha="right")
    fig.tight_layout()
    save_svg(fig, fname, description)
