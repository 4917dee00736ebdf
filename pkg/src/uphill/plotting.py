"""Figures for the simulation reports.

Everything renders to self-contained SVG through matplotlib's SVG backend
with a fixed hash salt and no timestamp, so the same data always produces the
same bytes.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "uphill",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "image.cmap": "viridis",
    "figure.dpi": 100,
}

SVG_METADATA = {"Date": None, "Creator": None}


def size(scale=1.0, ratio=None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    width = 6.4 * scale
    return (width, width * (ratio if ratio is not None else golden))


def save(fig, path):
    path = Path(path)
    with matplotlib.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def plot_entropy_trace(trace, path, title=None):
    """Two panels: Sigma and S-tilde against time, and entropy production."""
    with matplotlib.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=size(1.3, 0.4))
        t = trace.t
        ax0.plot(t, trace.sigma_entropy, label=r"$\Sigma$ (invariant measure)")
        ax0.plot(t, trace.tilde_entropy, "--", label=r"$\tilde S$ (Cartesian)")
        ax0.set_xlabel("t")
        ax0.set_ylabel("entropy")
        ax0.legend(frameon=False)
        ax1.plot(t, trace.entropy_production_direct, label=r"$\sigma$ direct")
        ax1.plot(t, trace.entropy_production_fisher, ":", label=r"$\sigma$ Fisher")
        ax1.set_xlabel("t")
        ax1.set_ylabel(r"$\sigma$")
        ax1.set_yscale("log")
        ax1.legend(frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
    return save(fig, path)


def plot_heatmap(values, bounds, path, title="", xlabel="", ylabel="", contours=None, log=False):
    """Heatmap of ``values[i, j]`` with axis 0 horizontal; ``contours`` maps label -> (field, colour)."""
    values = np.asarray(values, dtype=float)
    with matplotlib.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=size(0.8, 0.85))
        shown = np.log10(values) if log else values
        im = ax.imshow(shown.T, origin="lower", extent=tuple(bounds), aspect="auto",
                       interpolation="nearest")
        cb = fig.colorbar(im, ax=ax)
        if log:
            cb.set_label("log10")
        if contours:
            x = np.linspace(bounds[0], bounds[1], values.shape[0])
            y = np.linspace(bounds[2], bounds[3], values.shape[1])
            for label, (field, colour) in contours.items():
                field = np.asarray(field, dtype=float)
                levels = np.quantile(field[np.isfinite(field)], [0.2, 0.4, 0.6, 0.8])
                ax.contour(x, y, np.log10(field).T if label == "B" else field.T,
                           levels=np.log10(levels) if label == "B" else levels,
                           colors=colour, linewidths=0.6)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
    return save(fig, path)


def plot_comparison(left, right, bounds, path, titles=("solver", "particles")):
    vmax = float(max(np.nanmax(left), np.nanmax(right)))
    with matplotlib.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=size(1.2, 0.45))
        for ax, values, title in zip(axes, (left, right), titles):
            im = ax.imshow(np.asarray(values).T, origin="lower", extent=tuple(bounds), aspect="auto",
                           vmin=0.0, vmax=vmax, interpolation="nearest")
            ax.set_title(title)
            ax.set_xlabel(r"$\chi$")
            ax.set_ylabel("z")
        fig.colorbar(im, ax=list(axes))
    return save(fig, path)
