"""Figures for CLI reports, rendered off-screen to PNG."""

import matplotlib as mpl

mpl.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def new(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    return fig, ax


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def curves(path, series, *, title, xlabel, ylabel, hline=None, logy=False):
    """One line per series with a shaded interval.

    ``series`` maps a legend label to ``(x, y, lo, hi)``.
    """
    fig, ax = new(title, xlabel, ylabel)
    for label, (x, y, lo, hi) in series.items():
        line, = ax.plot(x, y, marker="o", ms=3, label=label)
        ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.2, lw=0)
    if hline is not None:
        ax.axhline(hline, color="0.4", ls="--", lw=0.8)
    if logy:
        ax.set_yscale("log")
    if series:
        ax.legend(fontsize=8)
    save(fig, path)


def level_sizes(path, sizes, title):
    fig, ax = new(title, "generation n", "vertices at generation n")
    n = list(range(1, len(sizes)))
    ax.loglog(n, sizes[1:], marker=".", ms=3)
    save(fig, path)
