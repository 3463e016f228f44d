"""Report figures rendered next to the delimited suite output.

One PNG per suite run.  Rows carrying both an estimate and a model value
are drawn as an estimate-versus-model scatter with the fitted constant;
otherwise the first diagnostic column present is plotted as a series.
Rendering is headless (Agg) and never alters report data.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_report"]

_SERIES_COLUMNS = ("ratio", "max_abs_dev", "block_max", "deviation", "growth")


def render_report(report, path: str, dpi: int = 120) -> str:
    rows = report.rows
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    title = f"{report.config.suite} (seed {report.config.seed})"
    if rows and "estimate" in rows[0] and "model" in rows[0]:
        m = np.array([float(r["model"]) for r in rows])
        e = np.array([float(r["estimate"]) for r in rows])
        good = np.array([bool(r["pass"]) for r in rows])
        for mask, color, label in ((good, "tab:blue", "pass"),
                                   (~good, "tab:red", "fail")):
            if np.any(mask):
                ax.scatter(m[mask], e[mask], s=18, color=color, label=label,
                           alpha=0.75)
        if np.any(m > 0):
            c = float(m @ e / (m @ m))
            grid = np.linspace(0.0, float(m.max()) * 1.05, 64)
            ax.plot(grid, c * grid, color="black", linewidth=1.0,
                    label=f"fit C = {c:.3g}")
        ax.set_xlabel("model value")
        ax.set_ylabel("estimated norm")
        ax.legend(loc="best", fontsize=8)
    else:
        column = next((c for c in _SERIES_COLUMNS if rows and c in rows[0]), None)
        if column is None:
            ax.text(0.5, 0.5, "no rows", ha="center", va="center",
                    transform=ax.transAxes)
        else:
            y = np.array([float(r[column]) for r in rows])
            good = np.array([bool(r["pass"]) for r in rows])
            x = np.arange(len(rows))
            ax.plot(x, y, color="tab:blue", linewidth=0.8, alpha=0.6)
            ax.scatter(x[good], y[good], s=14, color="tab:blue")
            if np.any(~good):
                ax.scatter(x[~good], y[~good], s=20, color="tab:red")
            ax.set_xlabel("row")
            ax.set_ylabel(column)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
