"""PNG figures for CLI reports (headless Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import SweepReport  # noqa: E402
from .solver import DiagnosticsSeries  # noqa: E402

__all__ = ["plot_diagnostics", "plot_sweep"]


def plot_diagnostics(diag: DiagnosticsSeries, path) -> None:
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    drift = (diag.mass - diag.mass[0]) / diag.mass[0] if diag.mass[0] else diag.mass * 0
    panels = [
        (axes[0, 0], drift, "relative mass drift"),
        (axes[0, 1], diag.h1, "H1 norm"),
        (axes[1, 0], diag.entropy_F, "entropy integral"),
        (axes[1, 1], diag.ebal, f"entropy balance residual (k={diag.k})"),
    ]
    for ax, series, title in panels:
        ax.plot(diag.t, series, marker=".", lw=1)
        ax.set_title(title, fontsize=10)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_sweep(report: SweepReport, path) -> None:
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    gaps = report.gaps
    left.loglog(gaps, report.distances, "o-", label="D (ensemble mean)")
    if np.isfinite(report.order):
        ref = report.distances[0] * (gaps / gaps[0]) ** report.order
        left.loglog(gaps, ref, "--", label=f"fit slope {report.order:.2f}")
    left.set_xlabel("|eps - mu|")
    left.set_ylabel("localized L2 distance")
    left.legend()
    left.grid(alpha=0.3, which="both")

    eps = np.asarray(report.eps_list)
    right.semilogx(eps, report.h1_max, "o-", label="max_t H1")
    right.semilogx(eps, report.entropy_sup, "s-", label="sup_t |entropy|")
    right.set_xlabel("eps")
    right.legend()
    right.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
