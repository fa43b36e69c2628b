"""Figure rendering, one job per call, deterministic output."""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .readers import SCHEMAS, column_argmax, pivot, read_rows

_DPI = 130
_META = {"Software": "plotviz"}  # pin PNG metadata for pixel-stable re-renders


@dataclass(frozen=True)
class PlotJob:
    kind: str                 # profile | heatmap | spectrum | dispersion
    input_path: str
    output_path: str
    x_range: tuple | None = None
    y_range: tuple | None = None

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"one of {sorted(SCHEMAS)}")


def render(job: PlotJob) -> str:
    rows = read_rows(job.input_path, SCHEMAS[job.kind])
    fig = _FIGURES[job.kind](rows)
    for ax in fig.axes:
        if job.x_range:
            ax.set_xlim(*job.x_range)
        if job.y_range:
            ax.set_ylim(*job.y_range)
    fig.savefig(job.output_path, dpi=_DPI, metadata=_META)
    plt.close(fig)
    return job.output_path


def _fig_profile(rows):
    times, xs, (sz,) = pivot(rows)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    cmap = plt.get_cmap("viridis")
    show = np.linspace(0, len(times) - 1, min(len(times), 12)).astype(int)
    for i in show:
        ax.plot(xs, sz[i], color=cmap(i / max(len(times) - 1, 1)),
                lw=1.2, label=f"t={times[i]:g}")
    ax.set_xlabel("site offset x")
    ax.set_ylabel(r"$\langle S^z(x)\rangle$")
    ax.legend(fontsize=7, ncol=2, frameon=False)
    fig.tight_layout()
    return fig


def _fig_heatmap(rows):
    times, xs, (re_g, im_g) = pivot(rows, value_cols=(2, 3))
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.6), sharey=True)
    for ax, field, title in ((axes[0], re_g, "Re G"), (axes[1], im_g, "Im G")):
        vmax = np.max(np.abs(field)) or 1.0
        im = ax.imshow(field, origin="lower", aspect="auto", cmap="RdBu_r",
                       vmin=-vmax, vmax=vmax,
                       extent=(xs[0], xs[-1], times[0], times[-1]))
        ax.set_title(title)
        ax.set_xlabel("x")
        fig.colorbar(im, ax=ax)
    axes[0].set_ylabel("t")
    fig.tight_layout()
    return fig


def _fig_spectrum(rows):
    qs, omegas, (s,) = pivot(rows)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    im = ax.pcolormesh(qs, omegas, s.T, shading="nearest", cmap="magma")
    ridge = column_argmax(qs, omegas, s)
    ax.plot(ridge[:, 0], ridge[:, 1], color="cyan", lw=1.0, label="ridge maximum")
    ax.set_xlabel("q")
    ax.set_ylabel(r"$\omega$")
    ax.legend(loc="upper right", fontsize=8)
    fig.colorbar(im, ax=ax, label=r"$S(q,\omega)$")
    fig.tight_layout()
    return fig


def _fig_dispersion(rows):
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    ax.plot(rows[:, 0], rows[:, 1], marker=".", ms=3, lw=0.8, color="tab:blue")
    ax.set_xlabel("q")
    ax.set_ylabel(r"$\omega_{\mathrm{peak}}$")
    fig.tight_layout()
    return fig


_FIGURES = {
    "profile": _fig_profile,
    "heatmap": _fig_heatmap,
    "spectrum": _fig_spectrum,
    "dispersion": _fig_dispersion,
}
