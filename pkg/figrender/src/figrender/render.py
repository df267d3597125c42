"""Render heatmaps and curve plots from sandlab CSV exports.

Rendering is a pure function of the input files: fixed figure geometry, no
timestamps in the output metadata, and a fixed SVG hash salt, so re-running
produces byte-identical images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .layouts import comb_degree, position
from .specs import PlotSpec, PlotSpecError, read_csv_columns


@dataclass
class RenderResult:
    output: str
    marker_count: int


def _save(fig, spec: PlotSpec):
    if spec.format == "svg":
        plt.rcParams["svg.hashsalt"] = "figrender"
        fig.savefig(spec.output, format="svg",
                    metadata={"Date": None, "Creator": "figrender"})
    else:
        fig.savefig(spec.output, format="png", dpi=110,
                    metadata={"Software": "figrender"})
    plt.close(fig)


def render_heatmap(spec: PlotSpec) -> RenderResult:
    """One marker per CSV row, color and size proportional to the value column.

    value "emitted" is deg(v) * u(v) (total mass emitted), available for the
    comb family where the degree is determined by the label.
    """
    if spec.value == "emitted":
        cols = read_csv_columns(spec.input, ["label", "u"])
        if spec.family != "comb":
            raise PlotSpecError("the emitted-mass view is defined for the comb family")
        vals = np.array([float(u) * comb_degree(lab)
                         for lab, u in zip(cols["label"], cols["u"])])
    else:
        cols = read_csv_columns(spec.input, ["label", spec.value])
        vals = np.array([float(v) for v in cols[spec.value]])
    labels = cols["label"]
    xy = np.array([position(spec.family, lab) for lab in labels])
    if spec.scale == "log":
        floor = vals[vals > 0].min() if np.any(vals > 0) else 1.0
        cvals = np.log10(np.maximum(vals, floor))
    else:
        cvals = vals
    vmax = cvals.max() if len(cvals) else 1.0
    vmin = cvals.min() if len(cvals) else 0.0
    span = vmax - vmin if vmax > vmin else 1.0
    sizes = 4.0 + 60.0 * (cvals - vmin) / span
    fig, ax = plt.subplots(figsize=(7.0, 5.5))
    sc = ax.scatter(xy[:, 0], xy[:, 1], c=cvals, s=sizes, cmap=spec.colormap,
                    linewidths=0)
    ax.set_aspect("equal")
    ax.set_axis_off()
    if spec.title:
        ax.set_title(spec.title)
    fig.colorbar(sc, ax=ax, shrink=0.8)
    _save(fig, spec)
    return RenderResult(output=spec.output, marker_count=len(labels))


def render_curves(spec: PlotSpec) -> RenderResult:
    """Grouped line plot of (x, y, group); CI bands when replicas are present.

    With a `replica` column, rows sharing (group, x) are aggregated to their
    mean with a normal-approximation 95% band.
    """
    cols = read_csv_columns(spec.input, ["x", "y", "group"])
    has_replicas = "replica" in cols
    xs = np.array([float(v) for v in cols["x"]])
    ys = np.array([float(v) for v in cols["y"]])
    groups = np.array(cols["group"])
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    count = 0
    for gname in sorted(set(groups.tolist())):
        m = groups == gname
        gx, gy = xs[m], ys[m]
        if has_replicas:
            ux = np.unique(gx)
            mean = np.array([gy[gx == x].mean() for x in ux])
            band = np.array([1.96 * gy[gx == x].std(ddof=1) / math.sqrt(max((gx == x).sum(), 1))
                             if (gx == x).sum() > 1 else 0.0 for x in ux])
            ax.plot(ux, mean, marker="o", label=str(gname))
            ax.fill_between(ux, mean - band, mean + band, alpha=0.25)
            count += len(ux)
        else:
            order = np.argsort(gx)
            ax.plot(gx[order], gy[order], marker="o", label=str(gname))
            count += len(gx)
    if spec.kind == "sweep":
        ax.set_ylim(-0.02, 1.02)  # fractions live in [0, 1]
    if spec.scale == "log":
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.legend()
    if spec.title:
        ax.set_title(spec.title)
    _save(fig, spec)
    return RenderResult(output=spec.output, marker_count=count)


def render(spec: PlotSpec) -> RenderResult:
    if spec.kind == "heatmap":
        return render_heatmap(spec)
    return render_curves(spec)
