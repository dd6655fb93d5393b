"""Render kernel-ratio CSV tables into band-distorted figures.

Input is the frozen CSV schema

    r, j_r, j_half_r, ratio, log_ratio, is_marker, m

where non-marker rows sample the ratio curve log-uniformly inside scale bands
(band m spans [sqrt(A_m), sqrt(A_{m+1}))) and marker rows carry the critical
radii.  The x-axis is distorted so every band gets equal width: within band m
a radius maps to m + (log r - log e_m) / (log e_{m+1} - log e_m), with the end
slopes extended beyond the sampled range.  Markers are drawn as red dots in a
dedicated SVG group so they can be counted downstream.

Rendering is a pure function of the CSV: a fixed SVG hash salt and stripped
date metadata make reruns byte-identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "plotgen"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

EXPECTED_COLUMNS = ("r", "j_r", "j_half_r", "ratio", "log_ratio", "is_marker", "m")
MARKER_GROUP_ID = "ratio-markers"


class RenderError(Exception):
    pass


@dataclass(frozen=True)
class FigureSpec:
    csv_path: Path
    out_base: Path              # writes <out_base>.svg and <out_base>.png
    title: str = ""
    marker_color: str = "red"
    marker_size: float = 28.0
    dpi: int = 144
    formats: tuple[str, ...] = ("svg", "png")


@dataclass(frozen=True)
class FigureRowData:
    r: float
    ratio: float
    log_ratio: float
    is_marker: bool
    m: int


@dataclass(frozen=True)
class BandAxis:
    """Piecewise log-linear transform giving each scale band equal width."""

    edges: tuple[float, ...]  # sqrt(A_0) ... sqrt(A_{M+1}), strictly increasing

    def __post_init__(self):
        if len(self.edges) < 2:
            raise RenderError("need at least one band (two edges)")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise RenderError("band boundaries must be strictly increasing")
        if self.edges[0] <= 0.0:
            raise RenderError("band edges must be positive")

    def position(self, r: float) -> float:
        if not (r > 0.0 and math.isfinite(r)):
            raise RenderError(f"radius {r!r} has no position on the band axis")
        logs = [math.log(e) for e in self.edges]
        x = math.log(r)
        if x <= logs[0]:
            return (x - logs[0]) / (logs[1] - logs[0])
        for k in range(len(logs) - 1):
            if x <= logs[k + 1]:
                return k + (x - logs[k]) / (logs[k + 1] - logs[k])
        top = len(logs) - 2
        return top + (x - logs[top]) / (logs[top + 1] - logs[top])


def read_rows(csv_path: Path) -> list[FigureRowData]:
    try:
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != EXPECTED_COLUMNS:
                raise RenderError(
                    f"malformed CSV header {reader.fieldnames!r}; "
                    f"expected {EXPECTED_COLUMNS}")
            rows = [
                FigureRowData(
                    r=float(row["r"]),
                    ratio=float(row["ratio"]),
                    log_ratio=float(row["log_ratio"]),
                    is_marker=row["is_marker"] == "1",
                    m=int(row["m"]),
                )
                for row in reader
            ]
    except OSError as exc:
        raise RenderError(f"cannot read {csv_path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise RenderError(f"malformed CSV row in {csv_path}: {exc}") from exc
    if not rows:
        raise RenderError(f"{csv_path} contains no data rows")
    return rows


def band_axis(rows: list[FigureRowData]) -> BandAxis:
    grid = [row for row in rows if not row.is_marker]
    if not grid:
        raise RenderError("CSV has no grid rows to derive band boundaries from")
    by_band: dict[int, list[float]] = {}
    for row in grid:
        by_band.setdefault(row.m, []).append(row.r)
    bands = sorted(by_band)
    if bands != list(range(bands[0], bands[0] + len(bands))):
        raise RenderError(f"band indices are not contiguous: {bands}")
    edges = [min(by_band[m]) for m in bands]
    edges.append(max(by_band[bands[-1]]))
    return BandAxis(tuple(edges))


def _plot_value(row: FigureRowData) -> float:
    # below double-precision range the ratio column is 0; the log column
    # remains valid, so reconstruct a clamped positive value from it
    if row.ratio > 0.0:
        return row.ratio
    return math.exp(max(row.log_ratio, -700.0))


def render(spec: FigureSpec) -> list[Path]:
    """Render the CSV to <out_base>.<fmt>; returns the written paths."""
    rows = read_rows(Path(spec.csv_path))
    axis = band_axis(rows)
    grid = [row for row in rows if not row.is_marker]
    markers = [row for row in rows if row.is_marker]

    top = len(axis.edges) - 1
    for row in markers:
        x = axis.position(row.r)
        if x > top + 1.0:
            raise RenderError(
                f"marker m={row.m} at r={row.r} lies beyond the sampled bands")

    xs = np.asarray([axis.position(row.r) for row in grid])
    ys = np.asarray([_plot_value(row) for row in grid])
    order = np.argsort(xs)

    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    try:
        ax.plot(xs[order], ys[order], lw=1.2, color="#1f77b4",
                label="j(r) / j(r/2)")
        if markers:
            mx = [axis.position(row.r) for row in markers]
            my = [_plot_value(row) for row in markers]
            ax.scatter(mx, my, s=spec.marker_size, color=spec.marker_color,
                       zorder=5, gid=MARKER_GROUP_ID, label="critical radii")
        ax.set_yscale("log")
        ax.set_xticks(range(len(axis.edges)))
        ax.set_xticklabels([_edge_label(e) for e in axis.edges], fontsize=8)
        ax.set_xlabel("r (equal width per scale band)")
        ax.set_ylabel("kernel ratio")
        if spec.title:
            ax.set_title(spec.title)
        ax.legend(loc="lower left", fontsize=8)
        ax.margins(x=0.02)
        fig.tight_layout()

        out_paths = []
        for fmt in spec.formats:
            out = Path(str(spec.out_base) + "." + fmt)
            out.parent.mkdir(parents=True, exist_ok=True)
            if fmt == "svg":
                fig.savefig(out, format="svg", metadata={"Date": None})
            else:
                fig.savefig(out, format=fmt, dpi=spec.dpi)
            out_paths.append(out)
        return out_paths
    finally:
        plt.close(fig)


def _edge_label(edge: float) -> str:
    exp = math.log2(edge)
    if abs(exp - round(exp)) < 1e-9:
        return f"$2^{{{int(round(exp))}}}$"
    if abs(2 * exp - round(2 * exp)) < 1e-9:
        return f"$2^{{{int(round(2 * exp))}/2}}$"
    return f"{edge:.3g}"


def count_svg_markers(svg_path: Path) -> int:
    """Number of marker points in a rendered SVG (the dedicated group)."""
    import xml.etree.ElementTree as ET

    ns = {"svg": "http://www.w3.org/2000/svg"}
    tree = ET.parse(svg_path)
    for g in tree.getroot().iter("{http://www.w3.org/2000/svg}g"):
        if g.attrib.get("id") == MARKER_GROUP_ID:
            return len(g.findall(".//svg:use", ns))
    return 0
