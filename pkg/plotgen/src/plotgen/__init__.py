"""Band-distorted figure rendering for kernel-ratio CSV tables."""

__version__ = "0.1.0"

from .render import (
    BandAxis,
    FigureSpec,
    RenderError,
    count_svg_markers,
    read_rows,
    render,
)
