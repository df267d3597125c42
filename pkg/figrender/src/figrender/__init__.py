"""figrender: deterministic figures from sandlab CSV exports."""

from .render import RenderResult, render, render_curves, render_heatmap
from .specs import PlotSpec, PlotSpecError

__version__ = "0.1.0"
