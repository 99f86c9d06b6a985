"""Figure rendering for the ddfem benchmark CSVs."""

from .render import PlotSpec, SchemaError, build_figure, render, whisker_bounds

__all__ = ["PlotSpec", "SchemaError", "build_figure", "render", "whisker_bounds"]
