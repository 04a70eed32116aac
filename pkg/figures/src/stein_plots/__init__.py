"""Figure rendering for stein-sense CSV output."""

from .render import FigureSpec, MissingColumn, make_spec, read_table, render

__all__ = [
    "FigureSpec",
    "MissingColumn",
    "make_spec",
    "read_table",
    "render",
]

__version__ = "0.1.0"
