"""Figure rendering for benchmark sweep CSVs."""

from .figures import FIGURE_KINDS, FigureSpec, MissingColumnsError, render

__all__ = ["FIGURE_KINDS", "FigureSpec", "MissingColumnsError", "render"]
