"""Publication-style figures from bisample experiment CSVs."""

from .render import (
    FIGURE_SETS,
    EmptyData,
    FigureSpec,
    SchemaMismatch,
    Series,
    build_series,
    figure_set,
    read_rows,
    render,
)

__version__ = "0.1.0"
