"""Turn experiment metric CSVs into multi-series line charts.

Input files are never modified; rendering the same CSV twice produces the
same image bytes. Rows whose y cell is empty (failed trials upstream) are
skipped for that series rather than plotted as zeros.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


class SchemaMismatch(Exception):
    """A referenced column is missing from the CSV header."""

    def __init__(self, column: str, path):
        super().__init__(f"column {column!r} not found in {path}")
        self.column = column


class EmptyData(Exception):
    """The CSV has a header but no usable data rows."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: which CSV, which axes, which column names the series."""

    input_csv: str | Path
    x_axis: str
    y_axis: str | tuple[str, ...]
    output: str | Path
    series_key: str | None = "mechanism"
    log_y: bool = False
    title: str | None = None
    y_label: str | None = None

    @property
    def y_columns(self) -> tuple[str, ...]:
        return (self.y_axis,) if isinstance(self.y_axis, str) else tuple(self.y_axis)


class Series(NamedTuple):
    label: str
    xs: list[float]
    ys: list[float]


#: Legend suffixes when one figure plots several metric columns.
_METRIC_SUFFIX = {"ae_m": "m", "var_m": "m", "ae_mr": "mr", "var_mr": "mr"}


def read_rows(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def build_series(rows: list[dict], spec: FigureSpec) -> list[Series]:
    """Group rows into plottable (label, xs, ys) series.

    With several y columns, labels are "<series>-<suffix>" so one figure
    can carry e.g. both the mean and missing-rate error curves.
    """
    if not rows:
        raise EmptyData(f"{spec.input_csv} has no data rows")
    header = rows[0].keys()
    for column in (spec.x_axis, *spec.y_columns):
        if column not in header:
            raise SchemaMismatch(column, spec.input_csv)
    if spec.series_key is not None and spec.series_key not in header:
        raise SchemaMismatch(spec.series_key, spec.input_csv)

    keys: list[str] = []
    if spec.series_key is None:
        keys = [""]
    else:
        for row in rows:
            if row[spec.series_key] not in keys:
                keys.append(row[spec.series_key])

    multi = len(spec.y_columns) > 1
    series: list[Series] = []
    for key in keys:
        group = rows if spec.series_key is None else [r for r in rows if r[spec.series_key] == key]
        for y_col in spec.y_columns:
            points = sorted(
                (float(r[spec.x_axis]), float(r[y_col]))
                for r in group
                if (r[y_col] or "").strip() != ""
            )
            if not points:
                continue
            label = key or y_col
            if multi:
                label = f"{key}-{_METRIC_SUFFIX.get(y_col, y_col)}" if key else y_col
            series.append(Series(label, [p[0] for p in points], [p[1] for p in points]))
    if not series:
        raise EmptyData(f"{spec.input_csv} has no plottable points")
    return series


_MARKERS = "osD^vP*Xd"


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the written image path."""
    series = build_series(read_rows(spec.input_csv), spec)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    try:
        for i, s in enumerate(series):
            ax.plot(s.xs, s.ys, marker=_MARKERS[i % len(_MARKERS)], markersize=4, label=s.label)
        ax.set_xlabel(spec.x_axis)
        ax.set_ylabel(spec.y_label or " / ".join(spec.y_columns))
        if spec.log_y:
            ax.set_yscale("log")
        if spec.title:
            ax.set_title(spec.title)
        ax.grid(True, alpha=0.3)
        ax.legend()
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out


FIGURE_SETS = ("truth-rate", "behavior", "missing-rate", "data-size")


def figure_set(name: str, csv_dir, out_dir) -> list[Path]:
    """Render one named set of figures from a directory of sweep CSVs.

    The set names mirror the harness's built-in sweeps: the truth-rate
    curve, the behavior comparison per dataset, the missing-rate sweeps,
    and the data-size sweeps.
    """
    csv_dir, out_dir = Path(csv_dir), Path(out_dir)
    written: list[Path] = []

    def _one(spec: FigureSpec) -> None:
        written.append(render(spec))

    if name == "truth-rate":
        _one(FigureSpec(
            input_csv=csv_dir / "truth_rate.csv",
            x_axis="epsilon",
            y_axis="truth_rate",
            series_key=None,
            y_label="rate of true answers",
            title="Truthful participation vs offered budget",
            output=out_dir / "truth_rate.png",
        ))
    elif name == "behavior":
        for path in sorted(csv_dir.glob("behavior_*.csv")):
            dataset = path.stem.removeprefix("behavior_")
            _one(FigureSpec(
                input_csv=path,
                x_axis="epsilon",
                y_axis="ae_m",
                log_y=True,
                y_label="AE of mean estimate",
                title=f"Mean estimation under fake answers ({dataset})",
                output=out_dir / f"behavior_{dataset}.png",
            ))
        if not written:
            raise EmptyData(f"no behavior_*.csv files in {csv_dir}")
    elif name == "missing-rate":
        for path in sorted(csv_dir.glob("missing_rate_*.csv")):
            _one(FigureSpec(
                input_csv=path,
                x_axis="sweep_key",
                y_axis=("ae_m", "ae_mr"),
                log_y=True,
                y_label="AE",
                title=f"Estimation error vs missing rate ({path.stem.removeprefix('missing_rate_')})",
                output=out_dir / f"{path.stem}.png",
            ))
        if not written:
            raise EmptyData(f"no missing_rate_*.csv files in {csv_dir}")
    elif name == "data-size":
        _one(FigureSpec(
            input_csv=csv_dir / "data_size.csv",
            x_axis="sweep_key",
            y_axis="ae_m",
            log_y=True,
            y_label="AE of mean estimate",
            title="Mean estimation vs data size",
            output=out_dir / "data_size_mean.png",
        ))
        _one(FigureSpec(
            input_csv=csv_dir / "data_size.csv",
            x_axis="sweep_key",
            y_axis="ae_mr",
            log_y=True,
            y_label="AE of missing-rate estimate",
            title="Missing-rate estimation vs data size",
            output=out_dir / "data_size_missing_rate.png",
        ))
    elif name == "all":
        for sub in FIGURE_SETS:
            written.extend(figure_set(sub, csv_dir, out_dir))
    else:
        raise ValueError(f"unknown figure set {name!r}; expected one of {FIGURE_SETS + ('all',)}")
    return written
