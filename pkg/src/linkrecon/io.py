"""CSV readers and writers for panels, forecasts and reports.

All files are UTF-8 with a header row. Values are written with 12
significant digits so that write -> read -> write is byte-stable.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .panel import TimeSeriesPanel, format_period, parse_period


class SchemaError(ValueError):
    """A CSV file does not match its expected schema."""


def fmt(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{float(value):.12g}"


def _rows(path, columns):
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected header {','.join(columns)}")
        header = [c.strip() for c in reader.fieldnames]
        if header != list(columns):
            raise SchemaError(f"{path}: header {header} != expected {list(columns)}")
        reader.fieldnames = header
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def _float(path, lineno, text):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise SchemaError(f"{path}:{lineno}: invalid value {text!r}") from None
    if not math.isfinite(v):
        raise SchemaError(f"{path}:{lineno}: non-finite value {text!r}")
    return v


def _write(path, header, rows) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_long_panel(path) -> TimeSeriesPanel:
    """Read ``series,period,value`` into a panel (series in first-encounter order)."""
    cells: dict[tuple[str, str], float] = {}
    series: dict[str, None] = {}
    periods = set()
    for lineno, row in _rows(path, ("series", "period", "value")):
        name = row["series"].strip()
        try:
            period = format_period(parse_period(row["period"]))
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from None
        key = (name, period)
        if key in cells:
            raise SchemaError(f"{path}:{lineno}: duplicate entry for {name} {period}")
        cells[key] = _float(path, lineno, row["value"])
        series.setdefault(name)
        periods.add(period)
    if not cells:
        raise SchemaError(f"{path}: no data rows")
    times = sorted(periods, key=parse_period)
    values = np.empty((len(times), len(series)))
    for j, s in enumerate(series):
        for i, t in enumerate(times):
            if (s, t) not in cells:
                raise SchemaError(f"{path}: missing value for series {s} at {t}")
            values[i, j] = cells[(s, t)]
    return TimeSeriesPanel(tuple(series), tuple(times), values)


def write_long_panel(path, panel: TimeSeriesPanel) -> None:
    rows = (
        (s, t, fmt(panel.values[i, j]))
        for j, s in enumerate(panel.series_names)
        for i, t in enumerate(panel.times)
    )
    _write(path, ("series", "period", "value"), rows)


def read_horizon_table(path) -> tuple[tuple[str, ...], list[int], np.ndarray]:
    """Read ``series,horizon,value`` into ``(series, horizons, H x n array)``.

    Every series must cover the same contiguous horizons ``1..H``.
    """
    cells: dict[tuple[str, int], float] = {}
    series: list[str] = []
    for lineno, row in _rows(path, ("series", "horizon", "value")):
        name = row["series"].strip()
        try:
            h = int(row["horizon"])
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: invalid horizon {row['horizon']!r}") from None
        if h < 1:
            raise SchemaError(f"{path}:{lineno}: horizon must be >= 1, got {h}")
        if (name, h) in cells:
            raise SchemaError(f"{path}:{lineno}: duplicate entry for {name} h={h}")
        cells[(name, h)] = _float(path, lineno, row["value"])
        if name not in series:
            series.append(name)
    if not cells:
        raise SchemaError(f"{path}: no data rows")
    H = max(h for _, h in cells)
    out = np.empty((H, len(series)))
    for j, s in enumerate(series):
        for h in range(1, H + 1):
            if (s, h) not in cells:
                raise SchemaError(f"{path}: horizon gap, series {s} has no value for h={h}")
            out[h - 1, j] = cells[(s, h)]
    return tuple(series), list(range(1, H + 1)), out


def write_horizon_table(path, series_names, horizons, values) -> None:
    values = np.asarray(values)
    rows = ((s, h, fmt(values[i, j])) for j, s in enumerate(series_names) for i, h in enumerate(horizons))
    _write(path, ("series", "horizon", "value"), rows)


def write_table(path, header, rows) -> None:
    """Write arbitrary rows; floats are formatted with :func:`fmt`."""
    _write(path, header, ([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r] for r in rows))


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_matrix(path, names, matrix) -> None:
    """Dense square matrix with a leading name column, for debugging dumps."""
    rows = ([name, *[fmt(v) for v in row]] for name, row in zip(names, np.asarray(matrix)))
    _write(path, ("series", *names), rows)
