"""Quarterly time-series panels in a fixed series ordering."""

from __future__ import annotations

import re
from functools import lru_cache
from dataclasses import dataclass

import numpy as np
import pandas as pd

_PERIOD_RE = re.compile(r"^(\d{4})Q([1-4])$")


@lru_cache(maxsize=4096)
def parse_period(label: str) -> pd.Period:
    """Parse a ``YYYYQn`` label (``1984Q1``; ``1984:Q1`` is also accepted)."""
    m = _PERIOD_RE.match(str(label).strip().replace(":", ""))
    if m is None:
        raise ValueError(f"invalid period label {label!r}, expected YYYYQn")
    return pd.Period(year=int(m.group(1)), quarter=int(m.group(2)), freq="Q")


def format_period(p: pd.Period) -> str:
    return f"{p.year}Q{p.quarter}"


def shift_period(label: str, k: int) -> str:
    return format_period(parse_period(label) + k)


@dataclass(frozen=True, eq=False)
class TimeSeriesPanel:
    series_names: tuple[str, ...]
    times: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.times), len(self.series_names)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.times)} periods x {len(self.series_names)} series"
            )
        if not np.all(np.isfinite(values)):
            bad_t, bad_s = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(
                f"missing or non-finite value for {self.series_names[bad_s]!r} at {self.times[bad_t]}"
            )
        if len(set(self.series_names)) != len(self.series_names):
            raise ValueError("duplicate series names in panel")
        periods = [parse_period(t) for t in self.times]
        for a, b in zip(periods, periods[1:]):
            if b != a + 1:
                raise ValueError(f"time index is not consecutive: {format_period(a)} -> {format_period(b)}")
        values.setflags(write=False)
        object.__setattr__(self, "series_names", tuple(self.series_names))
        object.__setattr__(self, "times", tuple(format_period(p) for p in periods))
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return len(self.times)

    @property
    def n(self) -> int:
        return len(self.series_names)

    def position(self, period: str) -> int:
        """Row index of ``period``."""
        k = (parse_period(period) - parse_period(self.times[0])).n
        if not 0 <= k < self.T:
            raise ValueError(f"period {period} outside panel range {self.times[0]}..{self.times[-1]}")
        return k

    def reorder(self, ordering) -> TimeSeriesPanel:
        """Columns permuted to ``ordering``; every series must be present exactly once."""
        ordering = tuple(ordering)
        have = set(self.series_names)
        missing = [s for s in ordering if s not in have]
        extra = sorted(have - set(ordering))
        if missing:
            raise ValueError(f"panel is missing series: {missing}")
        if extra:
            raise ValueError(f"panel has series not in the system: {extra}")
        idx = [self.series_names.index(s) for s in ordering]
        return TimeSeriesPanel(ordering, self.times, self.values[:, idx])

    def slice(self, start: int, stop: int) -> TimeSeriesPanel:
        """Rows ``start`` (inclusive) to ``stop`` (exclusive)."""
        return TimeSeriesPanel(self.series_names, self.times[start:stop], self.values[start:stop])
