"""Univariate base forecasts and in-sample one-step residuals.

Each series is forecast on its own. Three forecasters are built in:

* ``naive``: ``y[T+h] = y[T]``
* ``rw_drift``: ``y[T+h] = y[T] + h * (y[T] - y[1]) / (T - 1)``
* ``ar``: AR(p) with intercept by conditional least squares, iterated
  forward for multi-step forecasts; ``p`` fixed or chosen by AICc.

Externally produced forecasts (e.g. from automatic ARIMA selection) can be
ingested from CSV with :func:`ingest_external`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .panel import TimeSeriesPanel, format_period, parse_period

METHODS = ("naive", "rw_drift", "ar")


@dataclass(frozen=True)
class ForecasterConfig:
    method: str = "naive"
    ar_max_order: int = 1
    selection: str = "fixed"  # or "aicc"

    def __post_init__(self):
        method = self.method.replace("-", "_")
        if method not in METHODS:
            raise ValueError(f"unknown forecaster {self.method!r}; choose from {METHODS}")
        object.__setattr__(self, "method", method)
        if self.ar_max_order < 1:
            raise ValueError("ar_max_order must be >= 1")
        if self.selection not in ("fixed", "aicc"):
            raise ValueError("selection must be 'fixed' or 'aicc'")


@dataclass(frozen=True, eq=False)
class BaseForecastSet:
    series_names: tuple[str, ...]
    horizons: tuple[int, ...]
    forecasts: np.ndarray  # H x n
    residuals: np.ndarray  # T_r x n
    residual_periods: tuple[str, ...]
    origin: str

    def __post_init__(self):
        f = np.array(self.forecasts, dtype=float)
        r = np.array(self.residuals, dtype=float)
        n = len(self.series_names)
        if f.shape != (len(self.horizons), n):
            raise ValueError(f"forecasts shape {f.shape} != ({len(self.horizons)}, {n})")
        if r.ndim != 2 or r.shape[1] != n or r.shape[0] != len(self.residual_periods):
            raise ValueError(f"residuals shape {r.shape} inconsistent with {n} series")
        if r.shape[0] < 2:
            raise ValueError("at least 2 residual rows are required")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(r))):
            raise ValueError("base forecasts and residuals must be finite")
        f.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "forecasts", f)
        object.__setattr__(self, "residuals", r)
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        object.__setattr__(self, "series_names", tuple(self.series_names))
        object.__setattr__(self, "residual_periods", tuple(self.residual_periods))

    @property
    def n(self) -> int:
        return len(self.series_names)

    def columns(self, idx) -> BaseForecastSet:
        """Subset of series by column index."""
        idx = np.asarray(idx)
        return BaseForecastSet(
            tuple(self.series_names[i] for i in idx),
            self.horizons,
            self.forecasts[:, idx],
            self.residuals[:, idx],
            self.residual_periods,
            self.origin,
        )


class SeriesTooShort(ValueError):
    pass


def _lag_matrix(y, p, start):
    """Regressors ``[1, y[t-1], ..., y[t-p]]`` for targets ``y[start:]``."""
    T = len(y)
    X = np.ones((T - start, p + 1))
    for i in range(1, p + 1):
        X[:, i] = y[start - i : T - i]
    return X


def fit_ar(y, p: int, start: int | None = None) -> np.ndarray:
    """Conditional least-squares AR(p) coefficients ``[c, phi_1..phi_p]``."""
    start = p if start is None else start
    X = _lag_matrix(y, p, start)
    coef, *_ = np.linalg.lstsq(X, y[start:], rcond=None)
    return coef


def ar_one_step(y, coef) -> np.ndarray:
    """In-sample one-step predictions for ``y[p:]`` given fixed coefficients."""
    p = len(coef) - 1
    return _lag_matrix(np.asarray(y, dtype=float), p, p) @ coef


def _aicc(rss, n_obs, p):
    k = p + 2  # intercept, p lags, innovation variance
    with np.errstate(divide="ignore"):
        ll_term = n_obs * np.log(rss / n_obs)
    return ll_term + 2 * k + 2 * k * (k + 1) / (n_obs - k - 1)


def select_ar_order(y, max_order: int) -> int:
    """AICc choice over ``1..max_order`` on a common effective sample; ties go to the smaller order."""
    best_p, best = 1, np.inf
    for p in range(1, max_order + 1):
        coef = fit_ar(y, p, start=max_order)
        resid = y[max_order:] - _lag_matrix(y, p, max_order) @ coef
        n_obs = len(resid)
        if n_obs - p - 3 <= 0:
            break
        rss = float(resid @ resid)
        if rss <= (1e-12 * np.abs(y).max()) ** 2 * n_obs:
            rss = 0.0  # perfect fit; every such order ties at -inf
        score = _aicc(rss, n_obs, p)
        if p == 1 or score < best:
            best_p, best = p, score
    return best_p


def forecast_univariate(series, h_max: int, config: ForecasterConfig) -> tuple[np.ndarray, np.ndarray]:
    """Point forecasts for ``h = 1..h_max`` and in-sample one-step residuals.

    Residuals are ``y[t] - yhat[t|t-1]`` over the fit sample: ``T - 1``
    values for ``naive``/``rw_drift`` and ``T - p`` for ``ar``.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    T = len(y)
    steps = np.arange(1, h_max + 1)

    if config.method in ("naive", "rw_drift"):
        if T < 3:
            raise SeriesTooShort(f"{config.method} needs at least 3 observations, got {T}")
        if config.method == "naive":
            return np.full(h_max, y[-1]), np.diff(y)
        drift = (y[-1] - y[0]) / (T - 1)
        return y[-1] + steps * drift, np.diff(y) - drift

    if config.selection == "aicc":
        if T < 2 * config.ar_max_order + 2:
            raise SeriesTooShort(
                f"AR order search up to {config.ar_max_order} needs {2 * config.ar_max_order + 2} "
                f"observations, got {T}"
            )
        p = select_ar_order(y, config.ar_max_order)
    else:
        p = config.ar_max_order
    if T < 2 * p + 2:
        raise SeriesTooShort(f"AR({p}) needs at least {2 * p + 2} observations, got {T}")
    coef = fit_ar(y, p)
    resid = y[p:] - ar_one_step(y, coef)
    hist = list(y[-p:])
    out = np.empty(h_max)
    for i in range(h_max):
        nxt = coef[0] + sum(coef[j] * hist[-j] for j in range(1, p + 1))
        out[i] = nxt
        hist.append(nxt)
    return out, resid


def build_base_set(panel: TimeSeriesPanel, h_max: int, config: ForecasterConfig) -> BaseForecastSet:
    """Forecast every series independently; residuals aligned on the common trailing sample."""
    fcs, res = [], []
    for j, name in enumerate(panel.series_names):
        try:
            f, r = forecast_univariate(panel.values[:, j], h_max, config)
        except ValueError as exc:
            raise type(exc)(f"series {name!r}: {exc}") from None
        fcs.append(f)
        res.append(r)
    T_r = min(len(r) for r in res)
    residuals = np.column_stack([r[len(r) - T_r :] for r in res])
    return BaseForecastSet(
        series_names=panel.series_names,
        horizons=tuple(range(1, h_max + 1)),
        forecasts=np.column_stack(fcs),
        residuals=residuals,
        residual_periods=panel.times[panel.T - T_r :],
        origin=panel.times[-1],
    )


def _permutation(names, ordering, what):
    have = list(names)
    missing = [s for s in ordering if s not in have]
    extra = [s for s in have if s not in ordering]
    if missing:
        raise io.SchemaError(f"{what} is missing series: {', '.join(missing)}")
    if extra:
        raise io.SchemaError(f"{what} has unknown series: {', '.join(extra)}")
    return [have.index(s) for s in ordering]


def ingest_external(forecast_file, residual_file, system) -> BaseForecastSet:
    """Load base forecasts (``series,horizon,value``) and residuals (``series,period,value``).

    Columns are reordered to ``system.ordering``; the origin is taken as the
    last residual period.
    """
    series, horizons, fc = io.read_horizon_table(forecast_file)
    idx = _permutation(series, system.ordering, f"forecast file {Path(forecast_file).name}")
    resid_panel = io.read_long_panel(residual_file)
    ridx = _permutation(
        resid_panel.series_names, system.ordering, f"residual file {Path(residual_file).name}"
    )
    return BaseForecastSet(
        series_names=system.ordering,
        horizons=tuple(horizons),
        forecasts=fc[:, idx],
        residuals=resid_panel.values[:, ridx],
        residual_periods=resid_panel.times,
        origin=resid_panel.times[-1],
    )


def export_base_set(base: BaseForecastSet, forecast_file, residual_file) -> None:
    io.write_horizon_table(forecast_file, base.series_names, base.horizons, base.forecasts)
    io.write_long_panel(
        residual_file, TimeSeriesPanel(base.series_names, base.residual_periods, base.residuals)
    )


def target_periods(base: BaseForecastSet) -> list[str]:
    """Period labels of the forecast targets ``origin + h``."""
    o = parse_period(base.origin)
    return [format_period(o + h) for h in base.horizons]
