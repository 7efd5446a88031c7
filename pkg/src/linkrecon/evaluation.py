"""Expanding-window forecast evaluation with MSE skill scores.

Window ``k`` trains on ``[first_train_start, first_train_end + k]`` and is
scored on the next ``h_max`` periods. Base forecasts are reconciled on the
full linked system and, for comparison, on each hierarchy by itself
(method labels such as ``mint_shr:income``).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .base_forecast import ForecasterConfig, build_base_set, ingest_external
from .covariance import CovarianceSpec, make_weight_matrix
from .hierarchy import LinkedSystem, check_coherence
from .panel import TimeSeriesPanel, parse_period
from .reconcile import reconcile_batch

log = logging.getLogger(__name__)

METHODS = ("base", "ols", "wls", "mint_shr")
MIN_FIT_LENGTH = 3


@dataclass(frozen=True)
class ExperimentConfig:
    first_train_start: str
    first_train_end: str
    h_max: int = 4
    methods: tuple[str, ...] = METHODS
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    external_base_dir: str | None = None
    variance_floor: float = 1e-10
    center_residuals: bool = True
    side_only: bool = True
    coherence_tol: float = 1e-6

    def __post_init__(self):
        methods = tuple(m.replace("-", "_") for m in self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        if "base" not in methods:
            methods = ("base", *methods)
        object.__setattr__(self, "methods", methods)
        if self.h_max < 1:
            raise ValueError("h_max must be >= 1")
        length = (parse_period(self.first_train_end) - parse_period(self.first_train_start)).n + 1
        if length < MIN_FIT_LENGTH:
            raise ValueError(
                f"first training window {self.first_train_start}..{self.first_train_end} "
                f"has {length} periods, need at least {MIN_FIT_LENGTH}"
            )


@dataclass(frozen=True)
class Window:
    index: int
    train_start: int  # row index, inclusive
    train_stop: int  # exclusive; also the first test row
    test_stop: int  # exclusive
    origin: str  # last training period


def expanding_windows(panel: TimeSeriesPanel, cfg: ExperimentConfig) -> list[Window]:
    start = panel.position(cfg.first_train_start)
    stop = panel.position(cfg.first_train_end) + 1
    if stop + cfg.h_max > panel.T:
        raise ValueError(
            f"panel ends at {panel.times[-1]}: not enough data for one window of "
            f"{cfg.h_max} test periods after {cfg.first_train_end}"
        )
    out = []
    for k, e in enumerate(range(stop, panel.T - cfg.h_max + 1)):
        out.append(Window(k, start, e, e + cfg.h_max, panel.times[e - 1]))
    return out


def skill_score(mse_base: float, mse_method: float) -> float:
    """Percentage MSE reduction relative to base; positive means better than base."""
    if not mse_base > 0:
        raise ZeroDivisionError("skill score undefined: base MSE is zero")
    return 100.0 * (mse_base - mse_method) / mse_base


def group_series(system: LinkedSystem) -> dict[str, str]:
    """Map each series to its group: the top, then ``<side>-aggregates`` / ``<side>-bottom``."""
    groups = {system.top_name: system.top_name}
    for h in system.hierarchies:
        for s in h.aggregate_names:
            groups[s] = f"{h.name}-aggregates"
        for s in h.bottom_names:
            groups[s] = f"{h.name}-bottom"
    return groups


def _group_columns(system: LinkedSystem) -> dict[str, np.ndarray]:
    mapping = group_series(system)
    out: dict[str, list[int]] = {}
    for i, name in enumerate(system.ordering):
        out.setdefault(mapping[name], []).append(i)
    cols = {g: np.array(ix) for g, ix in out.items()}
    cols["all"] = np.arange(system.n)
    return cols


@dataclass(eq=False)
class EvaluationReport:
    series_names: tuple[str, ...]
    windows: list[Window]
    horizons: tuple[int, ...]
    labels: list[str]
    errors: dict[str, np.ndarray]  # label -> (windows, H, n), NaN where not produced
    label_groups: dict[str, list[str]]
    mse: dict[tuple[str, int, str], float] = field(default_factory=dict)
    skill: dict[tuple[str, int, str], float] = field(default_factory=dict)
    series_mse: dict[tuple[str, int, str], float] = field(default_factory=dict)
    flagged: list[tuple[str, int, str]] = field(default_factory=list)


def _side_label(method, side):
    return f"{method}:{side}"


def _base_for_window(panel, system, window, cfg):
    if cfg.external_base_dir is None:
        train = panel.slice(window.train_start, window.train_stop)
        return build_base_set(train, cfg.h_max, cfg.forecaster)
    d = Path(cfg.external_base_dir) / window.origin
    base = ingest_external(d / "base.csv", d / "residuals.csv", system)
    if len(base.horizons) < cfg.h_max:
        raise ValueError(f"{d}: base forecasts cover {len(base.horizons)} horizons < {cfg.h_max}")
    if len(base.horizons) > cfg.h_max:
        base = type(base)(
            base.series_names,
            base.horizons[: cfg.h_max],
            base.forecasts[: cfg.h_max],
            base.residuals,
            base.residual_periods,
            base.origin,
        )
    return base


def _reconciled(base, system, method, cfg):
    if method == "base":
        return base.forecasts
    spec = CovarianceSpec(method, variance_floor=cfg.variance_floor, center=cfg.center_residuals)
    W = make_weight_matrix(base.residuals, spec, n=system.n)
    return reconcile_batch(base, system, W).y_tilde


def _run_windows(panel, system, cfg, windows, side_cols, errors):
    for w in windows:
        try:
            base = _base_for_window(panel, system, w, cfg)
            actual = panel.values[w.train_stop : w.test_stop]
            for m in cfg.methods:
                errors[m][w.index] = actual - _reconciled(base, system, m, cfg)
            for side, cols, sub in side_cols:
                sub_base = base.columns(cols)
                for m in cfg.methods:
                    if m == "base":
                        continue
                    errors[_side_label(m, side)][w.index][:, cols] = actual[:, cols] - _reconciled(
                        sub_base, sub, m, cfg
                    )
        except Exception as exc:
            raise RuntimeError(f"window {w.index} (origin {w.origin}) failed: {exc}") from exc


def _summarise_warnings(caught):
    counts: dict[str, int] = {}
    for item in caught:
        key = str(item.message)
        if "residual rows" in key:
            key = "fewer residual rows than half the series count; shrinkage estimate may be unstable"
        counts[key] = counts.get(key, 0) + 1
    for msg, k in counts.items():
        warnings.warn(f"{msg} ({k} occurrence{'s' if k > 1 else ''})", stacklevel=3)


def run_experiment(panel: TimeSeriesPanel, system: LinkedSystem, cfg: ExperimentConfig) -> EvaluationReport:
    """Run every window, then pool squared errors into MSE and skill tables."""
    if tuple(panel.series_names) != system.ordering:
        panel = panel.reorder(system.ordering)
    viol = check_coherence(panel, system)
    if viol.max() > cfg.coherence_tol:
        t = int(np.argmax(viol))
        raise ValueError(f"panel is not coherent at {panel.times[t]} (violation {viol[t]:.3e})")

    windows = expanding_windows(panel, cfg)
    H, n = cfg.h_max, system.n
    do_sides = cfg.side_only and system.L > 1
    labels = list(cfg.methods)
    side_cols = []
    if do_sides:
        for l, h in enumerate(system.hierarchies):
            side_cols.append((h.name, system.side_columns(l), system.subsystem(l)))
            labels += [_side_label(m, h.name) for m in cfg.methods if m != "base"]
    errors = {lab: np.full((len(windows), H, n), np.nan) for lab in labels}

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        _run_windows(panel, system, cfg, windows, side_cols, errors)
    _summarise_warnings(caught)

    gcols = _group_columns(system)
    label_groups = {lab: list(gcols) for lab in cfg.methods}
    for side, _, sub in side_cols:
        names = [g for g in gcols if g in (system.top_name, f"{side}-aggregates", f"{side}-bottom")]
        for m in cfg.methods:
            if m != "base":
                label_groups[_side_label(m, side)] = names

    report = EvaluationReport(
        series_names=system.ordering,
        windows=windows,
        horizons=tuple(range(1, H + 1)),
        labels=labels,
        errors=errors,
        label_groups=label_groups,
    )
    _summarise(report, gcols)
    return report


def _summarise(report: EvaluationReport, gcols) -> None:
    for lab in report.labels:
        err = report.errors[lab]
        for hi, h in enumerate(report.horizons):
            sq = err[:, hi, :] ** 2
            for g in report.label_groups[lab]:
                report.mse[(lab, h, g)] = float(np.mean(sq[:, gcols[g]]))
            for j, s in enumerate(report.series_names):
                if not np.isnan(sq[0, j]):
                    report.series_mse[(lab, h, s)] = float(np.mean(sq[:, j]))
    for (lab, h, g), value in report.mse.items():
        base = report.mse[("base", h, g)]
        try:
            report.skill[(lab, h, g)] = skill_score(base, value)
        except ZeroDivisionError:
            report.skill[(lab, h, g)] = float("nan")
            report.flagged.append((lab, h, g))
    if report.flagged:
        log.warning("skill undefined (zero base MSE) for %d cells", len(report.flagged))


def write_report(report: EvaluationReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "mse.csv", out / "skill.csv", out / "mse_series.csv", out / "errors.csv"]
    io.write_table(paths[0], ("method", "horizon", "group", "mse"), ((*k, v) for k, v in report.mse.items()))
    io.write_table(
        paths[1],
        ("method", "horizon", "group", "skill_pct"),
        ((*k, v) for k, v in report.skill.items()),
    )
    io.write_table(
        paths[2],
        ("method", "horizon", "series", "mse"),
        ((*k, v) for k, v in report.series_mse.items()),
    )

    def error_rows():
        for w in report.windows:
            for hi, h in enumerate(report.horizons):
                for lab in report.labels:
                    row = report.errors[lab][w.index, hi]
                    for j, s in enumerate(report.series_names):
                        if not np.isnan(row[j]):
                            yield (w.index, w.origin, h, lab, s, row[j])

    io.write_table(paths[3], ("window", "origin", "horizon", "method", "series", "error"), error_rows())
    return paths


def qualitative_checks(
    report: EvaluationReport, system: LinkedSystem, side: str | None = None
) -> dict[str, bool]:
    """Orderings expected when replaying published ARIMA base forecasts.

    ``gdp_improves``: MinT-shr skill for the top series is positive at every
    horizon. ``negatives_only_ols_bottom``: negative skill appears only for
    OLS on bottom-level groups at h >= 2. ``full_beats_side``: the fully
    reconciled top-series skill is at least the side-only skill for ``side``
    (default: the last hierarchy).
    """
    top = system.top_name
    side = side or system.hierarchies[-1].name
    hs = report.horizons
    gdp_improves = all(report.skill[("mint_shr", h, top)] > 0 for h in hs)
    neg_ok = True
    for (lab, h, g), v in report.skill.items():
        if g == "all":
            continue
        if v < 0 and not (lab.split(":")[0] == "ols" and g.endswith("-bottom") and h >= 2):
            neg_ok = False
    full_beats = all(
        report.skill[("mint_shr", h, top)] >= report.skill[(_side_label("mint_shr", side), h, top)]
        for h in hs
    )
    return {
        "gdp_improves": gdp_improves,
        "negatives_only_ols_bottom": neg_ok,
        "full_beats_side": full_beats,
    }
