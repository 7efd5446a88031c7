"""Command-line interface: ``linkrecon validate|reconcile|evaluate``.

Exit codes: 0 success, 1 validation or constraint failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, io
from .base_forecast import ForecasterConfig, build_base_set, ingest_external
from .covariance import CovarianceSpec, NotPositiveDefinite, make_weight_matrix
from .evaluation import ExperimentConfig, group_series, run_experiment, write_report
from .hierarchy import HierarchyError, check_coherence, link_hierarchies, load_hierarchy_spec
from .reconcile import ReconciliationError, reconcile_batch

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "hierarchy": [],
    "top": None,
    "data": None,
    "out": ".",
    "tol": 1e-6,
    "seed": 0,
    "method": "mint-shr",
    "base": None,
    "residuals": None,
    "lambda": None,
    "dump_w": False,
    "first_train_start": "1984Q4",
    "first_train_end": "1994Q3",
    "horizons": 4,
    "methods": "base,ols,wls,mint-shr",
    "forecaster": "naive",
    "ar_max_order": 1,
    "ar_selection": "fixed",
    "external_base_dir": None,
    "variance_floor": 1e-10,
    "uncentered": False,
}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    # argparse.SUPPRESS keeps unset flags out of the namespace so config files can fill them
    shared = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    shared.add_argument("--config", help="YAML/JSON file with default values for any flag")
    shared.add_argument("--hierarchy", action="append", help="hierarchy spec (repeat per side)")
    shared.add_argument("--top", help="name of the shared top series")
    shared.add_argument("--data", help="long-format panel CSV: series,period,value")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--tol", type=float, help="relative coherence tolerance")
    shared.add_argument("--seed", type=int)
    shared.add_argument("-v", "--verbose", action="store_true")

    def add(name, help):
        return sub.add_parser(name, parents=[shared], argument_default=argparse.SUPPRESS, help=help)

    add("validate", "check structure and panel coherence")

    rec = add("reconcile", "reconcile one set of base forecasts")
    rec.add_argument("--method", choices=["ols", "wls", "mint-shr"])
    rec.add_argument("--base", help="base forecast CSV: series,horizon,value")
    rec.add_argument("--residuals", help="residual CSV: series,period,value")
    rec.add_argument("--lambda", type=float, help="fixed shrinkage intensity in [0, 1]")
    rec.add_argument("--dump-w", action="store_true", help="also write W.csv")
    rec.add_argument("--horizons", type=int, help="forecast horizons when forecasting from --data")
    _forecaster_flags(rec)

    ev = add("evaluate", "expanding-window experiment")
    ev.add_argument("--first-train-start")
    ev.add_argument("--first-train-end")
    ev.add_argument("--horizons", type=int)
    ev.add_argument("--methods", help="comma-separated subset of base,ols,wls,mint-shr")
    ev.add_argument("--external-base-dir", help="directory of <origin>/base.csv and residuals.csv")
    _forecaster_flags(ev)
    return parser


def _forecaster_flags(p):
    p.add_argument("--forecaster", choices=["naive", "rw-drift", "ar"])
    p.add_argument("--ar-max-order", type=int)
    p.add_argument("--ar-selection", choices=["fixed", "aicc"])
    p.add_argument("--variance-floor", type=float)
    p.add_argument("--uncentered", action="store_true", help="do not centre residuals")


def resolve(args: argparse.Namespace) -> dict:
    """Defaults < config file < command-line flags."""
    cfg = dict(DEFAULTS)
    given = vars(args)
    if given.get("config"):
        path = Path(given["config"])
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: config must be a mapping")
        for k, v in doc.items():
            key = k.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}: unknown config key {k!r}")
            cfg[key] = v
    for k, v in given.items():
        if k in DEFAULTS:
            cfg[k] = v
    if isinstance(cfg["hierarchy"], str):
        cfg["hierarchy"] = [cfg["hierarchy"]]
    if isinstance(cfg["methods"], (list, tuple)):
        cfg["methods"] = ",".join(cfg["methods"])
    cfg["command"] = args.command
    return cfg


def _existing(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _system(cfg):
    if not cfg["hierarchy"]:
        raise UsageError("at least one --hierarchy is required")
    specs = [load_hierarchy_spec(_existing(h, "hierarchy")) for h in cfg["hierarchy"]]
    return link_hierarchies(specs, cfg["top"])


def _panel(cfg, system):
    path = _existing(cfg["data"], "data")
    panel = io.read_long_panel(path)
    try:
        return panel.reorder(system.ordering)
    except ValueError as exc:
        raise io.SchemaError(f"{path}: {exc}") from None


def _forecaster(cfg):
    return ForecasterConfig(cfg["forecaster"], int(cfg["ar_max_order"]), cfg["ar_selection"])


def _group_sizes(system):
    sizes: dict[str, int] = {}
    for g in group_series(system).values():
        sizes[g] = sizes.get(g, 0) + 1
    return sizes


def cmd_validate(cfg) -> int:
    system = _system(cfg)
    print(f"n={system.n} K={system.K}")
    print("groups: " + " ".join(f"{g}={k}" for g, k in _group_sizes(system).items()))
    if cfg["data"] is None:
        return EXIT_OK
    panel = _panel(cfg, system)
    viol = check_coherence(panel, system)
    print("period,max_violation")
    for t, v in zip(panel.times, viol):
        print(f"{t},{io.fmt(v)}")
    bad = np.flatnonzero(viol > cfg["tol"])
    if bad.size:
        t = bad[0]
        print(
            f"FAIL: {bad.size} period(s) exceed tol {cfg['tol']:g}; first is {panel.times[t]} "
            f"(violation {viol[t]:.6g})",
            file=sys.stderr,
        )
        return EXIT_FAIL
    print(f"OK: all {panel.T} periods coherent within tol {cfg['tol']:g}")
    return EXIT_OK


def cmd_reconcile(cfg) -> int:
    system = _system(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if cfg["base"] is not None:
        base = ingest_external(
            _existing(cfg["base"], "base"), _existing(cfg["residuals"], "residuals"), system
        )
    else:
        panel = _panel(cfg, system)
        base = build_base_set(panel, int(cfg["horizons"]), _forecaster(cfg))
    spec = CovarianceSpec(
        cfg["method"],
        variance_floor=float(cfg["variance_floor"]),
        lambda_override=cfg["lambda"],
        center=not cfg["uncentered"],
    )
    W = make_weight_matrix(base.residuals, spec, n=system.n)
    result = reconcile_batch(base, system, W)
    io.write_horizon_table(out / "reconciled.csv", system.ordering, result.horizons, result.y_tilde)
    io.write_table(
        out / "violations.csv",
        ("horizon", "max_violation"),
        zip(result.horizons, (float(v) for v in result.max_constraint_violation)),
    )
    if cfg["dump_w"]:
        io.write_matrix(out / "W.csv", system.ordering, W.W)
    lam = "" if W.lam is None else f" lambda={W.lam:.6g}"
    print(f"reconciled {len(result.horizons)} horizon(s) x {system.n} series with {W.method}{lam}")
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    system = _system(cfg)
    panel = _panel(cfg, system)
    methods = tuple(m.strip() for m in str(cfg["methods"]).split(",") if m.strip())
    ext = cfg["external_base_dir"]
    if ext is not None and not Path(ext).is_dir():
        raise UsageError(f"external base directory not found: {ext}")
    exp = ExperimentConfig(
        first_train_start=str(cfg["first_train_start"]),
        first_train_end=str(cfg["first_train_end"]),
        h_max=int(cfg["horizons"]),
        methods=methods,
        forecaster=_forecaster(cfg),
        external_base_dir=ext,
        variance_floor=float(cfg["variance_floor"]),
        center_residuals=not cfg["uncentered"],
        coherence_tol=float(cfg["tol"]),
    )
    report = run_experiment(panel, system, exp)
    out = Path(cfg["out"])
    write_report(report, out)
    meta = {
        "version": __version__,
        "seed": int(cfg["seed"]),
        "n": system.n,
        "K": system.K,
        "windows": len(report.windows),
        "first_origin": report.windows[0].origin,
        "last_origin": report.windows[-1].origin,
        "flagged": [list(k) for k in report.flagged],
        "config": {k: v for k, v in sorted(cfg.items()) if k not in ("command", "out")},
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, default=str) + "\n", encoding="utf-8")
    print(f"evaluated {len(report.windows)} window(s); reports written to {out}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "reconcile": cmd_reconcile, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, HierarchyError, io.SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ReconciliationError, NotPositiveDefinite, ValueError, RuntimeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
