import json
from importlib import resources

import numpy as np
import pytest
import yaml

from linkrecon import TimeSeriesPanel, io, link_hierarchies, parse_hierarchy_spec
from linkrecon.cli import main
from linkrecon.panel import shift_period
from linkrecon.synthetic import coherent_panel, random_hierarchy_spec


@pytest.fixture
def gdp_files(tmp_path, expenditure_spec):
    inc = tmp_path / "income.yaml"
    inc.write_text(resources.files("linkrecon").joinpath("data/income.yaml").read_text(encoding="utf-8"))
    exp = tmp_path / "expenditure.yaml"
    exp.write_text(yaml.safe_dump(expenditure_spec.to_dict()))
    system = link_hierarchies([parse_hierarchy_spec(inc.read_text()), expenditure_spec], "GDP")
    panel = coherent_panel(system, 30, np.random.default_rng(0), level=1000.0)
    data = tmp_path / "panel.csv"
    io.write_long_panel(data, panel)
    return [str(inc), str(exp)], data, panel


def _hier_args(paths):
    return [a for p in paths for a in ("--hierarchy", p)]


@pytest.fixture
def toy_files(tmp_path):
    h = tmp_path / "toy.yaml"
    h.write_text("name: toy\ntop: T\nedges: [[T, A], [T, B]]\n")
    base = tmp_path / "base.csv"
    io.write_horizon_table(base, ("T", "A", "B"), (1,), [[4.0, 1.0, 2.0]])
    resid = tmp_path / "resid.csv"
    rng = np.random.default_rng(1)
    E = rng.normal(size=(12, 3)) * [3.0, 1.0, 2.0]
    times = tuple(shift_period("2010Q1", k) for k in range(12))
    io.write_long_panel(resid, TimeSeriesPanel(("T", "A", "B"), times, E))
    return h, base, resid


def test_validate_gdp_dimensions(gdp_files, capsys):
    hier, data, panel = gdp_files
    assert main(["validate", *_hier_args(hier), "--data", str(data)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "n=95 K=33"
    assert "GDP=1 income-aggregates=5 income-bottom=10" in out[1]
    assert out[2] == "period,max_violation"
    assert len(out) == 3 + panel.T + 1
    assert out[-1].startswith("OK")


def test_validate_reports_first_incoherent_period(gdp_files, tmp_path, capsys):
    hier, data, panel = gdp_files
    values = panel.values.copy()
    values[7, 3] += 5.0
    values[12, 3] += 5.0
    bad = tmp_path / "bad.csv"
    io.write_long_panel(bad, TimeSeriesPanel(panel.series_names, panel.times, values))
    assert main(["validate", *_hier_args(hier), "--data", str(bad)]) == 1
    err = capsys.readouterr().err
    assert f"first is {panel.times[7]}" in err
    assert "2 period(s)" in err


def test_validate_missing_hierarchy_file(tmp_path, capsys):
    assert main(["validate", "--hierarchy", str(tmp_path / "nope.yaml")]) == 2
    assert "not found" in capsys.readouterr().err


def test_validate_bad_hierarchy_is_usage_error(tmp_path, capsys):
    h = tmp_path / "cyc.yaml"
    h.write_text("name: c\ntop: T\nedges: [[T, A], [A, B], [B, A]]\n")
    assert main(["validate", "--hierarchy", str(h)]) == 2


def test_schema_error_names_line(gdp_files, tmp_path, capsys):
    hier, data, _ = gdp_files
    lines = data.read_text().splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0] + ",abc"
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["validate", *_hier_args(hier), "--data", str(bad)]) == 2
    assert f"{bad}:6" in capsys.readouterr().err


def test_reconcile_toy_ols(toy_files, tmp_path):
    h, base, resid = toy_files
    out = tmp_path / "out"
    argv = ["reconcile", "--hierarchy", str(h), "--base", str(base), "--residuals", str(resid)]
    assert main([*argv, "--method", "ols", "--out", str(out)]) == 0
    series, horizons, values = io.read_horizon_table(out / "reconciled.csv")
    assert series == ("T", "A", "B") and horizons == [1]
    np.testing.assert_allclose(values[0], [11 / 3, 4 / 3, 7 / 3], rtol=1e-11)
    header, rows = io.read_table(out / "violations.csv")
    assert header == ["horizon", "max_violation"] and float(rows[0][1]) <= 1e-8


def test_reconcile_lambda_one_matches_wls(toy_files, tmp_path):
    h, base, resid = toy_files
    argv = ["reconcile", "--hierarchy", str(h), "--base", str(base), "--residuals", str(resid)]
    assert main([*argv, "--method", "wls", "--out", str(tmp_path / "wls")]) == 0
    assert (
        main([*argv, "--method", "mint-shr", "--lambda", "1", "--dump-w", "--out", str(tmp_path / "shr")])
        == 0
    )
    assert (tmp_path / "wls" / "reconciled.csv").read_bytes() == (
        tmp_path / "shr" / "reconciled.csv"
    ).read_bytes()
    header, rows = io.read_table(tmp_path / "shr" / "W.csv")
    W = np.array([[float(v) for v in r[1:]] for r in rows])
    assert header == ["series", "T", "A", "B"]
    assert np.count_nonzero(W - np.diag(np.diag(W))) == 0


def test_reconcile_coherent_base_unchanged(toy_files, tmp_path):
    h, _, resid = toy_files
    base = tmp_path / "coherent.csv"
    io.write_horizon_table(base, ("A", "B", "T"), (1, 2), [[1.0, 2.0, 3.0], [0.5, 4.5, 5.0]])
    out = tmp_path / "out"
    argv = [
        "reconcile",
        "--hierarchy",
        str(h),
        "--base",
        str(base),
        "--residuals",
        str(resid),
        "--out",
        str(out),
    ]
    assert main(argv) == 0
    _, _, values = io.read_horizon_table(out / "reconciled.csv")
    np.testing.assert_array_equal(values, [[3.0, 1.0, 2.0], [5.0, 0.5, 4.5]])


def test_reconcile_unknown_series_in_base(toy_files, tmp_path, capsys):
    h, _, resid = toy_files
    base = tmp_path / "b.csv"
    io.write_horizon_table(base, ("T", "A", "B", "Z"), (1,), [[3.0, 1.0, 2.0, 9.0]])
    argv = [
        "reconcile",
        "--hierarchy",
        str(h),
        "--base",
        str(base),
        "--residuals",
        str(resid),
        "--out",
        str(tmp_path),
    ]
    assert main(argv) == 2
    assert "Z" in capsys.readouterr().err


def test_reconcile_from_panel(gdp_files, tmp_path):
    hier, data, _ = gdp_files
    out = tmp_path / "out"
    argv = ["reconcile", *_hier_args(hier), "--data", str(data), "--forecaster", "ar", "--horizons", "3"]
    with pytest.warns(UserWarning, match="residual rows"):
        assert main([*argv, "--out", str(out)]) == 0
    series, horizons, values = io.read_horizon_table(out / "reconciled.csv")
    assert len(series) == 95 and horizons == [1, 2, 3]


def _small_system_files(tmp_path, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    specs = [random_hierarchy_spec(2, 5, rng, name=s, top="GDP") for s in ("inc", "exp")]
    paths = []
    for s in specs:
        p = tmp_path / f"{s.name}.yaml"
        p.write_text(yaml.safe_dump(s.to_dict()))
        paths.append(str(p))
    system = link_hierarchies(specs, "GDP")
    panel = coherent_panel(system, 36, rng)
    data = tmp_path / "panel.csv"
    io.write_long_panel(data, panel)
    return paths, data


def test_evaluate_base_only_all_zero_skill(tmp_path):
    hier, data = _small_system_files(tmp_path)
    out = tmp_path / "ev"
    argv = [
        "evaluate",
        *_hier_args(hier),
        "--data",
        str(data),
        "--methods",
        "base",
        "--first-train-end",
        "1989Q3",
    ]
    assert main([*argv, "--out", str(out)]) == 0
    header, rows = io.read_table(out / "skill.csv")
    assert header == ["method", "horizon", "group", "skill_pct"]
    assert rows and all(float(r[3]) == 0 for r in rows)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["n"] == 15 and meta["K"] == 6
    assert meta["first_origin"] == "1989Q3"
    assert meta["windows"] == 36 - 20 - 4 + 1


def test_evaluate_reproducible(tmp_path):
    hier, data = _small_system_files(tmp_path)
    argv = ["evaluate", *_hier_args(hier), "--data", str(data), "--first-train-end", "1989Q3"]
    argv += ["--forecaster", "ar", "--ar-max-order", "2", "--ar-selection", "aicc", "--seed", "7"]
    for k in range(2):
        assert main([*argv, "--out", str(tmp_path / f"r{k}")]) == 0
    for name in ("mse.csv", "skill.csv", "mse_series.csv", "errors.csv", "metadata.json"):
        assert (tmp_path / "r0" / name).read_bytes() == (tmp_path / "r1" / name).read_bytes()
    assert json.loads((tmp_path / "r0" / "metadata.json").read_text())["seed"] == 7


def test_config_file_with_flag_override(tmp_path):
    hier, data = _small_system_files(tmp_path)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        yaml.safe_dump(
            {
                "hierarchy": hier,
                "data": str(data),
                "methods": ["base", "ols"],
                "first-train-end": "1989Q3",
                "horizons": 2,
            }
        )
    )
    out = tmp_path / "ev"
    assert main(["evaluate", "--config", str(cfg), "--horizons", "3", "--out", str(out)]) == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["horizons"] == 3
    assert meta["config"]["methods"] == "base,ols"
    _, rows = io.read_table(out / "mse.csv")
    assert {int(r[1]) for r in rows} == {1, 2, 3}
    assert {r[0] for r in rows} == {"base", "ols", "ols:inc", "ols:exp"}


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("colour: blue\n")
    assert main(["validate", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err


def test_evaluate_short_panel_fails(tmp_path, capsys):
    hier, data = _small_system_files(tmp_path)
    assert main(["evaluate", *_hier_args(hier), "--data", str(data), "--first-train-end", "1993Q1"]) == 1
    assert "not enough data" in capsys.readouterr().err


def test_panel_missing_series_is_schema_error(gdp_files, tmp_path, capsys):
    hier, _, panel = gdp_files
    short = tmp_path / "short.csv"
    io.write_long_panel(short, TimeSeriesPanel(panel.series_names[:-1], panel.times, panel.values[:, :-1]))
    assert main(["validate", *_hier_args(hier), "--data", str(short)]) == 2
    assert panel.series_names[-1] in capsys.readouterr().err


def test_csv_round_trip_stable(gdp_files, tmp_path):
    _, data, _ = gdp_files
    again = tmp_path / "again.csv"
    io.write_long_panel(again, io.read_long_panel(data))
    assert again.read_bytes() == data.read_bytes()
