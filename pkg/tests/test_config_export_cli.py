import json

import numpy as np
import pytest

from orbitdesign import cli, runner
from orbitdesign.biped import make_biped_system
from orbitdesign.config import load_config, load_preset, parse_config, preset_text
from orbitdesign.errors import ConfigError
from orbitdesign.export import (PANELS, emit_plot_data, export_trajectory, read_panel, read_trajectory,
                                trajectory_columns)
from orbitdesign.integration import Curve, TimeGrid, integrate

X0 = np.deg2rad([-22.5, 22.5, 20.0, 50.0, 0.0, 90.0])


def _replace(text, old, new):
    assert old in text
    return text.replace(old, new)


# ---- configuration ---------------------------------------------------------------------------------------------------

def test_gait1_preset_weights():
    cfg = load_preset("gait1")
    assert np.array_equal(cfg.Q_diag, [100, 100, 100, 10, 10, 10])
    assert np.array_equal(cfg.R_diag, [0.01, 0.01])
    assert cfg.u_d_mode == "inverse-dynamics"
    assert cfg.T == 1.53 and np.allclose(cfg.x0, X0)


def test_gait2_preset_weights():
    cfg = load_preset("gait2")
    assert np.array_equal(cfg.Q_diag, [0.01, 0.01, 0.01, 0.1, 0.1, 0.1])
    assert np.array_equal(cfg.R_diag, [10, 10])
    assert cfg.u_d_mode == "zero"


def test_preset_builds_problem():
    prob = load_preset("gait1").design_problem()
    assert np.allclose(np.rad2deg(prob.xf[:3]), [22.5, -22.5, 20.0], atol=1e-12)
    assert prob.grid.N == 2000


def test_missing_key_is_named():
    text = _replace(preset_text("gait2"), "eps_f_tol = 0.001\n", "")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any("eps_f_tol" in p for p in info.value.problems)


def test_unknown_key_and_section_rejected_with_line():
    text = preset_text("gait2") + "\n[extras]\nfoo = 1\n"
    text = _replace(text, "T = 1.53\n", "T = 1.53\nperiod = 2\n")
    with pytest.raises(ConfigError) as info:
        parse_config(text, "run.cfg")
    problems = info.value.problems
    assert any("unknown key 'period'" in p and p.startswith("run.cfg:") for p in problems)
    assert any("unknown section [extras]" in p for p in problems)


def test_all_violations_collected():
    text = _replace(preset_text("gait2"), "R_diag = [10, 10]", "R_diag = [10, 0]")
    text = _replace(text, "N = 2000", "N = 10")
    text = _replace(text, 'u_d_mode = "zero"', 'u_d_mode = "feedforward"')
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    joined = " ".join(info.value.problems)
    assert "R_diag" in joined and "N" in joined and "u_d_mode" in joined


def test_dimension_and_json_errors():
    text = _replace(preset_text("gait2"), "R_diag = [10, 10]", "R_diag = [10, 10, 10]")
    text = _replace(text, "T = 1.53", "T = 1.53.0")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert len(info.value.problems) == 2


def test_waypoints_validated_and_converted():
    text = _replace(preset_text("gait2"), 'u_d_mode = "zero"', 'u_d_mode = "zero"\nwaypoints_deg = [[0.7, 0, 30, 20]]')
    cfg = parse_config(text)
    assert cfg.waypoints[0][0] == 0.7 and cfg.waypoints[0][2] == pytest.approx(np.pi / 6)
    bad = _replace(text, "[[0.7, 0, 30, 20]]", "[[1.7, 0, 30, 20]]")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


# ---- export ----------------------------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def traj():
    g = TimeGrid(1.53, 2000)
    rng = np.random.default_rng(0)
    u = np.column_stack([np.sin(g.t), np.cos(3 * g.t)]) + 1e-3 * rng.normal(size=(2001, 2))
    return integrate(make_biped_system().vector_field(), X0, u, g)


def test_export_row_count_and_columns(traj, tmp_path):
    path = export_trajectory(traj, tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == trajectory_columns(2)
    assert len(lines) - 1 == 2001
    assert lines[-1].split(",")[0] == "1.53"
    assert "th1_deg" in lines[0] and "u_emb" not in lines[0]


def test_export_roundtrip_at_printed_precision(traj, tmp_path):
    path = export_trajectory(traj, tmp_path / "t.csv")
    back = read_trajectory(path)
    assert back.grid.N == 2000 and back.grid.T == 1.53
    printed = lambda a: np.array([float("%.12g" % v) for v in a.ravel()]).reshape(a.shape)
    assert np.array_equal(back.x, printed(traj.x)) and np.array_equal(back.u, printed(traj.u))
    # a second pass reprints the primary columns bitwise (degree columns are derived from them)
    again = export_trajectory(back, tmp_path / "t2.csv")
    primary = lambda p: [",".join(ln.split(",")[:9]) for ln in p.read_text().splitlines()]
    assert primary(again) == primary(path)


def test_export_embedding_column(tmp_path):
    g = TimeGrid(1.0, 100)
    c = Curve(g, np.zeros((101, 6)), np.ones((101, 3)))
    back = read_trajectory(export_trajectory(c, tmp_path / "e.csv"))
    assert back.n_input == 3
    with pytest.raises(ValueError):
        export_trajectory(Curve(g, np.zeros((101, 4)), np.ones((101, 2))), tmp_path / "bad.csv")


def test_read_rejects_foreign_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory(p)


def test_plot_panels(traj, tmp_path):
    other = Curve(traj.grid, traj.x + 0.01, traj.u)
    emb = Curve(traj.grid, traj.x, np.hstack([traj.u, np.zeros((2001, 1))]))
    paths = emit_plot_data(tmp_path / "plot", other, emb, [traj, other], traj, ["iterate_00", "iterate_01"])
    assert sorted(paths) == sorted(PANELS)
    header, data = read_panel(paths["th1"])
    assert header == ["t", "desired", "embedding", "iterate_00", "iterate_01", "final"]
    assert data.shape == (2001, 6) and np.array_equal(data[:, 0], np.round(traj.grid.t, 12))
    assert data[-1, -1] == pytest.approx(np.rad2deg(traj.x[-1, 0]), abs=1e-9)
    _, u2 = read_panel(paths["u2"])
    assert u2[-1, -1] == pytest.approx(traj.u[-1, 1], abs=1e-9)


def test_plot_series_need_common_grid(traj, tmp_path):
    short = Curve(TimeGrid(1.53, 1000), np.zeros((1001, 6)), np.zeros((1001, 2)))
    with pytest.raises(ValueError):
        emit_plot_data(tmp_path, short, traj, [], traj)


def test_figures_rendered_from_panels(traj, tmp_path):
    from orbitdesign.plotting import render_figures

    paths = emit_plot_data(tmp_path / "plot", traj, traj, [traj], traj)
    pngs = render_figures(paths, tmp_path / "figures", title="test")
    assert {p.name for p in pngs} == {f"{p}.png" for p in PANELS} | {"overview.png"}
    assert all(p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in pngs)


# ---- command line ----------------------------------------------------------------------------------------------------

def _lines(out):
    return dict(line.split("\t", 1) for line in out.splitlines() if "\t" in line)


def test_corrupted_config_exits_2_without_solver(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise AssertionError("solver launched")

    monkeypatch.setattr(runner, "design_orbit", boom)
    bad = tmp_path / "bad.cfg"
    bad.write_text(_replace(preset_text("gait1"), "Q_diag = [100, 100, 100, 10, 10, 10]", "Q_diag = [100, 100"))
    assert cli.main(["design", "--config", str(bad), "--out", str(tmp_path / "run")]) == 2
    assert "Q_diag" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


@pytest.mark.parametrize("argv", [
    ["design"],
    ["design", "--scenario", "gait1", "--config", "x.cfg"],
    ["design", "--scenario", "gait3"],
    ["design", "--scenario", "gait1", "--max-minutes", "0"],
    ["frobnicate"],
    ["verify", "--traj", "x.csv"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2


def test_time_budget_is_solver_failure(tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["design", "--scenario", "gait2", "--out", str(out), "--max-minutes", "1e-9"])
    assert code == 3
    lines = _lines(capsys.readouterr().out)
    assert lines["status"] == "solver-failure" and lines["failed_phase"] == "desired"
    report = json.loads((out / "report.json").read_text())
    assert report["exit_code"] == 3 and "TimeBudgetError" in report["error"]
    # partial artifacts are kept
    assert (out / "config.cfg").read_text() == preset_text("gait2")
    assert (out / "trace.jsonl").read_text().count("\n") == 1


def test_verify_rejects_embedding_csv(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(preset_text("gait1"))
    g = TimeGrid(1.53, 2000)
    path = export_trajectory(Curve(g, np.zeros((2001, 6)), np.zeros((2001, 3))), tmp_path / "e.csv")
    assert cli.main(["verify", "--traj", str(path), "--config", str(cfg)]) == 2


def test_verify_reports_failed_checks(traj, tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(preset_text("gait1"))
    path = export_trajectory(traj, tmp_path / "t.csv")
    assert cli.main(["verify", "--traj", str(path), "--config", str(cfg)]) == 4
    lines = _lines(capsys.readouterr().out)
    assert lines["check.initial_state"].startswith("pass")
    assert lines["check.terminal_state"].startswith("FAIL")
    assert lines["status"] == "verification-failure"


def test_check_model_command(capsys):
    assert cli.main(["check-model"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 7 and out.rstrip().endswith("status\tpass")
