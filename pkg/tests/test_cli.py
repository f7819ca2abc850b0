import subprocess
import sys

import numpy as np
import pytest

from simultaneity.cli import build_parser, main, parse_grid
from simultaneity.errors import ConfigError


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_analytic_support_endpoint(capsys):
    assert main(["analytic", "--dist", "comp", "--query", "cdf", "--at", "0.49"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["t_s,cdf", "0.49,1"]


def test_analytic_prop_psv_grid_is_monotone(capsys):
    assert main(["analytic", "--scenario", "fig3b", "--dist", "prop", "--query", "psv",
                 "--grid", "0:0.4:0.01"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 41
    sigma = np.array([float(r.split(",")[1]) for r in rows])
    assert np.all(np.diff(sigma) <= 0)


def test_analytic_writes_file(tmp_path):
    out = tmp_path / "cdf.csv"
    assert main(["analytic", "--at", "0.1", "0.2", "--out", str(out)]) == 0
    assert out.read_text().startswith("t_s,cdf\n")


def test_malformed_config_exits_2_with_line(tmp_path, capsys):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("gamma_th = 1\nwhatever = 2\n")
    assert main(["analytic", "--config", str(cfg), "--at", "0.1"]) == 2
    assert "line 2" in capsys.readouterr().err


def test_design_fig5a(capsys):
    assert main(["design-twi", "--scenario", "fig5a", "--target-sigma", "1e-3"]) == 0
    out = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(out["W_star_s"]) == pytest.approx(0.47509, abs=1e-5)
    assert float(out["W_frame_s"]) == pytest.approx(0.48)
    assert float(out["rho2"]) == pytest.approx(7.394e-5, rel=1e-3)


def test_design_half_target(tmp_path, capsys):
    cfg = tmp_path / "unit.txt"
    cfg.write_text("C_min = 0\nC_max = 1\ngamma_th = 1\nsensor.1.perfect_detection = true\n"
                   "gamma = 1\nperfect_transmission = true\nsensor.2.perfect_detection = true\n")
    assert main(["design-twi", "--config", str(cfg), "--target-sigma", "0.5"]) == 0
    out = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(out["W_star_s"]) == pytest.approx(0.29289, abs=1e-5)


def test_design_infeasible_exits_4(capsys):
    assert main(["design-twi", "--scenario", "fig5a", "--target-sigma", "1e-5"]) == 4
    assert "7.39" in capsys.readouterr().err


def test_design_domain_error_exits_3():
    assert main(["design-twi", "--scenario", "fig5b", "--dist", "prop", "--method", "closed_form",
                 "--target-sigma", "1e-2"]) == 3


def test_unknown_figure_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["reproduce", "fig9"])
    assert exc.value.code == 2
    assert "fig3a" in capsys.readouterr().err


def test_simulate_twice_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["simulate", "--replications", "1", "--seed", "7", "--out-dir", str(d), "--trace", "1"]) == 0
    assert _files(a) == _files(b)
    assert {"pdv_samples.csv", "psv.csv", "latency.csv", "link_stats.csv", "summary.csv",
            "resolved_config.txt", "trace.csv", "violations.csv"} <= set(_files(a))


def test_resolved_config_reproduces_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--scenario", "fig3b", "--replications", "500", "--out-dir", str(a)]) == 0
    assert main(["simulate", "--config", str(a / "resolved_config.txt"), "--replications", "500",
                 "--out-dir", str(b)]) == 0
    assert _files(a) == _files(b)


def test_environment_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("SIMULTANEITY_OUT_DIR", str(tmp_path / "env"))
    monkeypatch.setenv("SIMULTANEITY_THREADS", "2")
    args = build_parser().parse_args(["simulate"])
    assert args.out_dir == str(tmp_path / "env") and args.threads == 2
    assert main(["simulate", "--replications", "10"]) == 0
    assert (tmp_path / "env" / "summary.csv").exists()


def test_unwritable_output_exits_5(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--replications", "1", "--out-dir", str(blocker / "sub")]) == 5


def test_negative_window_exits_3(tmp_path):
    assert main(["simulate", "--replications", "1", "--W", "-0.1", "--out-dir", str(tmp_path)]) == 3


def test_reproduce_lists_files(tmp_path, capsys):
    assert main(["reproduce", "fig3a", "--replications", "2000", "--out-dir", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "pdv_fig3a.csv" in printed and "plot_fig3a.gp" in printed


def test_parse_grid():
    np.testing.assert_allclose(parse_grid("0:0.4:0.1"), [0, 0.1, 0.2, 0.3, 0.4])
    with pytest.raises(ConfigError):
        parse_grid("0:1")
    with pytest.raises(ConfigError):
        parse_grid("1:0:0.1")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "simultaneity", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "design-twi" in proc.stdout
