import json

import pytest

from gismc.cli import main

FAST = "sim:\n  duration: 0.02\nilc:\n  iterations: 2\n"


@pytest.fixture
def conf(tmp_path):
    p = tmp_path / "fast.yaml"
    p.write_text(FAST)
    return p


def test_run_and_metrics(tmp_path, conf, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(conf), "--out", str(out), "--seed", "3"]) == 0
    assert (out / "trace_iter02.csv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and len(man["iterations"]) == 2
    capsys.readouterr()
    assert main(["metrics", str(out), "--out", str(tmp_path / "m")]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].startswith("iteration,contour_rmse_um")
    assert len(json.loads((tmp_path / "m" / "metrics.json").read_text())) == 2
    assert main(["metrics", str(out / "trace_iter01.csv")]) == 0


def test_iterations_flag(tmp_path, conf):
    out = tmp_path / "run"
    assert main(["run", "--config", str(conf), "--out", str(out), "--iterations", "1",
                 "--variant", "C3"]) == 0
    assert sorted(p.name for p in out.glob("trace_iter*")) == ["trace_iter01.csv"]


def test_compare(tmp_path, conf, capsys):
    assert main(["compare", "--config", str(conf), "--out", str(tmp_path / "cmp")]) == 0
    assert "ordering holds" in capsys.readouterr().out
    assert main(["compare", "--config", str(conf), "--config", str(conf)]) == 1


def test_validate_config(tmp_path, conf, capsys):
    assert main(["validate-config", "--config", str(conf)]) == 0
    assert "config OK" in capsys.readouterr().out
    bad = tmp_path / "bad.yaml"
    bad.write_text("controler:\n  variant: C1\n")
    assert main(["validate-config", "--config", str(bad)]) == 1
    assert "controller.variant" in capsys.readouterr().err


def test_exit_codes(tmp_path, conf, capsys):
    assert main(["run", "--iterations", "0"]) == 1
    with pytest.raises(SystemExit) as ei:
        main(["run", "--bogus"])
    assert ei.value.code == 1
    assert main(["validate-config", "--config", str(tmp_path / "missing.yaml")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", str(conf), "--out", str(blocker / "sub")]) == 3
    assert main(["metrics", str(tmp_path)]) == 3
    unstable = tmp_path / "unstable.yaml"
    unstable.write_text("plant:\n  m_1: 2.0\n  m_2: 20.0\n  mu_k1: 1.0\n  mu_k2: 20.0\n"
                        "sim:\n  duration: 0.2\n  theta_max: 1.0e-7\nilc:\n  iterations: 1\n")
    assert main(["run", "--config", str(unstable), "--out", str(tmp_path / "u")]) == 2
    assert "aborted" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["circle.yaml", "cardioid.yaml"])
def test_shipped_configs_validate(name):
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / name
    assert main(["validate-config", "--config", str(path)]) == 0
