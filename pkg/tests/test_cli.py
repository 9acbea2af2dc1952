import textwrap

import pytest

from petcor.cli import main

TINY = textwrap.dedent("""
    name = "tiny"
    [run]
    t_end = 0.2
    [exosystem]
    S = [[0.0, 1.0], [-1.0, 0.0]]
    v0 = [1.0, 0.0]
    [graph]
    N = 2
    self_periods = [0.01, 0.02]
    edges = [
      { sender = 0, receiver = 1, weight = 1.0, period = 0.01 },
      { sender = 1, receiver = 2, weight = 1.0, period = 0.02 },
    ]
    [observer]
    kappa1 = 3.0
    kappa2 = 3.0
    delta_S = 0.05
    delta_v = 0.05
    gamma_S = 0.2
    gamma_v = 0.2
    [agent_defaults]
    plant = "paper_f"
    D_true = 0.05
    D_hat = 0.05
    K = -5.0
    [[agents]]
    X0 = 1.0
    [[agents]]
    X0 = -1.0
""")


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    out = capsys.readouterr().out
    assert "s1_no_mismatch" in out and "s5_disturbance" in out


def test_bound_on_s1(capsys):
    assert main(["bound", "s1_no_mismatch"]) == 0
    out = capsys.readouterr().out
    assert "kappa*T = 6.000000e-02" in out
    assert "M1      = 2.72" in out
    assert "verdict: warn" in out


def test_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(TINY)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "--plots", "--diagnostics"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["errors.svg", "events.svg", "events_net.csv", "events_sensor.csv", "outputs.svg",
                     "trace.csv"]
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert "V1" in header
    assert "scenario      tiny" in capsys.readouterr().out


def test_bad_config_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(TINY.replace("K = -5.0", "K = -0.5"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("petcor: error:") and "gain not admissible" in err


def test_missing_file_exits_nonzero(capsys):
    assert main(["bound", "/nonexistent/x.toml"]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_console_script(tmp_path):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "petcor.cli", "bound", "nope.toml"], capture_output=True,
                         text=True, cwd=tmp_path)
    assert res.returncode == 1 and "petcor: error" in res.stderr
