"""Command-line surface: subcommands, config files, exit codes."""

import os

import pytest

from contactlab.cli import main, parse_scheme_spec, parse_sweep
from contactlab.core import JetPoint
from contactlab.scenarios import dho_exact_reference, state_error


def test_parse_sweep():
    assert parse_sweep("0.1,0.05") == [0.1, 0.05]
    vals = parse_sweep("log:-1:-2:3")
    assert vals[0] == pytest.approx(0.1) and vals[-1] == pytest.approx(0.01)


def test_scheme_spec_resolves_dho_splitting():
    sch = parse_scheme_spec(
        "strang(drift:T=1/2*p^2, kick:V=1/2*x^2+3/10*u)")
    z0 = JetPoint.of([1.0], 0.0, [0.0])
    z = z0
    for k in range(100):
        z = sch.apply(z, k * 0.05, 0.05)
    ref = dho_exact_reference(0.3, z0, 5.0)
    assert state_error(z, ref) <= 1e-2


def test_scheme_spec_nested_yoshida():
    sch = parse_scheme_spec("yoshida4(strang(harmonic, reeb:gamma=0.3))")
    assert sch.declared_order == 4


def test_decompose_exit_zero(capsys):
    assert main(["decompose", "x1*p1^2"]) == 0
    out = capsys.readouterr().out
    assert "pair 1: [p1^2, x1*u]" in out
    assert "reconstruction exact: True" in out


def test_dho_run_and_outputs(tmp_path, capsys):
    code = main(["dho", "--scheme", "strang", "--splitting", "1",
                 "--h", "0.1", "--T", "2.0",
                 "--h-sweep", "log:-1:-1.8:5",
                 "--out", str(tmp_path), "--svg"])
    assert code == 0
    files = os.listdir(tmp_path)
    assert any(f.endswith(".csv") for f in files)
    assert any(f.endswith(".svg") for f in files)


def test_config_error_exit_code():
    assert main(["dho", "--gamma", "2.5", "--h", "0.1", "--T", "1.0"]) == 2


def test_bracket_check_gate(capsys):
    assert main(["bracket-check", "--gadget", "basic",
                 "--eps-sweep", "log:-1:-2:6"]) == 0


def test_universal_subcommand(capsys):
    assert main(["universal", "u*p^2", "--gadget", "symmetric",
                 "--h", "0.02", "--T", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "endpoint error" in out


def test_toml_config(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('[dho]\ngamma = 0.5\nscheme = "strang"\nsplitting = 2\n'
                   'h = 0.05\nT = 1.0\n')
    assert main(["dho", "--config", str(cfg)]) == 0


def test_blowup_exit_code():
    # the quadratic-fiber flow from u = 1 leaves its domain at t = 2
    code = main(["convergence", "--scheme-spec", "quadu:c=-0.5",
                 "--hamiltonian=-1/2*u^2", "--z0", "0,0,1",
                 "--T", "5.0", "--h-sweep", "0.5,0.25,0.125,0.0625"])
    assert code == 3
