import json
import subprocess
import sys

import pytest

from hfact import cli
from hfact.acceptance import CheckResult
from hfact.errors import DivergingRounds
from hfact.factorization import FactorizationResult, RoundRecord

SMALL = {"M": [8.0, 16.0], "factorize_M": 8.0, "K_max": 1}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


def run(tmp_path, *args, out="out"):
    return cli.main(list(args) + ["--out", str(tmp_path / out)])


@pytest.mark.parametrize("sub, files", [
    ("constants", ["constants.json", "constants_weights.csv"]),
    ("apply", ["apply.json", "apply_values.csv", "apply_values.dat"]),
    ("atom-approx", ["atom_approx.json", "atom_approx_sweep.csv", "atom_approx_residual.dat"]),
    ("factorize", ["factorize.json", "factorize_rounds.csv", "factorize_decay.dat"]),
    ("duality", ["duality.json", "duality_checks.csv", "factorize.json"]),
    ("bmo-bound", ["bmo_bound.json", "bmo_bound_multipliers.csv"]),
])
def test_subcommands_succeed(tmp_path, small_config, sub, files):
    assert run(tmp_path, sub, "--config", str(small_config)) == 0
    for name in files:
        assert (tmp_path / "out" / name).exists()


def test_unit_weights_constants(tmp_path, small_config):
    run(tmp_path, "constants", "--config", str(small_config))
    summary = json.loads((tmp_path / "out" / "constants.json").read_text())
    assert summary["apq_constant"] == pytest.approx(1.0, abs=1e-12)
    assert summary["dual_classes"]["duals"] == pytest.approx([1.0, 1.0], abs=1e-12)


def test_duality_report_respects_bounds(tmp_path, small_config):
    run(tmp_path, "duality", "--config", str(small_config))
    checks = json.loads((tmp_path / "out" / "duality.json").read_text())["checks"]
    assert len(checks) == 5
    assert all(abs(c["rhs"]) <= c["bound"] for c in checks)


def test_outputs_are_byte_identical_across_runs_and_threads(tmp_path, small_config):
    assert run(tmp_path, "factorize", "--config", str(small_config), "--threads", "1", out="a") == 0
    assert run(tmp_path, "factorize", "--config", str(small_config), "--threads", "2", out="b") == 0
    a = sorted((tmp_path / "a").iterdir())
    b = sorted((tmp_path / "b").iterdir())
    assert [p.name for p in a] == [p.name for p in b]
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))


def test_invalid_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"exponents": {"p": [4.0, 0.5]}}))
    assert run(tmp_path, "constants", "--config", str(bad)) == 2
    assert "exponents.p[1]" in capsys.readouterr().err
    assert run(tmp_path, "constants", "--threads", "0") == 2


def test_unknown_subcommand_is_rejected():
    with pytest.raises(SystemExit) as info:
        cli.main(["explode"])
    assert info.value.code == 2


def test_diverging_rounds_exit_3_with_partial_report(tmp_path, small_config, monkeypatch):
    partial = FactorizationResult([], [RoundRecord(1, 4, 1.0, 2.0, 3.0, 0.0, 0.0, 5, True, 0.0)], 3.0,
                                  {"M": 8.0}, 1.0, 1.0)

    def diverge(*args, **kwargs):
        raise DivergingRounds("round 1 error grew", partial)

    monkeypatch.setattr(cli, "factorize", diverge)
    assert run(tmp_path, "factorize", "--config", str(small_config)) == 3
    summary = json.loads((tmp_path / "out" / "factorize.json").read_text())
    assert summary["rounds"][0]["l1_error"] == 2.0


def test_failed_suite_exits_1(tmp_path, monkeypatch):
    fake = [CheckResult(1, "adjoint identity", True, {"gap": 0.0}, 0.0),
            CheckResult(2, "cancellation", False, {"worst": 1.0}, 0.0)]
    monkeypatch.setattr(cli, "run_all", lambda cfg, echo=print: fake)
    assert run(tmp_path, "suite") == 1
    summary = json.loads((tmp_path / "out" / "suite.json").read_text())
    assert [c["passed"] for c in summary["criteria"]] == [True, False]


def test_console_entry_point(tmp_path, small_config):
    proc = subprocess.run([sys.executable, "-m", "hfact.cli", "constants", "--config", str(small_config),
                           "--out", str(tmp_path / "sub")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "sub" / "constants.json").exists()
