import json
import os

import pytest

from chcook import cli
from chcook.config import ConfigError, parse_config

MINIMAL = """\
experiment = simulate
M = 16
P = 64
dt = 1e-4
T = 0.1
lambda = 0
n = 1
c = 0
seed = 1
"""


def _with(**kw):
    lines = [ln for ln in MINIMAL.splitlines() if ln.split("=")[0].strip() not in kw]
    return "\n".join(lines + [f"{k} = {v}" for k, v in kw.items()]) + "\n"


def test_minimal_config():
    rc = parse_config(MINIMAL)
    assert rc.experiment == "simulate" and rc.master_seed == 1
    assert rc.solver.M == 16 and rc.solver.P == 64 and rc.solver.n_steps == 1000
    assert rc.spec.lam == 0 and rc.spec.n == 1
    assert rc.output_dir == "./out"
    assert rc.echo()["chunk_size"] == 64


def test_sections_and_comments_are_accepted():
    text = "[run]\n# comment\n" + MINIMAL.replace("M = 16", "M = 16   ; trailing")
    assert parse_config(text).solver.M == 16


def test_grid_constraint_names_line():
    text = MINIMAL.replace("P = 64", "P = 16")
    with pytest.raises(ConfigError, match=r"P >= 2\*\(M\+1\)") as exc:
        parse_config(text)
    assert exc.value.line == 3 and exc.value.key == "P"
    assert str(exc.value).startswith("line 3: P:")


def test_zero_step_rejected():
    with pytest.raises(ConfigError, match="dt > 0"):
        parse_config(MINIMAL.replace("dt = 1e-4", "dt = 0"))


@pytest.mark.parametrize("text,match", [
    (MINIMAL + "bogus = 1\n", "unknown key"),
    (MINIMAL.replace("seed = 1\n", ""), "seed: missing required key"),
    (MINIMAL + "M = 8\n", "duplicate key"),
    (MINIMAL.replace("M = 16", "M = 1.5"), "expected an integer"),
    (MINIMAL + "drift = implicit\n", "expected one of"),
    (MINIMAL + "[nowhere]\n", "unknown section"),
    (MINIMAL + "no equals sign\n", "key = value"),
    (MINIMAL.replace("T = 0.1", "T = 0.10005"), "multiple of dt"),
    (MINIMAL.replace("c = 0", "c = 1"), "-1 < c < 1"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def _run_cli(tmp_path, text, *extra, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    out = tmp_path / "out"
    code = cli.main([parse_config(text).experiment, "--config", str(p), "--out", str(out), *extra])
    return code, out


def test_simulate_zero_horizon_writes_initial_snapshot(tmp_path, capsys):
    code, out = _run_cli(tmp_path, _with(T=0, init="mode", init_amplitude=0.2))
    assert code == 0
    lines = (out / "simulate.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["t", "c_0", "c_1"] and len(lines[0].split(",")) == 18
    assert len(lines) == 2 and lines[1].startswith("0.0,0.0,0.2,")
    meta = json.loads((out / "run.meta.json").read_text())
    assert meta["status"] == "ok" and meta["config"]["M"] == 16
    assert "simulate: DONE" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    text = _with(T=0.01, record_every=10)
    _, out = _run_cli(tmp_path, text)
    first = (out / "simulate.csv").read_bytes()
    _, out = _run_cli(tmp_path, text, "--threads", "8")
    assert (out / "simulate.csv").read_bytes() == first
    _, out = _run_cli(tmp_path, text, "--seed", "2")
    assert (out / "simulate.csv").read_bytes() != first


def test_blowup_exit_code_keeps_partial_csv(tmp_path):
    text = _with(dt=0.01, T=1, n=16, max_substep_level=0, init="mode", init_amplitude=0.9)
    with pytest.warns(RuntimeWarning, match="stability number"):
        code, out = _run_cli(tmp_path, text)
    assert code == cli.EXIT_BLOWUP
    summary = json.loads((out / "simulate.summary.json").read_text())
    assert summary["passed"] is False and summary["blowup_step"] >= 0
    assert (out / "simulate.csv").read_text().startswith("t,c_0")


def test_subcommand_mismatch_and_bad_path(tmp_path, capsys):
    p = tmp_path / "run.ini"
    p.write_text(MINIMAL)
    assert cli.main(["energy", "--config", str(p)]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.ini")]) == cli.EXIT_CONFIG
    p.write_text(MINIMAL.replace("P = 64", "P = 16"))
    assert cli.main(["simulate", "--config", str(p)]) == cli.EXIT_CONFIG
    assert "line 3: P:" in capsys.readouterr().err


def test_shipped_configs_parse():
    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    names = sorted(f for f in os.listdir(root) if f.endswith(".ini"))
    assert {n[:-4] for n in names} == set(cli.DRIVERS)
    for n in names:
        with open(os.path.join(root, n)) as fh:
            assert parse_config(fh.read()).experiment == n[:-4]
