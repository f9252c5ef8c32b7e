import json
import os
import subprocess
import sys

import pytest

from dgnse import cli
from dgnse.solver import SingularSystemError


def run(tmp_path, *overrides, config=None):
    args = ["run"]
    if config is not None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    args += ["--override", f"output={json.dumps(str(tmp_path / 'out'))}"]
    for o in overrides:
        args += ["--override", o]
    return cli.main(args)


def report(tmp_path):
    return json.loads((tmp_path / "out" / "report.json").read_text())


def test_single_run(tmp_path):
    cfg = {"study": "single", "case": "taylor-vortex-box", "q": 0, "n": 8, "M": 8, "T": 1.0}
    assert run(tmp_path, config=cfg) == cli.EXIT_OK
    rep = report(tmp_path)
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["monitors"]["energy_residual_max"] <= 1e-8
    assert rep["monitors"]["infsup_beta"]["8"] > 0
    assert rep["passed"] and all(c["passed"] for c in rep["checks"])
    assert rep["config"]["levels"] == [[8, 8]]
    assert (tmp_path / "out" / "tables.csv").read_text().startswith("n,M,k,h,")


def test_gronwall_suite(tmp_path):
    assert run(tmp_path, "study=gronwall", "seed=42") == cli.EXIT_OK
    for row in report(tmp_path)["monitors"]["gronwall"]:
        assert row["passes"] == 10_000 and row["failures"] == 0


def test_invalid_grid_names_assumption(tmp_path, capsys):
    assert run(tmp_path, "M=2") == cli.EXIT_CONFIG
    assert "assumption (3)" in capsys.readouterr().err


@pytest.mark.parametrize(
    "override",
    ["q=2", "case=\"cavity\"", "study=\"bogus\"", "nu=-1", "n=0", "newton.max_iter=0", "colour=1", "novalue"],
)
def test_config_errors(tmp_path, override):
    assert run(tmp_path, override) == cli.EXIT_CONFIG


def test_missing_and_bad_config_file(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["run", "--config", str(bad)]) == cli.EXIT_CONFIG


def test_studies_need_levels(tmp_path):
    assert run(tmp_path, "study=\"spatial\"") == cli.EXIT_CONFIG


def test_overrides_nested_and_lists():
    cfg = {}
    cli.apply_override(cfg, "newton.max_iter=7")
    cli.apply_override(cfg, "n=[4,8]")
    cli.apply_override(cfg, "case=steady")
    assert cfg == {"newton": {"max_iter": 7}, "n": [4, 8], "case": "steady"}
    out = cli.validate(dict(cfg, M=4, study="spatial"))
    assert out["levels"] == [[4, 4], [8, 4]]


def test_nonconvergence_exit_code(tmp_path):
    code = run(tmp_path, "n=4", "M=4", "newton.max_iter=1", "newton.abs_tol=1e-300", "newton.rel_tol=1e-300")
    assert code == cli.EXIT_NONCONVERGENCE


def test_singular_exit_code(tmp_path, monkeypatch):
    def boom(cfg):
        raise SingularSystemError("zero pivot")

    monkeypatch.setattr(cli, "run_study", boom)
    assert run(tmp_path, "n=4", "M=4") == cli.EXIT_SINGULAR


def test_failed_check_exit_code(tmp_path):
    assert run(tmp_path, "n=4", "M=4", "thresholds.energy_residual=1e-30") == cli.EXIT_CHECKS
    assert not report(tmp_path)["passed"]


def test_tables_deterministic(tmp_path):
    outs = []
    for i in range(2):
        d = tmp_path / str(i)
        # M = 4 is time-error dominated, so the EOC checks may fail; only the output matters here
        assert run(d, "study=\"spatial\"", "n=[4,8]", "M=4") in (cli.EXIT_OK, cli.EXIT_CHECKS)
        outs.append((d / "out" / "tables.csv").read_bytes())
    assert outs[0] == outs[1]
    assert b"eoc_err_L2L2" in outs[0]


def test_module_entry_point(tmp_path):
    env = dict(os.environ, DGNSE_THREADS="1")
    out = tmp_path / "o"
    proc = subprocess.run(
        [sys.executable, "-m", "dgnse", "run", "--override", "n=4", "--override", "M=4", "--override", f"output={json.dumps(str(out))}"],
        capture_output=True,
        text=True,
        env=env,
    )
    assert proc.returncode == 0, proc.stderr
    assert "PASS energy_identity_residual" in proc.stdout
    assert (out / "report.json").exists()
