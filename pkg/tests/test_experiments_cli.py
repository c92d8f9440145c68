import subprocess
import sys

import pytest
import yaml

from active_stokes.cli import main
from active_stokes.errors import DomainError
from active_stokes.experiments import (DEFAULTS, FAMILIES, ExperimentSpec, default_manifest,
                                       load_manifest, run_all, run_experiment)
from active_stokes.io import csv_body_of, read_structured

LIGHT = [{"id": "energy_signs", "params": {"grid": 8}},
         {"id": "dipole_remainder", "params": {"n_rays": 3}}]


def _manifest(tmp_path, items, name="m.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump({"experiments": items}))
    return p


def test_spec_resolution():
    s = ExperimentSpec("boundary_error_scaling", params={"N": 64}, tolerances={"slope": 0.1})
    r = s.resolved(tolerance_scale=2.0, seed=10)
    assert r.params["N"] == 64 and r.params["lams"] == DEFAULTS["boundary_error_scaling"]["params"]["lams"]
    assert r.tolerances["slope"] == 0.2 and r.tolerances["slope_target"] == 3.0
    assert r.seeds == list(range(10, 15))
    assert ExperimentSpec.from_dict(r.to_dict()).to_dict() == r.to_dict()
    with pytest.raises(DomainError):
        ExperimentSpec("nope")


def test_admissibility_checked_before_running():
    rep = run_experiment(ExperimentSpec("separation_diagnostics", params={"beta": 40.0}))
    assert not rep.passed and "AdmissibilityError" in rep.error and rep.runtime < 1
    relaxed = ExperimentSpec("separation_diagnostics", params={"beta": 40.0}, strict=False)
    relaxed.resolved().validate()


def test_empty_run(tmp_path):
    summary = run_all([], tmp_path)
    assert summary.exit_status == 0 and summary.reports == [] and summary.first_failure is None
    assert main(["run", str(_manifest(tmp_path, [])), "--out-dir", str(tmp_path / "o")]) == 0


def test_export_config_lists_all_families(tmp_path, capsys):
    assert main(["export-config", "-o", str(tmp_path / "all.yaml")]) == 0
    specs = load_manifest(read_structured(tmp_path / "all.yaml"))
    assert [s.id for s in specs] == list(FAMILIES)
    assert len(default_manifest()["experiments"]) == 7
    assert main(["export-config"]) == 0
    assert "uapp_convergence" in capsys.readouterr().out


def test_check_command(tmp_path, capsys):
    assert main(["check", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS identity_checks" in out
    meta = read_structured(tmp_path / "identity_checks.meta.yaml")
    assert meta["passed"] and {c["name"] for c in meta["checks"]} >= {"force", "torque", "stresslet"}
    assert read_structured(tmp_path / "summary.yaml")["exit_status"] == 0


def test_run_writes_reports_and_is_deterministic(tmp_path):
    m = _manifest(tmp_path, LIGHT)
    for out in ("a", "b"):
        assert main(["run", str(m), "--out-dir", str(tmp_path / out), "--seed", "3",
                     "--threads", "1"]) == 0
    for name in ("energy_signs", "dipole_remainder"):
        a = csv_body_of(tmp_path / "a" / f"{name}.csv")
        assert a == csv_body_of(tmp_path / "b" / f"{name}.csv")
        meta = read_structured(tmp_path / "a" / f"{name}.meta.yaml")
        assert meta["seeds"] == [3]
        assert set(meta) >= {"parameters", "seeds", "tolerances", "input_hash", "checks",
                             "versions", "conventions"}
        text = (tmp_path / "a" / f"{name}.csv").read_text()
        assert text.startswith("# experiment: ") and "# columns:" in text


def test_concurrent_jobs_match_sequential(tmp_path):
    m = _manifest(tmp_path, LIGHT)
    assert main(["run", str(m), "--out-dir", str(tmp_path / "seq")]) == 0
    assert main(["run", str(m), "--out-dir", str(tmp_path / "par"), "--jobs", "2"]) == 0
    for name in ("energy_signs", "dipole_remainder"):
        assert csv_body_of(tmp_path / "seq" / f"{name}.csv") == \
            csv_body_of(tmp_path / "par" / f"{name}.csv")


def test_failure_recorded_and_rest_still_run(tmp_path, capsys):
    items = [{"id": "dipole_remainder", "params": {"n_rays": 2}, "tolerances": {"decay": 1e-9},
              "output": "strict_decay"},
             {"id": "energy_signs", "params": {"grid": 8}}]
    code = main(["run", str(_manifest(tmp_path, items)), "--out-dir", str(tmp_path)])
    assert code == 1
    summ = read_structured(tmp_path / "summary.yaml")
    assert summ["first_failure"].startswith("strict_decay: decay")
    assert [e["passed"] for e in summ["experiments"]] == [False, True]
    assert "BAD" in capsys.readouterr().out


def test_tolerance_scale(tmp_path):
    m = _manifest(tmp_path, [{"id": "dipole_remainder", "params": {"n_rays": 2}}])
    assert main(["run", str(m), "--out-dir", str(tmp_path), "--tolerance-scale", "1e-9"]) == 1


def test_bad_manifest(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("experiments: [ {id: identity_checks")
    assert main(["run", str(p)]) == 2
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "active_stokes.cli", "export-config"],
                       capture_output=True, text=True, check=True)
    assert "experiments:" in r.stdout
