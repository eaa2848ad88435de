import json
import subprocess
import sys

import pytest

from daepencil import corpus


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "daepencil.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def write_problem(tmp_path, name, fname="problem.json", **kwargs):
    path = tmp_path / fname
    path.write_text(json.dumps(corpus.problem_dict(name, **kwargs)))
    return path


def test_analyze_singular_problem(tmp_path):
    path = write_problem(tmp_path, "free_component_blowup")
    out = run_cli("analyze", str(path))
    assert out.returncode == 0, out.stderr
    doc = json.loads(out.stdout)
    cls = doc["classification"]
    assert cls["kind"] == "singular"
    assert cls["rank"] == 2
    assert cls["total_defect"] == 2
    assert doc["minimal_indices"] == {"primal": [0], "dual": [1]}
    assert doc["identity_residuals"]["max_residual"] <= 1e-8
    assert doc["tool"] == "daepencil" and "seed" in doc


def test_analyze_regular_problem(tmp_path):
    path = write_problem(tmp_path, "riccati_constraint")
    out = run_cli("analyze", str(path))
    doc = json.loads(out.stdout)
    assert doc["classification"]["kind"] == "regular"
    assert doc["classification"]["index"] == 1


def test_analyze_malformed_json_no_partial_output(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    report = tmp_path / "report.json"
    out = run_cli("analyze", str(bad), "--report", str(report))
    assert out.returncode == 2
    assert "error" in out.stderr
    assert not report.exists()


def test_analyze_high_index_exit_code(tmp_path):
    doc = {"A": {"rows": 2, "cols": 2, "data": [0, 1, 0, 0]},
           "B": {"rows": 2, "cols": 2, "data": [1, 0, 0, 1]},
           "f": ["0", "0"]}
    path = tmp_path / "nilpotent.json"
    path.write_text(json.dumps(doc))
    out = run_cli("analyze", str(path))
    assert out.returncode == 3


def test_solve_blowup_exit_and_report(tmp_path):
    path = write_problem(tmp_path, "riccati_constraint", x10=1.0)
    csv_path = tmp_path / "traj.csv"
    report = tmp_path / "out.json"
    out = run_cli("solve", str(path), "--horizon", "10", "--out",
                  str(csv_path), "--report", str(report))
    assert out.returncode == 4
    doc = json.loads(report.read_text())
    assert doc["verdict"]["kind"] == "blowup"
    assert abs(doc["verdict"]["T_est"] - 1.0) <= 1e-2
    assert csv_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert header == "t,x1,x2,res_ae1,res_ae2"


def test_solve_stable_run(tmp_path):
    path = write_problem(tmp_path, "circle_manifold")
    report = tmp_path / "out.json"
    out = run_cli("solve", str(path), "--horizon", "50", "--out",
                  str(tmp_path / "t.csv"), "--report", str(report))
    assert out.returncode == 0
    doc = json.loads(report.read_text())
    assert doc["verdict"]["kind"] == "global"
    assert doc["lagrange"] == "Stable"
    assert doc["sup_norm"] <= 1.01


def test_solve_missing_free_pin_names_component(tmp_path):
    doc = corpus.problem_dict("free_component_blowup")
    del doc["phi_s2"]
    del doc["phi_s2_pins"]
    path = tmp_path / "nopin.json"
    path.write_text(json.dumps(doc))
    out = run_cli("solve", str(path), "--out", str(tmp_path / "t.csv"))
    assert out.returncode == 6
    assert "free component" in out.stderr
    assert "Xs2" in out.stderr


def test_solve_singular_blowup(tmp_path):
    path = write_problem(tmp_path, "free_component_blowup")
    report = tmp_path / "out.json"
    out = run_cli("solve", str(path), "--horizon", "2", "--out",
                  str(tmp_path / "t.csv"), "--report", str(report))
    assert out.returncode == 4
    doc = json.loads(report.read_text())
    assert 0.48 <= doc["verdict"]["T_est"] <= 0.52


def test_solve_project_flag(tmp_path):
    doc = corpus.problem_dict("sqrt_growth")
    doc["initial"]["x0"] = [3.0, 0.7]   # off-manifold start
    path = tmp_path / "off.json"
    path.write_text(json.dumps(doc))
    out = run_cli("solve", str(path), "--out", str(tmp_path / "t.csv"))
    assert out.returncode == 6
    out2 = run_cli("solve", str(path), "--project", "--out",
                   str(tmp_path / "t2.csv"))
    assert out2.returncode == 0


def test_solve_plot_writes_figure(tmp_path):
    path = write_problem(tmp_path, "circle_manifold")
    csv_path = tmp_path / "run.csv"
    out = run_cli("solve", str(path), "--horizon", "5", "--out",
                  str(csv_path), "--plot", "--report", str(tmp_path / "r.json"))
    assert out.returncode == 0
    fig = tmp_path / "run.png"
    assert fig.exists() and fig.stat().st_size > 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["files"]["figure"] == str(fig)


def test_solve_domain_exit_code(tmp_path):
    doc = corpus.problem_dict("sqrt_growth")
    doc["domain"] = ["x1 < 5"]
    path = tmp_path / "dom.json"
    path.write_text(json.dumps(doc))
    report = tmp_path / "r.json"
    out = run_cli("solve", str(path), "--horizon", "10", "--out",
                  str(tmp_path / "t.csv"), "--report", str(report))
    assert out.returncode == 5
    doc_out = json.loads(report.read_text())
    assert doc_out["verdict"]["kind"] == "left_domain"
    assert abs(doc_out["verdict"]["t_last"] - 3.0) <= 1e-6


def test_certify_mixed_verdict(tmp_path):
    path = write_problem(tmp_path, "riccati_constraint")
    out = run_cli("certify", str(path))
    assert out.returncode == 0
    doc = json.loads(out.stdout)
    assert doc["combined"] == "Mixed"
    outcomes = {c["name"]: c["outcome"] for c in doc["checks"]}
    assert all(v == "VerifiedOnSamples" for v in outcomes.values())


def test_certify_blowup_verdict(tmp_path):
    path = write_problem(tmp_path, "free_component_blowup")
    out = run_cli("certify", str(path))
    doc = json.loads(out.stdout)
    assert doc["combined"] == "BlowUpCertified"


def test_certify_empty_block_rejected(tmp_path):
    doc = corpus.problem_dict("riccati_constraint")
    doc["certificates"] = []
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(doc))
    out = run_cli("certify", str(path))
    assert out.returncode == 2


def test_certify_deterministic(tmp_path):
    path = write_problem(tmp_path, "sqrt_growth")
    a = run_cli("certify", str(path))
    b = run_cli("certify", str(path))
    assert a.stdout == b.stdout


def test_seed_env_override(tmp_path):
    path = write_problem(tmp_path, "riccati_constraint")
    out = run_cli("analyze", str(path))
    doc = json.loads(out.stdout)
    env_run = subprocess.run(
        [sys.executable, "-m", "daepencil.cli", "analyze", str(path)],
        capture_output=True, text=True,
        env={"DAE_PENCIL_SEED": "4242", "PATH": "/usr/bin:/bin"})
    doc2 = json.loads(env_run.stdout)
    assert doc2["seed"] == 4242
    assert doc["seed"] != 4242


def test_missing_corpus_resource_is_loud():
    with pytest.raises(KeyError):
        corpus.problem_dict("no_such_problem")


def test_selftest_subcommand_passes():
    out = run_cli("selftest", "--jobs", "2")
    assert out.returncode == 0, out.stdout + out.stderr
    lines = [l for l in out.stdout.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == 10
    assert all(l.startswith("PASS") for l in lines)
