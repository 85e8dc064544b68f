import json

import numpy as np
import pytest

from frontdoor.cli import build_parser, main
from frontdoor.fixtures import fixture_text, load_fixture
from frontdoor.sem import draw_model, generate


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_scan_fixture(capsys):
    code, out, _ = run(capsys, "scan", "gtoy")
    assert code == 0
    doc = json.loads(out)
    assert doc["success"] and doc["witness"] == {"z": ["Zi", "Zo"], "z_i": ["Zi"], "z_o": ["Zo"]}
    assert doc["assumption_violations"] == []


def test_scan_file_and_errors(capsys, tmp_path):
    path = tmp_path / "g.smcm"
    path.write_text(fixture_text("fig6"))
    code, out, _ = run(capsys, "scan", str(path))
    assert code == 0 and json.loads(out)["assumption_violations"]
    code, _, err = run(capsys, "scan", "no-such-graph")
    assert code == 1 and err.startswith("error:")
    bare = tmp_path / "bare.smcm"
    bare.write_text("smcm 2\nd 0 1\n")
    code, _, err = run(capsys, "scan", str(bare))
    assert code == 1 and "roles" in err


def test_ensemble_csv_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        code, out, _ = run(capsys, "ensemble", "--p", "10", "--d", "2", "--q", "0", "1",
                           "--n", "15", "--seed", "3", "--out", str(path))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("p,d,q,variant") and len(lines) == 3
    doc = json.loads(out)
    assert doc["config"]["seed"] == 3 and len(doc["rows"]) == 2


def test_ensemble_rejects_bad_params(capsys):
    code, _, err = run(capsys, "ensemble", "--p", "3", "--n", "1")
    assert code == 1 and "p must be" in err


def test_simulate_no_search(capsys, tmp_path):
    out_csv = tmp_path / "sim.csv"
    code, out, _ = run(capsys, "simulate", "fig3left", "--n-samples", "2000", "--n-runs", "2",
                       "--no-search", "--root-law", "uniform", "--out", str(out_csv))
    assert code == 0
    doc = json.loads(out)
    assert doc["summary"]["n_runs"] == 2 and doc["summary"]["err_twostage"] is not None
    assert doc["summary"]["err_z"] is None
    assert out_csv.read_text().splitlines()[0].startswith("run,true_ate")


def test_simulate_with_search_is_deterministic(capsys, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        code, _, _ = run(capsys, "simulate", "rnd1", "--n-samples", "1000", "--n-runs", "2",
                         "--n-r", "2", "--ci", "fisher_z", "--seed", "5", "--out", str(p))
        assert code == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def synthetic_audit(tmp_path):
    g = load_fixture("rnd1")
    rng = np.random.default_rng(0)
    table = generate(draw_model(g, rng), 1500, "observational", rng).table
    table.to_csv(tmp_path / "data.csv")
    r = g.roles
    manifest = {
        "csv_path": "data.csv",
        "treatment": g.names[r.treatment],
        "outcome": g.names[r.outcome],
        "children": [g.names[b] for b in sorted(r.children)],
    }
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    return tmp_path / "m.json"


def test_audit_end_to_end(capsys, tmp_path):
    m = synthetic_audit(tmp_path)
    outs = []
    for k in range(2):
        out_dir = tmp_path / f"out{k}"
        code, out, err = run(capsys, "audit", str(m), "--n-r", "3", "--ci", "fisher_z",
                             "--max-size", "2", "--n-boot", "5", "--top-k", "2", "--out-dir", str(out_dir))
        assert code == 0, err
        outs.append(out_dir)
    doc = json.loads((outs[0] / "report.json").read_text())
    assert doc["failure"] is False
    assert doc["selected"]["z"]
    for name in ("runs.csv", "bootstrap.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_audit_missing_csv(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("FRONTDOOR_GERMAN_CSV", raising=False)
    code, _, err = run(capsys, "audit", "german_credit", "--csv", str(tmp_path / "none.csv"))
    assert code == 1 and "CSV not found" in err


def test_parser_defaults():
    args = build_parser().parse_args(["audit", "german_credit"])
    assert args.n_r == 100 and args.p_v == 0.1 and args.ci == "rcot"
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
