import csv
import json
from pathlib import Path

import jsonschema
import pytest

from ellipstab.cli import main

DATA = Path(__file__).parent / "data"
SCHEMAS = Path(__file__).resolve().parents[1] / "schemas"

QUARTIC = {"nvars": 2, "mode": "exact", "terms": [
    {"exp": [2, 0], "re": "1/2", "im": "0"},
    {"exp": [0, 2], "re": "1/2", "im": "0"},
    {"exp": [4, 0], "re": "1", "im": "0"},
]}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def load(path):
    return json.loads(Path(path).read_text())


def validate(name, doc):
    jsonschema.validate(doc, load(SCHEMAS / f"{name}.schema.json"))


@pytest.fixture
def quartic(tmp_path):
    p = tmp_path / "quartic.json"
    p.write_text(json.dumps(QUARTIC))
    return p


def test_psi_table_and_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "psi", "--alpha", "golden", "--K", 6, "--out", tmp_path)
    assert code == 0
    assert len(out.splitlines()) == 6 and out.split()[:3] == ["1", "1", "1"]
    with open(tmp_path / "psi.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["K", "Psi", "K*Psi"] and len(rows) == 7
    validate("psi", load(tmp_path / "psi.json"))


def test_psi_accepts_alpha_file(capsys, tmp_path):
    code, _, _ = run(capsys, "psi", "--alpha", DATA / "golden_alpha.json", "--K", 3, "--out", tmp_path)
    assert code == 0


def test_resonance_found_and_absent(capsys):
    code, out, _ = run(capsys, "resonance", "--alpha", "2,3,5", "--K", 3)
    assert code == 0
    w = json.loads(out)["witness"]
    assert sum(abs(v) for v in w) <= 3 and 2 * w[0] + 3 * w[1] + 5 * w[2] == 0
    code, out, _ = run(capsys, "resonance", "--alpha", "2,3,5", "--K", 2)
    assert code == 0 and json.loads(out)["witness"] is None


def test_dirichlet_and_delta(capsys, tmp_path):
    code, out, _ = run(capsys, "dirichlet", "--v", "1,3/2", "--Q", 4, "--out", tmp_path)
    assert code == 0
    validate("dirichlet", load(tmp_path / "dirichlet.json"))
    code, out, _ = run(capsys, "delta", "--alpha", "golden", "--x", 100)
    assert code == 0 and json.loads(out)["Delta"] >= 1


def test_bnf_quartic(capsys, tmp_path, quartic):
    code, out, _ = run(capsys, "bnf", "--input", quartic, "--alpha", "1", "--order", 4, "--R", "0.5",
                       "--out", tmp_path / "run.json")
    assert code == 0
    doc = load(tmp_path / "run.json")
    validate("bnf", doc)
    terms = doc["result"]["hm"]["terms"]
    assert any(t["exp"] == [2] and t["re"] == "3/2" for t in terms)


def test_bnf_order_too_small(capsys, quartic):
    code, _, err = run(capsys, "bnf", "--input", quartic, "--alpha", "1", "--order", 3)
    assert code == 2
    assert json.loads(err)["exit_code"] == 2


def test_bnf_resonant_alpha(capsys, tmp_path):
    H = {"nvars": 4, "mode": "exact", "terms": [
        {"exp": [2, 0, 0, 0], "re": "1/2", "im": "0"}, {"exp": [0, 0, 2, 0], "re": "1/2", "im": "0"},
        {"exp": [0, 2, 0, 0], "re": "1", "im": "0"}, {"exp": [0, 0, 0, 2], "re": "1", "im": "0"},
        {"exp": [3, 0, 0, 0], "re": "1", "im": "0"}, {"exp": [1, 2, 0, 0], "re": "1", "im": "0"}]}
    p = tmp_path / "res.json"
    p.write_text(json.dumps(H))
    code, _, err = run(capsys, "bnf", "--input", p, "--alpha", "1,2", "--order", 4)
    assert code == 3
    assert json.loads(err)["kind"] == "resonance"


def test_missing_and_malformed_input(capsys, tmp_path):
    code, _, err = run(capsys, "bnf", "--input", tmp_path / "nope.json", "--alpha", "1", "--order", 4)
    assert code == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{\"nvars\": 2,\n  oops}")
    code, _, err = run(capsys, "bnf", "--input", bad, "--alpha", "1", "--order", 4)
    assert code == 1
    assert "2:" in json.loads(err)["reason"] or json.loads(err)["location"]


def test_unknown_subcommand_is_config_error(capsys):
    assert run(capsys, "frobnicate")[0] == 1


def test_steep_certified_and_refuted(capsys, tmp_path):
    code, _, _ = run(capsys, "steep", "--poly", DATA / "sum_squares.json", "--out", tmp_path)
    assert code == 0
    doc = load(tmp_path / "steep.json")
    validate("steep", doc)
    assert doc["certificate"]["verdict"] == "certified"
    with open(tmp_path / "steep_margins.csv") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "xi"
    code, _, err = run(capsys, "steep", "--poly", DATA / "saddle.json")
    assert code == 3 and json.loads(err)["witness"] is not None


def test_seed_determinism(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "steep", "--poly", DATA / "sum_squares.json", "--seed", 7, "--out", a)
    run(capsys, "steep", "--poly", DATA / "sum_squares.json", "--seed", 7, "--out", b)
    assert (a / "steep.json").read_text() == (b / "steep.json").read_text()


def test_constants_with_schedule(capsys, tmp_path):
    code, _, _ = run(capsys, "constants", "--steep", DATA / "steep_params.json", "--r", 0.1, "--eps", 1e-12,
                     "--out", tmp_path)
    assert code == 0
    doc = load(tmp_path / "constants.json")
    validate("constants", doc)
    assert doc["constants"]["a"] == 2 and doc["schedule"]["m"] >= 0


def test_simulate_csv(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "--ham", DATA / "golden_H.json", "--z0", "0.03,0.03,0,0", "--dt", 1e-3,
                     "--steps", 500, "--stride", 100, "--out", tmp_path)
    assert code == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "I1", "I2", "energy"] and len(rows) == 7
    validate("simulate", load(tmp_path / "simulate.json"))


def test_simulate_bad_z0(capsys):
    code, _, _ = run(capsys, "simulate", "--ham", DATA / "golden_H.json", "--z0", "0.03,0.03", "--dt", 1e-3,
                     "--steps", 5)
    assert code == 2


def test_average_jsonl(capsys, tmp_path):
    code, _, _ = run(capsys, "average", "--datum", DATA / "datum_stage0.json", "--omega", DATA / "omega_half.json",
                     "--iters", 2, "--out", tmp_path)
    assert code == 0
    lines = (tmp_path / "average_log.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["contraction"] >= 2
    validate("average", load(tmp_path / "average.json"))


def test_confine(capsys, tmp_path):
    code, _, _ = run(capsys, "confine", "--steep", DATA / "steep_params.json", "--ham", DATA / "H_weak.json",
                     "--h", DATA / "h_actions_weak.json", "--z0", "0.01,0.01,0,0", "--Q", 50, "--m", 1, "--r", 0.1,
                     "--max-steps", 1000, "--out", tmp_path)
    assert code == 0
    doc = load(tmp_path / "confine.json")
    validate("confine", doc)
    assert doc["log"]["stages"]


def test_pipeline_bundle(capsys, tmp_path):
    code, _, _ = run(capsys, "pipeline", "--ham", DATA / "golden_H.json", "--alpha", "golden", "--steps", 2000,
                     "--out", tmp_path)
    assert code == 0
    doc = load(tmp_path / "pipeline.json")
    validate("pipeline", doc)
    assert doc["certificate"]["verdict"] == "certified"
    assert doc["drift_below_envelope"]
    assert (tmp_path / "trajectory.csv").exists()


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and out.strip() == "0.1.0"
