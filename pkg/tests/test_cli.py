import csv
import json

import numpy as np
import pytest

from carnot_gmt import __version__
from carnot_gmt import report
from carnot_gmt.cli import disambiguate, main
from carnot_gmt.errors import MalformedInputError
from carnot_gmt.scenario import parse_scenario

KAPPA = {"name": "kappa", "group": "heisenberg1", "norm": {"kind": "koranyi"}, "surface": "vplane",
         "check": "kappa", "direction": [1, 0]}
VALIDATE = {"name": "engel", "check": "validate", "group": "engel"}
COAREA = {"name": "coarea", "check": "coarea", "group": "heisenberg1", "surface": {"name": "vplane", "domain": [[0, 1], [0, 1]]},
          "phi": "x2"}


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(p)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_kappa(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, "k.json", KAPPA), "--out", str(out)]) == 0
    doc = json.loads((out / "kappa.json").read_text())
    assert doc["report"]["kappa"] == pytest.approx(0.874019, rel=5e-3)
    row = read_rows(out / "kappa.csv")[0]
    assert row["verdict"] == "holds"
    assert float(row["value"]) == pytest.approx(0.874019, rel=5e-3)


def test_run_validate_engel(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, "v.json", VALIDATE), "--out", str(out)]) == 0
    doc = json.loads((out / "engel.json").read_text())
    assert doc["report"]["all_pass"] is True


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        json.dumps({"check": "nope", "group": "heisenberg1"}),
        json.dumps({"check": "kappa"}),
        json.dumps({**KAPPA, "direction": [1, 1]}),
        json.dumps({**KAPPA, "bogus": 1}),
        json.dumps({**COAREA, "phi": "x9"}),
        json.dumps({**KAPPA, "seed": -1}),
        json.dumps({"check": "density", "group": "heisenberg1", "surface": "vplane", "center": [0, 0, 0], "radii": [0.5, 1]}),
        json.dumps([1, 2]),
    ],
)
def test_malformed_input_exits_1(tmp_path, capsys, text):
    assert main(["run", write(tmp_path, "bad.json", text), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == 1


def test_precondition_exits_2(tmp_path, capsys):
    doc = {"check": "density", "group": "heisenberg1", "surface": "vplane", "center": [0.5, 0, 0]}
    assert main(["run", write(tmp_path, "p.json", doc), "--out", str(tmp_path / "o")]) == 2
    assert "OutOfAtlasError" in capsys.readouterr().err


def test_empty_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(["suite", write(tmp_path, "m.json", {"scenarios": []}), "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text() == ",".join(report.ROW_FIELDS) + "\n"


def test_duplicate_names_are_indexed(tmp_path):
    out = tmp_path / "out"
    manifest = {"scenarios": [VALIDATE, {**VALIDATE, "group": "heisenberg2"}, KAPPA]}
    assert main(["suite", write(tmp_path, "m.json", manifest), "--out", str(out)]) == 0
    rows = read_rows(out / "summary.csv")
    assert [r["name"] for r in rows] == ["engel[0]", "engel[1]", "kappa"]
    for r in rows:
        assert r["version"] == __version__
        assert all(r[k] != "" for k in ("seed", "tol_cell", "depth_cap", "tol_char"))


def test_disambiguate():
    assert disambiguate(["a", "b", "a"]) == ["a[0]", "b", "a[2]"]


def test_malformed_scenario_aborts_before_running(tmp_path):
    out = tmp_path / "out"
    manifest = {"scenarios": [KAPPA, {"check": "kappa", "group": "nowhere"}]}
    assert main(["suite", write(tmp_path, "m.json", manifest), "--out", str(out)]) == 1
    assert not out.exists()


def test_manifest_with_paths(tmp_path):
    write(tmp_path, "one.json", VALIDATE)
    out = tmp_path / "out"
    assert main(["suite", write(tmp_path, "m.json", ["one.json"]), "--out", str(out)]) == 0
    assert read_rows(out / "summary.csv")[0]["name"] == "engel"


def test_suite_is_deterministic_across_threads(tmp_path, monkeypatch):
    manifest = write(tmp_path, "m.json", {"scenarios": [KAPPA, VALIDATE, COAREA]})
    main(["suite", manifest, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("CARNOT_GMT_THREADS", "3")
    main(["suite", manifest, "--out", str(tmp_path / "b")])
    for name in ("summary.csv", "kappa.csv", "coarea.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_catalog(capsys):
    assert main(["catalog"]) == 0
    text = capsys.readouterr().out
    for word in ("heisenberg1", "engel", "vplane", "koranyi", "mu-ratio"):
        assert word in text


@pytest.mark.parametrize(
    "value, text",
    [(0.1, "0.10000000000000001"), (1.0, "1"), (float("nan"), "nan"), (3, "3"), (True, "true"), ({"b": 2.5, "a": 1}, "a=1;b=2.5")],
)
def test_number_format(value, text):
    assert report.fmt(value) == text


def test_csv_quotes_and_newlines():
    text = report.csv_text([{"name": "a,b", "lhs": 1.5}], ("name", "lhs"))
    assert text == 'name,lhs\n"a,b",1.5\n'


def test_json_is_sorted_and_plain():
    text = report.json_text({"b": np.float64(1.0), "a": [np.int64(2), float("inf")]})
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [2, "inf"], "b": 1.0}


def test_parse_rejects_bad_radii():
    with pytest.raises(MalformedInputError):
        parse_scenario({"check": "density", "group": "heisenberg1", "surface": "vplane", "center": [0, 0, 0], "radii": [-1]})


def test_profile_csv_columns(tmp_path):
    doc = {"name": "d", "check": "density", "group": "heisenberg1", "surface": "vplane", "center": [0, 0, 0], "radii": [0.5, 0.25]}
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, "d.json", doc), "--out", str(out)]) == 0
    rows = read_rows(out / "d_profile.csv")
    assert list(rows[0]) == ["t", "m", "error", "evaluations"]
    assert [float(r["t"]) for r in rows] == [0.5, 0.25]
