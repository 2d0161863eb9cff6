import csv
import json
from pathlib import Path

import pytest

from superforms.cli import KINDS, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_catenoid_monotonicity(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "monotonicity-catenoid.json"), "--out", str(out)]) == 0
    table = _rows(out / "monotonicity.csv")
    ratios = [float(r["ratio"]) for r in table]
    assert len(ratios) == 12
    assert all(b >= a * (1 - 1e-3) for a, b in zip(ratios, ratios[1:]))
    assert {r["status"] for r in table} == {"pass"}


def test_sphere_tube_routes(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "tube-sphere.json"), "--out", str(out)]) == 0
    table = _rows(out / "tube.csv")
    assert list(table[0]) == ["r", "direct", "superform", "polynomial", "residual"]
    assert [float(r["r"]) for r in table] == [0.1, 0.2, 0.3]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] == 0 and summary["passed"] > 0


def test_malformed_json(tmp_path, capsys):
    path = _write(tmp_path, '{"id": "x",\n  "kind": }')
    assert main(["run", path]) == 2
    err = capsys.readouterr().err
    assert f"{path}:2:" in err


def test_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_unknown_field_rejected(tmp_path, capsys):
    path = _write(tmp_path, {"id": "x", "kind": "tube", "manifold": {"kind": "sphere"}, "radii": [0.1], "colour": 1})
    assert main(["run", path]) == 2
    assert "colour" in capsys.readouterr().err


def test_unknown_tolerance_rejected(tmp_path, capsys):
    path = _write(tmp_path, {"id": "x", "kind": "tube", "manifold": {"kind": "sphere"}, "radii": [0.1], "tolerances": {"tub": 1}})
    assert main(["run", path]) == 2
    assert "tub" in capsys.readouterr().err


def test_seed_required_for_probabilistic_kind(tmp_path, capsys):
    cfg = {"id": "alg", "kind": "algebra-suite", "checks": 700, "ibp_dims": [1], "ibp_trials": 1}
    path = _write(tmp_path, cfg)
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["run", path, "--out", str(tmp_path / "a"), "--seed", "4"]) == 0
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["seed"] == 4


def test_bad_expression_reports_column(tmp_path, capsys):
    cfg = {"id": "x", "kind": "tube", "manifold": {"kind": "sphere"}, "radii": [0.1], "closed_form": "8*pi*r +"}
    assert main(["run", _write(tmp_path, cfg)]) == 2
    assert "column" in capsys.readouterr().err


def test_focal_violation_is_a_failed_row(tmp_path):
    cfg = {"id": "x", "kind": "tube", "manifold": {"kind": "sphere", "nodes": 12}, "radii": [0.9]}
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, cfg), "--out", str(out)]) == 1
    rows = _rows(out / "report.csv")
    assert rows[-1]["status"] == "fail" and "focal" in rows[-1]["quantity"]


def test_deterministic_across_threads(tmp_path, monkeypatch):
    path = str(CONFIGS / "tube-sphere.json")
    main(["run", path, "--out", str(tmp_path / "a"), "--threads", "1"])
    monkeypatch.setenv("SUPERFORMS_THREADS", "3")
    main(["run", path, "--out", str(tmp_path / "b")])
    for name in ("report.csv", "tube.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert b"\r\n" not in a
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["threads"] == 3


def test_list_kinds(capsys):
    assert main(["run", "--list"]) == 0
    text = capsys.readouterr().out
    for kind in KINDS:
        assert kind in text


def test_every_row_has_provenance(tmp_path):
    out = tmp_path / "out"
    main(["run", str(CONFIGS / "manifold-sphere.json"), "--out", str(out)])
    rows = _rows(out / "report.csv")
    assert rows and all(r["provenance"] in {"closed-form", "theory", "oracle"} for r in rows)
    assert all(float(r["tolerance"]) > 0 for r in rows)


@pytest.mark.parametrize("config", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_pass(config, tmp_path):
    assert main(["run", str(CONFIGS / config), "--out", str(tmp_path / "out")]) == 0


def test_seed_required_for_monte_carlo_tube(tmp_path, capsys):
    circle4 = {
        "kind": "chart",
        "phi": ["cos(u1)", "sin(u1)", "0", "0"],
        "domain": {"lower": [0], "upper": [6.283185307179586], "periodic": [True]},
        "rho": ["x1^2 + x2^2 - 1", "x3", "x4"],
    }
    cfg = {"id": "c4", "kind": "tube", "manifold": circle4, "radii": [0.1], "routes": ["direct"], "closed_form": "8*pi^2/3*r^3"}
    path = _write(tmp_path, cfg)
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["run", path, "--out", str(tmp_path / "a"), "--seed", "2"]) == 0
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["seed"] == 2 and summary["skipped"] + summary["passed"] + summary["failed"] > 0
