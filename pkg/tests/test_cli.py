import json

import pytest

from pyrderham.cli import main
from pyrderham.mesh import ThpMesh, load_mesh, save_mesh
from pyrderham.refgeom import REF_VERTICES, Kind


def test_check_element(capsys):
    assert main(["check-element", "--fields", "2", "--elements", "1"]) == 0
    out = capsys.readouterr().out
    assert "12/12 passed" in out
    assert out.count("PASS") == 12


def test_demo_mesh_and_refine(tmp_path, capsys):
    demo, fine = tmp_path / "demo.json", tmp_path / "fine.json"
    assert main(["demo-mesh", "--perturb", "0.1", "--out", str(demo)]) == 0
    assert len(load_mesh(demo)) == 8
    assert main(["refine", "--mesh", str(demo), "--levels", "2", "--out", str(fine)]) == 0
    assert len(load_mesh(fine)) == 752


def test_refine_single_pyramid(tmp_path):
    src, dst = tmp_path / "pyr.json", tmp_path / "out.json"
    save_mesh(ThpMesh(REF_VERTICES[Kind.PYR], [("pyr", range(5))]), src)
    assert main(["refine", "--mesh", str(src), "--levels", "1", "--out", str(dst)]) == 0
    m = load_mesh(dst)
    assert len(m) == 12 and len(m.vertices) == 14


def test_refine_invalid_mesh(tmp_path, capsys):
    src = tmp_path / "bad.json"
    save_mesh(ThpMesh(REF_VERTICES[Kind.HEX], [("hex", (4, 5, 6, 7, 0, 1, 2, 3))]), src)
    assert main(["refine", "--mesh", str(src), "--out", str(tmp_path / "o.json")]) == 1
    assert "inverted_element" in capsys.readouterr().err


def test_missing_mesh_file(tmp_path, capsys):
    assert main(["refine", "--mesh", str(tmp_path / "none.json"), "--out", str(tmp_path / "o.json")]) == 1
    assert "error" in capsys.readouterr().err


def test_malformed_mesh_file(tmp_path):
    src = tmp_path / "m.json"
    src.write_text(json.dumps({"version": 2}))
    assert main(["refine", "--mesh", str(src), "--out", str(tmp_path / "o.json")]) == 1


def test_distortion_csv(capsys):
    assert main(["distortion", "--levels", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("level,h,max_pyr_vp")
    assert len(lines) == 4
    ratio_vp = [float(l.split(",")[8]) for l in lines[2:]]
    assert all(r == pytest.approx(0.25) for r in ratio_vp)


def test_convergence_stdout(capsys):
    assert main(["convergence", "--space", "hdiv", "--levels", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "level,h,e_l2,e_deriv,rate_l2,rate_deriv"
    assert len(lines) == 4


def test_convergence_to_file_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["convergence", "--space", "h1", "--levels", "2", "--out", str(a)]) == 0
    assert main(["convergence", "--space", "h1", "--levels", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_convergence_seed_env(monkeypatch, capsys):
    monkeypatch.setenv("PYRDERHAM_SEED", "1")
    main(["convergence", "--space", "l2", "--levels", "2"])
    one = capsys.readouterr().out
    monkeypatch.setenv("PYRDERHAM_SEED", "2")
    main(["convergence", "--space", "l2", "--levels", "2"])
    assert capsys.readouterr().out != one


def test_convergence_bad_levels(capsys):
    assert main(["convergence", "--space", "h1", "--levels", "9"]) == 1


@pytest.mark.parametrize("argv", [[], ["bogus"], ["convergence"], ["convergence", "--space", "h3"], ["refine", "--levels", "2"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
