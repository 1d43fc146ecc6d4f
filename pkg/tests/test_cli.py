import hashlib
import json
import subprocess
import sys

import pytest

from newtonmating import cli, render


def run(capsys, *argv):
    code = cli.main(["-q", *argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_malformed_config_exits_two(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("suite = symbolic\nthis line has no equals sign\n")
    code, _, err = run(capsys, "verify", "--config", str(cfg))
    assert code == 2
    assert "config error" in err and "line 2" in err


def test_unknown_key_and_bad_type(tmp_path, capsys):
    for text in ("depht = 12\n", "samples = many\n", "t = two thirds\n"):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(text)
        assert run(capsys, "verify", "--config", str(cfg))[0] == 2


def test_missing_config_file(tmp_path, capsys):
    assert run(capsys, "verify", "--config", str(tmp_path / "none.cfg"))[0] == 2


def test_parse_config_comments_and_defaults():
    cfg = cli.parse_config("# comment\nseed = 4  # trailing\n\nsuite = mating\n")
    assert cfg["seed"] == 4 and cfg["suite"] == "mating" and cfg["depth"] == 12


def test_symbolic_suite_passes_and_is_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "sym.cfg"
    cfg.write_text("suite = symbolic\nseed = 1\n")
    outs = []
    for name in ("a.json", "b.json"):
        code, _, _ = run(capsys, "verify", "--config", str(cfg), "--out", str(tmp_path / name))
        assert code == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert rep["passed"] and rep["failed"] == []
    assert {c["name"] for c in rep["checks"]} == {
        "roundtrip", "shift_equivariance", "triadic_class_size", "cusp_angles"}
    assert set(rep["tolerances"]) >= {"tau_graph", "landing_tol"}
    assert rep["versions"]["numpy"]


def test_runs_log_versions_and_tolerances(caplog, capsys):
    with caplog.at_level("INFO", logger="newtonmating"):
        assert cli.main(["itinerary", "--angle", "1/3"]) == 0
    text = caplog.text
    assert "versions" in text and "tolerances" in text and "tau_graph" in text


def test_itinerary_json(capsys):
    code, out, _ = run(capsys, "itinerary", "--angle", "2/3", "--angle", "1/2")
    assert code == 0
    rows = json.loads(out)
    assert rows[0] == {"angle": "2/3", "triadic": True,
                       "class": {"words": ["1|2", "2|0"], "angle": "2/3"}}
    assert rows[1]["class"]["words"] == ["|1"] and not rows[1]["triadic"]


def test_itinerary_dbas_convention(capsys):
    _, out, _ = run(capsys, "itinerary", "--angle", "1/3", "--convention", "dbas")
    assert json.loads(out)[0]["class"]["angle"] == "2/3"


def test_itinerary_of_point_on_dbas_graph(capsys):
    code, out, _ = run(capsys, "itinerary", "--family", "dbas", "--point", "0,0", "--depth", "4")
    assert code == 0
    assert set(json.loads(out)["words"]) >= {"11111"}


def test_trace_ray(capsys):
    _, out, _ = run(capsys, "trace-ray", "--family", "dbas", "--angle", "1/2")
    ray = json.loads(out)[0]
    assert ray["status"] == "landed" and abs(ray["landing"][0]) < 1e-6


def test_trace_ray_rejects_external_newton(capsys):
    with pytest.raises(SystemExit):
        run(capsys, "trace-ray", "--param", "0,0.3", "--angle", "0")


def test_graph_json_has_junctions(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert run(capsys, "graph", "--family", "dbas", "--out", str(out))[0] == 0
    g = json.loads(out.read_text())
    assert len(g["arcs"]) == 7 and g["junctions"]


def test_centers_csv(capsys):
    code, out, _ = run(capsys, "centers", "--max-den", "3", "--csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# cusps" and lines[1].startswith("t,k,")
    assert any(line.startswith("2/3,1,2,1.00173972706") for line in lines)


def test_correspond_center(capsys):
    code, out, _ = run(capsys, "correspond", "--kind", "center", "--angle", "2/3")
    assert code == 0
    d = json.loads(out)
    assert d["newton"]["value"][1] == pytest.approx(0.33332128724197535, abs=1e-12)


def test_correspond_excluded_copy_fails(capsys):
    code, _, _ = run(capsys, "correspond", "--kind", "point", "--param=0,-1.3333333333333333",
                     "--angle", "0", "--region", "dH0")
    assert code == 1


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_render_julia_is_deterministic(tmp_path, capsys):
    paths = [tmp_path / "a.ppm", tmp_path / "b.ppm"]
    for p in paths:
        code, _, _ = run(capsys, "render-julia", "--family", "dbas", "--size", "64x48",
                         "--overlay", "rays", "--angle", "1/3", "--out", str(p))
        assert code == 0
    assert _digest(paths[0]) == _digest(paths[1])
    assert paths[0].read_bytes().startswith(b"P6\n64 48\n255\n")
    side = json.loads((tmp_path / "a.ppm.json").read_text())
    assert side["spec"]["resolution"] == [64, 48] and side["warnings"] == []


def test_render_param_writes_ppm(tmp_path, capsys):
    p = tmp_path / "p.ppm"
    code, _, _ = run(capsys, "render-param", "--family", "newton", "--size", "24",
                     "--center=-0.3,0.4", "--width", "1.2", "--out", str(p))
    assert code == 0
    data = p.read_bytes()
    assert data.startswith(b"P6\n24 24\n255\n") and len(data) == 13 + 24 * 24 * 3


def test_render_spec_validation():
    with pytest.raises(ValueError):
        render.RenderSpec(resolution=(0, 10))
    with pytest.raises(ValueError):
        render.RenderSpec(coloring="rainbow")


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "newtonmating", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip()
