import json

import numpy as np
import pytest

from aclab.cli import main, parse_config_text, resolve
from aclab.fields import ScalarField


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_profile_writes_table(tmp_path, capsys):
    assert run(tmp_path, "profile", "--a", "0", "--t.min", "-1", "--t.max", "1", "--t.step", "1/2") == 0
    rows = (tmp_path / "profile.csv").read_text().splitlines()
    assert rows[0] == "t,U"
    t, u = map(float, rows[-1].split(","))
    assert t == 1.0 and u == pytest.approx(np.tanh(np.sqrt(2)), abs=1e-11)
    m = manifest(tmp_path)
    assert m["status"] == "ok" and m["config"]["a"] == 0.0
    assert json.loads(capsys.readouterr().out)["samples"] > 0


def test_radial_barrier_certificate(tmp_path):
    assert run(tmp_path, "barrier", "--kind", "radial", "--R", "16") == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["status"] == "PASS"
    assert manifest(tmp_path)["config"]["h.seq"] == [1 / 16, 1 / 32, 1 / 64]


def test_failed_certificate_exits_with_numerical_code(tmp_path):
    # stencils at R/256 spacing see the tail as too coarse
    assert run(tmp_path, "barrier", "--kind", "radial", "--R", "64", "--h.seq", "1/4,1/8,1/16") == 3
    assert json.loads((tmp_path / "certificate.json").read_text())["status"] == "FAIL"
    assert manifest(tmp_path)["status"] == "failed"


@pytest.mark.parametrize(
    "args",
    [
        ("barrier", "--kind", "spherical"),
        ("profile", "--a", "not-a-number"),
        ("profile", "--t.step", "0"),
        ("acf", "--radii", "1,5", "--box.half", "2"),
    ],
)
def test_invalid_input_exits_with_code_two(tmp_path, args):
    assert run(tmp_path, *args) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# profile settings\na = 1\nt.max = 2\n")
    out = tmp_path / "o"
    assert main(["profile", "--config", str(cfg), "--t.max", "3", "--out", str(out)]) == 0
    c = manifest(out)["config"]
    assert c["a"] == 1.0 and c["t.max"] == 3.0
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["profile", "--config", str(bad), "--out", str(out)]) == 2


def test_parse_config_rejects_deep_keys():
    with pytest.raises(ValueError):
        parse_config_text("solver.newton.max = 3\n")
    with pytest.raises(ValueError):
        parse_config_text("just text\n")
    assert resolve("profile", {}, {})["a"] == 0.0


def test_seeded_runs_are_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["mm-check", "--count", "4", "--grid.h", "1/32", "--seed", "7", "--out", str(d)]) == 0
    assert (a / "mm_check.csv").read_bytes() == (b / "mm_check.csv").read_bytes()
    c = tmp_path / "c"
    assert main(["mm-check", "--count", "4", "--grid.h", "1/32", "--seed", "8", "--out", str(c)]) == 0
    assert (a / "mm_check.csv").read_bytes() != (c / "mm_check.csv").read_bytes()


def test_manifest_reruns_the_same_computation(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["barrier", "--kind", "radial", "--R", "16", "--out", str(a)]) == 0
    assert main(["barrier", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "certificate.json").read_bytes() == (b / "certificate.json").read_bytes()


def test_gamma_gaps_decrease(tmp_path):
    assert run(tmp_path, "gamma", "--limit", "half-plane", "--eps", "1/32,1/64,1/128") == 0
    g = json.loads((tmp_path / "gamma.json").read_text())
    assert g["lower_bound_ok"] and g["gap"][2] < g["gap"][1] < g["gap"][0]


def test_minimize_then_growth(tmp_path):
    m = tmp_path / "m"
    assert main(["minimize", "--dim", "2", "--box.lower", "-4", "--box.upper", "4", "--grid.h", "1/2",
                 "--boundary.a", "0.5", "--out", str(m)]) == 0
    f = ScalarField.from_csv((m / "field.csv").read_text())
    assert f.shape == (17, 17)
    g = tmp_path / "g"
    assert main(["growth", "--input", str(m / "field.csv"), "--radii", "1,2,4", "--out", str(g)]) == 0
    assert (g / "growth.csv").exists() and (g / "energy_ratio.json").exists()


def test_acf_linear_pair(tmp_path):
    assert run(tmp_path, "acf", "--pair", "linear", "--grid.h", "1/16", "--box.half", "2", "--radii", "1,1.5") == 0
    vals = json.loads((tmp_path / "manifest.json").read_text())["summary"]["values"]
    assert np.allclose(vals, np.pi**2 / 4, rtol=5e-3)
