import csv
import json

import pytest

from vortexlab.cli import EXIT_CONFIG, EXIT_OK, main
from vortexlab.fields import ModeField
from vortexlab.spectral import ESCAPING_TAG, NONESCAPING_TAG


def run(*argv):
    return main([str(a) for a in argv])


def test_phase_csv(tmp_path):
    out = tmp_path / "phase.csv"
    assert run("phase", "--N", 4, "--points", 300, "--eps-values", "0.05,0.4",
               "--eta-values", "0.5,2", "--out", out) == EXIT_OK
    text = out.read_text()
    rows = list(csv.reader(l for l in text.splitlines() if not l.startswith("#")))
    assert rows[0] == ["eps", "eta", "ell", "tag"]
    assert len(rows) == 5
    assert {r[3] for r in rows[1:]} <= {ESCAPING_TAG, NONESCAPING_TAG}
    assert text.splitlines()[-1].startswith("# config_digest=")


def test_profile_csv_reruns_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("profile", "--N", 4, "--eps", 0.1, "--points", 200, "--out", out) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0]
    assert header == "r,f,g,residual_f,residual_g"


def test_bad_dimension_and_lambda(tmp_path):
    assert run("profile", "--N", 1, "--out", tmp_path / "x.csv") == EXIT_CONFIG
    assert run("minimize", "--model", "biharmonic", "--N", 5, "--lam", 1e6, "--points", 60,
               "--out", tmp_path / "m.json") == EXIT_CONFIG


def test_unknown_flag_and_config_key(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("profile", "--bogus", 1)
    assert exc.value.code == 2
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[params]\nN = 4\nzeta = 1.0\n")
    assert run("profile", "--config", cfg, "--out", tmp_path / "x.csv") == EXIT_CONFIG


def test_flag_overrides_file(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seed = 5\n[params]\nN = 3\neps = 0.2\n[grid]\npoints = 150\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("profile", "--config", cfg, "--model", "gl", "--out", a) == EXIT_OK
    assert run("profile", "--config", cfg, "--model", "gl", "--N", 5, "--out", b) == EXIT_OK
    assert "seed=5" in a.read_text().splitlines()[-1]
    ra = [l for l in a.read_text().splitlines() if not l.startswith("#")]
    rb = [l for l in b.read_text().splitlines() if not l.startswith("#")]
    assert ra[0] == rb[0] and ra != rb


def test_forms_prop24(tmp_path):
    out = tmp_path / "forms.json"
    assert run("forms", "--check", "prop24", "--N", 5, "--samples", 5, "--points", 200,
               "--out", out) == EXIT_OK
    data = json.loads(out.read_text())
    assert "config_digest" in data and data["seed"] == 0


def test_forms_counterexample_guard(tmp_path):
    out = tmp_path / "forms.json"
    assert run("forms", "--check", "counterexample", "--N", 5, "--out", out) == EXIT_CONFIG


def test_symmetrize_round_trip(tmp_path):
    first, second = tmp_path / "s1.json", tmp_path / "s2.json"
    assert run("symmetrize", "--N", 5, "--points", 200, "--seed", 1, "--out", first) == EXIT_OK
    field = ModeField.from_json(first.read_text())
    assert field.degrees == (0,)
    again = ModeField.from_json(field.to_json())
    assert again.identical(field)
    assert run("symmetrize", "--N", 5, "--field-file", first, "--out", second) == EXIT_OK
    sym2 = ModeField.from_json(second.read_text())
    assert abs(sym2.values - field.values).max() <= 1e-10 * abs(field.values).max()


def test_minimize_history(tmp_path):
    out, hist = tmp_path / "m.json", tmp_path / "h.csv"
    assert run("minimize", "--N", 4, "--eps", 0.1, "--eta", 1.0, "--points", 90, "--kmax", 2,
               "--out", out, "--history", hist) == EXIT_OK
    res = json.loads(out.read_text())["result"]
    assert res["radial"] and res["converged"]
    lines = hist.read_text().splitlines()
    assert lines[0] == "iter,energy,grad_norm,nonradial_mass"
    energies = [float(l.split(",")[1]) for l in lines[1:] if not l.startswith("#")]
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(energies, energies[1:]))


def test_minimize_biharmonic(tmp_path):
    out = tmp_path / "b.json"
    assert run("minimize", "--model", "biharmonic", "--N", 5, "--points", 90,
               "--out", out) == EXIT_OK
    info = json.loads(out.read_text())["result"]["info"]
    assert info["sign_definite"] and info["monotone"]


def test_missing_init_file(tmp_path):
    assert run("minimize", "--init-file", tmp_path / "nope.json",
               "--out", tmp_path / "m.json") == EXIT_CONFIG


def test_schema_lists_every_option(capsys):
    assert run("schema") == EXIT_OK
    keys = json.loads(capsys.readouterr().out)
    text = json.dumps(keys)
    for flag in ("--eps", "--eta", "--points", "--seed", "--model"):
        assert flag in text
