import json
import subprocess
import sys
import textwrap

import pytest

from lanemden.cli import DEFAULTS, Scenario, load_scenario, main
from lanemden.errors import ConfigError

BASE = """
[exponents]
N = 6
p = 1.2
[greens]
nx = 64
convergence_nx = [32, 64]
[reduced]
epsilon = [1e-3, 1e-4]
[direct]
epsilon = [0.25, 0.125, 0.0625]
n = 1024
seed_mu = 0.01
refine_tol = false
"""


@pytest.fixture(scope="module")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("cache")


def _scenario(tmp_path, text=BASE):
    p = tmp_path / "s.toml"
    p.write_text(textwrap.dedent(text))
    return p


def _run(tmp_path, command, cache_dir, text=BASE, extra=()):
    sc = _scenario(tmp_path, text)
    out = tmp_path / "out"
    code = main([command, "--scenario", str(sc), "--out", str(out), "--cache", str(cache_dir),
                 *extra])
    return code, out


def _read(out, name):
    return json.loads((out / name).read_text())


def test_scenario_defaults():
    sc = Scenario({"exponents": {"N": 6, "p": 1.2}})
    assert sc.greens["nx"] == DEFAULTS["greens"]["nx"]
    assert len(sc.direct["epsilon"]) == 24
    assert sc.direct["epsilon"][1] == 0.25


@pytest.mark.parametrize("raw,field", [
    ({"exponents": {"N": 6}}, "exponents.p"),
    ({}, "exponents"),
    ({"exponents": {"N": 6, "p": "x"}}, "exponents.p"),
    ({"exponents": {"N": 6.5, "p": 1.2}}, "exponents.N"),
    ({"exponents": {"N": 6, "p": 1.2}, "greens": {"nx": -4}}, "greens.nx"),
    ({"exponents": {"N": 6, "p": 1.2}, "greens": {"bogus": 1}}, "greens.bogus"),
    ({"exponents": {"N": 6, "p": 1.2}, "direct": {"epsilon": [0.1, 0.2]}}, "direct.epsilon"),
    ({"exponents": {"N": 6, "p": 1.2}, "domain": {"kind": "torus"}}, "domain.kind"),
    ({"exponents": {"N": 6, "p": 1.2}, "nonsense": {}}, "nonsense"),
])
def test_scenario_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError) as info:
        Scenario(raw).domain()
    assert info.value.field == field


def test_scenario_hash_stable(tmp_path):
    a = load_scenario(_scenario(tmp_path))
    b = load_scenario(_scenario(tmp_path))
    assert a.hash == b.hash
    c = Scenario({**{"exponents": {"N": 6, "p": 1.2}}, "seed": 1})
    assert c.hash != a.hash


def test_missing_p_exit_code(tmp_path, capsys):
    code, _ = _run(tmp_path, "exponents", None, "[exponents]\nN = 6\n")
    assert code == 2
    assert "exponents.p" in capsys.readouterr().err


def test_bad_toml(tmp_path):
    code, _ = _run(tmp_path, "exponents", None, "[exponents\n")
    assert code == 2


def test_n3_inadmissible(tmp_path, capsys):
    code, _ = _run(tmp_path, "exponents", None, "[exponents]\nN = 3\np = 1.5\n")
    assert code == 10
    assert "empty" in capsys.readouterr().err


def test_exponents_output(tmp_path):
    code, out = _run(tmp_path, "exponents", None)
    assert code == 0
    doc = _read(out, "exponents.json")
    assert abs(doc["hyperbola_residual"]) < 1e-14
    assert abs(doc["identity_residual"]) < 1e-12
    assert len(doc["meta"]["scenario_hash"]) == 64


def test_bubble_and_constants(tmp_path, cache_dir):
    code, out = _run(tmp_path, "bubble", cache_dir)
    assert code == 0
    doc = _read(out, "bubble.json")
    assert doc["beta"] == pytest.approx(0.7355148658, rel=1e-8)
    assert (out / "profile.csv").exists()
    code, out = _run(tmp_path, "constants", cache_dir)
    assert code == 0
    c = _read(out, "constants.json")["N=6,p=1.2"]
    assert c["A3"] > 0


def test_verify_reports_sign_failures(tmp_path, cache_dir, capsys):
    code, out = _run(tmp_path, "verify", cache_dir)
    assert code == 3
    doc = _read(out, "verify.json")
    assert sorted(doc["failed"]) == ["A1_positive", "A1_tilde_positive"]
    passed = {c["name"] for c in doc["checks"] if c["passed"]}
    assert {"lss", "orthogonality", "dilation_A2_A3", "green_symmetry",
            "scaling_round_trip"} <= passed


def test_green_validate(tmp_path, cache_dir):
    code, out = _run(tmp_path, "green-validate", cache_dir)
    assert code == 0
    doc = _read(out, "green_validate.json")
    assert doc["tau_center"]["relative_error"] < 1e-3
    assert (out / "htilde_remainder.f64").exists()


def test_reduce_ball(tmp_path, cache_dir):
    code, out = _run(tmp_path, "reduce", cache_dir)
    assert code == 0
    doc = _read(out, "reduce.json")
    assert doc["distinct"] == 1
    m = doc["minima"][0]
    assert m["interior"] and abs(m["xi"][0]) < 0.05
    assert len(doc["evaluations"][0]) == 2


def test_reduce_threads_match_serial(tmp_path, cache_dir):
    text = BASE + textwrap.dedent("""
    [domain]
    kind = "disjoint_union"
    lobes = [{radius = 1.0, center = -1.5}, {radius = 1.0, center = 1.5}]
    """)
    code, out = _run(tmp_path, "reduce", cache_dir, text)
    serial = _read(out, "reduce.json")
    code2, out2 = _run(tmp_path, "reduce", cache_dir, text, ["--threads", "2"])
    threaded = _read(out2, "reduce.json")
    assert code == code2 == 0
    assert serial["distinct"] == threaded["distinct"] == 2
    assert serial["minima"] == threaded["minima"]


def test_solve_short_branch_insufficient(tmp_path, cache_dir):
    code, out = _run(tmp_path, "solve", cache_dir)
    assert code == 41                      # three points cannot support the regression
    doc = _read(out, "solve.json")
    assert len(doc["branch"]) == 3
    assert "error" in doc["scaling"]
    assert (out / "branch.csv").read_text().startswith("epsilon,mu_num")


def test_env_variables(tmp_path, cache_dir, monkeypatch):
    sc = _scenario(tmp_path)
    monkeypatch.setenv("LANEMDEN_SCENARIO", str(sc))
    monkeypatch.setenv("LANEMDEN_OUT", str(tmp_path / "envout"))
    assert main(["exponents"]) == 0
    assert (tmp_path / "envout" / "exponents.json").exists()
    monkeypatch.setenv("LANEMDEN_THREADS", "zero")
    assert main(["exponents"]) == 2


def test_console_entry_point(tmp_path):
    sc = _scenario(tmp_path)
    r = subprocess.run([sys.executable, "-m", "lanemden.cli", "exponents", "--scenario", str(sc),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr


def test_reduce_csv(tmp_path, cache_dir):
    code, out = _run(tmp_path, "reduce", cache_dir)
    lines = (out / "reduce_minima.csv").read_text().splitlines()
    assert lines[0] == "seed,epsilon,d,xi,G0,interior"
    assert len(lines) == 3                # one minimum, two epsilon values


@pytest.mark.parametrize("command,name", [("constants", "constants.json"),
                                          ("green-validate", "green_validate.json"),
                                          ("reduce", "reduce.json")])
def test_rerun_is_byte_identical(tmp_path, cache_dir, command, name):
    _, out = _run(tmp_path, command, cache_dir)
    first = (out / name).read_bytes()
    _, out = _run(tmp_path, command, cache_dir)
    assert (out / name).read_bytes() == first
