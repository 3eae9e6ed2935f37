import json

import pytest

from ldlangevin import cli
from ldlangevin.errors import NonConvergenceError

PARAMS = {"kappa": 1.0, "p": 4.0, "sigma": 1.0, "delta": 0.5}


def write(tmp_path, name, man):
    f = tmp_path / f"{name}.json"
    f.write_text(json.dumps(man))
    return str(f)


def invoke(tmp_path, sub, man, name="m", extra=()):
    out = tmp_path / f"out_{name}"
    code = cli.main([sub, "--manifest", write(tmp_path, name, man), "--out", str(out), *extra])
    return code, out


def test_stationary_run(tmp_path):
    code, out = invoke(tmp_path, "stationary", {"operation": "stationary", "params": PARAMS})
    assert code == 0
    doc = json.loads((out / "results.json").read_text())
    assert doc["results"]["moment"] == pytest.approx(0.75, rel=1e-10)
    assert doc["converged"] and doc["version"].startswith("0.1.0")
    assert doc["manifest_hash"] == cli.manifest_hash(doc["manifest"])
    assert (out / "figure.svg").exists()


def test_variational_m_zero(tmp_path):
    man = {"operation": "variational", "params": PARAMS,
           "knobs": {"x0": 0.0, "T": 2.0, "m": 0.0, "N": 32}}
    code, out = invoke(tmp_path, "variational", man)
    assert code == 0
    assert json.loads((out / "results.json").read_text())["results"]["value"] == 0.0


def test_artifacts_byte_identical(tmp_path):
    man = {"operation": "simulate", "params": PARAMS, "seed": 3,
           "knobs": {"horizon": 2.0, "dt": 0.01}}
    _, a = invoke(tmp_path, "simulate", man, "a")
    _, b = invoke(tmp_path, "simulate", man, "b")
    for f in ("results.csv", "figure.svg"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    first = (a / "results.csv").read_text().splitlines()[0]
    assert first == f"# manifest_hash={cli.manifest_hash(man)}"


def test_hash_ignores_output():
    m = {"operation": "stationary", "params": PARAMS}
    assert cli.manifest_hash(m) == cli.manifest_hash({**m, "output": "elsewhere"})
    assert cli.manifest_hash(m) != cli.manifest_hash({**m, "seed": 1})


@pytest.mark.parametrize("man", [
    {"operation": "stationary", "params": {**PARAMS, "p": 2.0}},
    {"operation": "stationary"},
    {"operation": "cycles", "params": PARAMS},
    {"operation": "stationary", "params": PARAMS, "seed": -1},
    {"operation": "variational", "params": PARAMS,
     "knobs": {"x0": 0.0, "T": 2.0, "m": 1.0, "N": 32, "variant": "box",
               "lower": -0.1, "upper": 0.1}},
])
def test_invalid_manifest_exit_2(tmp_path, man):
    code, _ = invoke(tmp_path, "stationary" if man["operation"] != "variational"
                     else "variational", man)
    assert code == 2


def test_unreadable_manifest(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["stationary", "--manifest", str(bad)]) == 2


def test_report_refuses_mixed_params(tmp_path):
    _, a = invoke(tmp_path, "stationary", {"operation": "stationary", "params": PARAMS}, "a")
    _, b = invoke(tmp_path, "stationary",
                  {"operation": "stationary", "params": {**PARAMS, "kappa": 0.5}}, "b")
    code, _ = invoke(tmp_path, "report", {"operation": "report",
                                          "knobs": {"runs": [str(a), str(b)]}}, "r")
    assert code == 2
    _, c = invoke(tmp_path, "stationary", {"operation": "stationary", "params": PARAMS,
                                           "seed": 2}, "c")
    code, out = invoke(tmp_path, "report", {"operation": "report",
                                            "knobs": {"runs": [str(a), str(c)]}}, "r2")
    assert code == 0
    rows = json.loads((out / "results.json").read_text())["results"]["runs"]
    assert [r["key"] for r in rows] == ["moment", "moment"]


def test_nonconvergence_exit_3(tmp_path, monkeypatch):
    def boom(man, knobs, threads):
        raise NonConvergenceError("no luck")
    monkeypatch.setitem(cli.RUNNERS, "stationary", boom)
    code, out = invoke(tmp_path, "stationary", {"operation": "stationary", "params": PARAMS})
    assert code == 3
    doc = json.loads((out / "results.json").read_text())
    assert not doc["converged"] and doc["results"]["error"] == "no luck"
    assert (out / "results.csv").exists()


def test_unconverged_result_exit_3(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "stationary",
                        lambda man, knobs, threads: ({"value": 1.0}, ["v"], [[1.0]], None,
                                                     False))
    code, _ = invoke(tmp_path, "stationary", {"operation": "stationary", "params": PARAMS})
    assert code == 3


def test_thread_override(tmp_path, monkeypatch):
    seen = []

    def spy(man, knobs, threads):
        seen.append(threads)
        return {"value": 0.0}, ["v"], [[0.0]], None, True
    monkeypatch.setitem(cli.RUNNERS, "stationary", spy)
    man = {"operation": "stationary", "params": PARAMS}
    monkeypatch.setenv("LDLANGEVIN_THREADS", "3")
    invoke(tmp_path, "stationary", man, "a")
    invoke(tmp_path, "stationary", man, "b", ["--threads", "2"])
    assert seen == [3, 2]


def test_csv_units_header(tmp_path):
    _, out = invoke(tmp_path, "stationary", {"operation": "stationary", "params": PARAMS})
    header = (out / "results.csv").read_text().splitlines()[1]
    assert header == "x[state],density[1/state]"
