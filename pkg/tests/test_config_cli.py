import copy
import json
import os

import numpy as np
import pytest

from qvie.cli import main
from qvie.config import ConfigError, emit, load, validate

TINY = {
    "units": "normalized",
    "dispersion": {"omega_p": 1.0, "omega_0": 1.0, "gamma": 0.4},
    "geometry": {"shape": "box", "extents": [0.4, 0.2, 0.2], "n": [2, 1, 1]},
    "sweep": {"omega_max": 8.0, "n_omega": 256, "eps_reg": 1e-4, "upsample": 8},
    "drive": [{"kind": "pulse", "m": 0, "nu": 1.0, "width": 2.0, "delay": 12.0}],
    "state": {"T0": 0.0, "photon_modes": [{"k": [0.0, 0.0, 1.3], "s_pol": 1, "b": [1.0, 0.0]}]},
    "observation": {"points": [[0.0, 0.0, 0.5], [0.7, 0.1, 0.0]], "t_max": 4.0, "n_t": 5},
}


def _write(tmp_path, doc, name="cfg.json"):
    doc = copy.deepcopy(doc)
    doc.setdefault("output", {"directory": str(tmp_path / "out")})
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_validate_and_emit_roundtrip():
    cfg = validate(copy.deepcopy(TINY))
    assert cfg.mesh.n_voxels == 2
    assert cfg.plan.upsample == 8
    doc = emit(cfg)
    assert doc["tolerances"]["noncausal"] == 1e-2
    assert doc["state"]["nu_nodes"] == 32
    again = validate(doc)
    assert emit(again) == doc


def test_all_errors_reported_with_paths():
    doc = copy.deepcopy(TINY)
    doc["dispersion"]["gamma"] = 0.0
    doc["geometry"]["colour"] = "red"
    doc["drive"][0]["k"] = [1, 0, 0]
    doc["observation"]["points"] = [[0.1, 0.0, 0.0]]
    with pytest.raises(ConfigError) as ei:
        validate(doc)
    msgs = " | ".join(ei.value.errors)
    for path in ("dispersion.gamma", "geometry.colour", "drive[0].k", "observation.points"):
        assert path in msgs


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.pop("sweep"), "sweep"),
    (lambda d: d["sweep"].update(n_omega=64), "gamma"),
    (lambda d: d["sweep"].update(upsample=1), "sweep.upsample"),
    (lambda d: d["observation"].update(t_max=80.0), "half the sweep period"),
    (lambda d: d["state"]["photon_modes"][0].update(b=[0.5, 0.0]), "must be 1"),
    (lambda d: d.update(units="imperial"), "units"),
    (lambda d: d["drive"][0].update(m=3), "drive[0].m"),
])
def test_specific_errors(mutate, path):
    doc = copy.deepcopy(TINY)
    mutate(doc)
    with pytest.raises(ConfigError) as ei:
        validate(doc)
    assert any(path in e for e in ei.value.errors), ei.value.errors


def test_cli_validate_and_mesh(tmp_path, capsys):
    p = _write(tmp_path, TINY)
    assert main(["validate", str(p)]) == 0
    assert "ok" in capsys.readouterr().out
    assert main(["mesh", str(p)]) == 0
    assert (tmp_path / "out" / "mesh_voxels.csv").exists()


def test_cli_config_errors(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", str(bad)]) == 2
    doc = copy.deepcopy(TINY)
    doc["extra"] = 1
    assert main(["validate", str(_write(tmp_path, doc, "x.json"))]) == 2
    assert "extra" in capsys.readouterr().err


def test_cli_thread_env(tmp_path, monkeypatch):
    p = _write(tmp_path, TINY)
    monkeypatch.setenv("QVIE_THREADS", "many")
    assert main(["run", str(p)]) == 2


def test_cli_run_outputs_and_determinism(tmp_path, monkeypatch):
    outs = []
    for k, threads in enumerate(("1", "2")):
        doc = copy.deepcopy(TINY)
        doc["output"] = {"directory": str(tmp_path / f"run{k}")}
        p = _write(tmp_path, doc, f"c{k}.json")
        monkeypatch.setenv("QVIE_THREADS", threads)
        assert main(["run", str(p)]) == 0
        outs.append(tmp_path / f"run{k}")
    names = sorted(os.listdir(outs[0]))
    assert "rates.csv" in names and "manifest.json" in names
    assert any(n.startswith("fields_pulse") for n in names)
    for n in names:
        if n.endswith(".csv"):
            assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n
    man = json.loads((outs[0] / "manifest.json").read_text())
    assert man["status"] == "ok"
    assert man["workers"] == 1
    # vacuum reservoir: the matter rate is exactly zero
    rates = np.loadtxt(outs[0] / "rates.csv", delimiter=",", skiprows=1)
    assert np.all(rates[:, 5] == 0.0)
    np.testing.assert_array_equal(rates[:, 6], rates[:, 4] + rates[:, 5])


def test_cli_numerical_failure(tmp_path):
    doc = copy.deepcopy(TINY)
    doc["tolerances"] = {"noncausal": 1e-14}
    p = _write(tmp_path, doc)
    assert main(["run", str(p)]) == 3
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["status"] == "failed"
    assert "non-causal" in man["error"]


def test_cli_mot_oracle(tmp_path, capsys):
    doc = copy.deepcopy(TINY)
    doc["state"] = {"T0": 0.0}
    doc["mot"] = {"t_end": 40.0}
    p = _write(tmp_path, doc)
    assert main(["run", str(p), "--oracle", "mot", "--threads", "1"]) == 0
    rep = json.loads((tmp_path / "out" / "mot_report.json").read_text())
    (label, r), = rep.items()
    assert r["relative_l2_error"] < 1e-2


def test_load_demo_config():
    here = os.path.dirname(__file__)
    cfg = load(os.path.join(here, "..", "demos", "configs", "two_voxel.json"))
    assert len(cfg.drives) == 3
