import json

import numpy as np
import pytest

from rdnet import formats, mesh
from rdnet.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, cli
from rdnet.errors import NonManifold, NotDetailedBalanced, ParseError, ValidationError
from rdnet.integrate import IntegratorConfig, integrate

from conftest import random_balanced_network

AB = {
    "species": [{"name": "A", "diffusion": 1.0}, {"name": "B", "diffusion": 1.0}],
    "complexes": [{"id": "C1", "species": {"A": 1}}, {"id": "C2", "species": {"B": 1}}],
    "reactions": [{"source": "C1", "product": "C2", "k_fwd": 2.0, "k_bwd": 1.0}],
    "x_star": [1.0, 2.0],
}


def cycle(k_bwd_last=1.0):
    # A -> B -> C -> A; detailed balance needs prod k_fwd == prod k_bwd
    cx = [{"id": s, "species": {s: 1}} for s in "ABC"]
    rx = [{"source": a, "product": b, "k_fwd": 1.0, "k_bwd": 1.0} for a, b in ("AB", "BC", "CA")]
    rx[-1]["k_bwd"] = k_bwd_last
    return {"species": [{"name": s, "diffusion": 1.0} for s in "ABC"], "complexes": cx, "reactions": rx}


def dump(path, obj):
    path.write_text(json.dumps(obj, indent=2))
    return str(path)


@pytest.fixture
def files(tmp_path):
    return {
        "ab": dump(tmp_path / "ab.json", AB),
        "fig1": dump(tmp_path / "fig1.json", {"generator": "fig1"}),
        "right": dump(tmp_path / "right.json",
                      {"dimension": 2, "vertices": [[0, 0], [1, 0], [0, 1]], "cells": [[0, 1, 2]]}),
        "cycle_bad": dump(tmp_path / "cycle_bad.json", cycle(2.0)),
        "cycle_ok": dump(tmp_path / "cycle_ok.json", cycle(1.0)),
        "dir": tmp_path,
    }


def test_network_roundtrip(tmp_path, rng):
    for _ in range(20):
        net, x_star = random_balanced_network(rng)
        p = tmp_path / "net.json"
        formats.write_network(net, p, x_star)
        back, xs = formats.parse_network(p)
        assert np.array_equal(back.Z, net.Z) and np.array_equal(back.B, net.B)
        assert back.k_fwd.tobytes() == net.k_fwd.tobytes()
        assert back.k_bwd.tobytes() == net.k_bwd.tobytes()
        assert back.diffusion.tobytes() == net.diffusion.tobytes()
        assert xs.tobytes() == x_star.tobytes()
        assert formats.network_hash(back) == formats.network_hash(net)


def test_mesh_roundtrip(tmp_path):
    for K in (mesh.fig1(), mesh.interval(7, 2.0), mesh.equilateral_strip(2, 3)):
        p = tmp_path / "m.json"
        formats.write_mesh(K, p)
        back = formats.parse_mesh(p)
        assert back.vertices.tobytes() == K.vertices.tobytes()
        assert np.array_equal(back.cells, K.cells)
        assert formats.mesh_hash(back) == formats.mesh_hash(K)


def test_mesh_generators():
    assert formats.mesh_from_dict({"generator": "interval", "n_vertices": 5}).n_vertices == 5
    assert formats.mesh_from_dict({"generator": "equilateral_strip", "rows": 1, "cols": 2}).n_vertices == 4
    with pytest.raises(ValidationError, match="unknown generator"):
        formats.mesh_from_dict({"generator": "torus"})


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_trajectory_export_deterministic(fig1_sys, tmp_path, fmt):
    X0 = np.linspace(0.5, 7.0, 8)
    tr = integrate(fig1_sys, X0, IntegratorConfig(t_end=1.0))
    a, b = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
    formats.export_trajectory(tr, fmt, a, {"seed": 1})
    formats.export_trajectory(integrate(fig1_sys, X0, IntegratorConfig(t_end=1.0)), fmt, b, {"seed": 1})
    assert a.read_bytes() == b.read_bytes()


def test_trajectory_json_roundtrip(fig1_sys, tmp_path, rng):
    tr = integrate(fig1_sys, rng.uniform(0.1, 10, 8), IntegratorConfig(t_end=1.0))
    p = tmp_path / "t.json"
    formats.export_trajectory(tr, "json", p)
    back = formats.read_trajectory(p)
    assert back.states.tobytes() == tr.states.tobytes()
    assert back.times.tobytes() == tr.times.tobytes()
    assert back.energy.tobytes() == tr.energy.tobytes()
    assert back.layout == tr.layout


def test_trajectory_csv_columns(fig1_sys, tmp_path):
    tr = integrate(fig1_sys, np.linspace(0.5, 7.0, 8), IntegratorConfig(t_end=0.5))
    p = tmp_path / "t.csv"
    formats.export_trajectory(tr, "csv", p)
    lines = p.read_text().splitlines()
    assert lines[0].split(",")[:4] == ["t", "x1_A", "x1_B", "x2_A"]
    assert lines[0].endswith("G_d,disagreement_max,min_concentration")
    assert len(lines) == len(tr) + 1
    last = np.array(lines[-1].split(","), dtype=float)
    assert last[1:9].tobytes() == tr.states[-1].tobytes()
    with pytest.raises(ValidationError):
        formats.export_trajectory(tr, "xml", p)


def test_malformed_coefficient_names_field():
    bad = json.loads(json.dumps(AB))
    bad["complexes"][0]["species"]["A"] = -1
    with pytest.raises(ValidationError, match=r"complexes\[0\]\.species\.A"):
        formats.network_from_dict(bad)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d["reactions"][0].update(k_fwd=0.0), r"reactions\[0\]\.k_fwd"),
    (lambda d: d["reactions"][0].update(source="C9"), r"reactions\[0\]\.source"),
    (lambda d: d["species"][1].update(name="A"), r"species\[1\]\.name"),
    (lambda d: d["species"][0].update(diffusion=-1.0), r"species\[0\]\.diffusion"),
    (lambda d: d.update(x_star=[1.0]), "x_star"),
    (lambda d: d.pop("reactions"), "reactions"),
])
def test_network_validation_messages(mutate, match):
    d = json.loads(json.dumps(AB))
    mutate(d)
    with pytest.raises(ValidationError, match=match):
        formats.network_from_dict(d)


def test_parse_error_location(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "species": [\n    {"name": "A",,}\n  ]\n}\n')
    with pytest.raises(ParseError) as info:
        formats.parse_network(p)
    assert info.value.line == 3
    with pytest.raises(ParseError):
        formats.parse_network(tmp_path / "missing.json")


def test_mesh_file_errors(tmp_path):
    pinch = {"dimension": 2, "vertices": [[0, 0], [1, 0], [0.5, 0.8], [2, 0], [1.5, 0.8]],
             "cells": [[0, 1, 2], [1, 3, 4], [0, 1, 2]]}
    with pytest.raises(ValidationError):
        formats.mesh_from_dict(pinch)
    bowtie = {"dimension": 1, "vertices": [0, 1, 2, 3], "cells": [[0, 1], [1, 2], [1, 3]]}
    with pytest.raises(NonManifold):
        formats.mesh_from_dict(bowtie)
    with pytest.raises(ValidationError, match=r"vertices\[0\]"):
        formats.mesh_from_dict({"dimension": 2, "vertices": [[0]], "cells": []})


def test_cli_validate(files, capsys):
    assert cli(["validate", files["ab"], "--mesh", files["fig1"]]) == EXIT_OK
    out = capsys.readouterr().out
    assert "well-centered" in out
    assert cli(["validate", files["cycle_ok"]]) == EXIT_OK
    assert cli(["validate", files["cycle_bad"]]) == EXIT_VALIDATION
    assert NotDetailedBalanced.__name__ in capsys.readouterr().err


def test_cli_mesh_info(files, capsys):
    assert cli(["mesh-info", files["fig1"]]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["N"] == 4 and info["N_e"] == 5 and info["well_centered"]
    assert cli(["mesh-info", files["right"]]) == EXIT_VALIDATION
    assert "NotWellCentered" in capsys.readouterr().err


def test_cli_equilibrium(files, tmp_path):
    out = tmp_path / "eq.json"
    assert cli(["equilibrium", files["ab"], "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["x_star"] == [1.0, 2.0]
    assert data["kappa"] == [2.0]
    assert data["moieties"] == [[1, 1]]


def test_cli_simulate_and_analyze(files, tmp_path, capsys):
    out = tmp_path / "traj.csv"
    args = ["simulate", files["ab"], files["fig1"], "--t-end", "30", "--seed", "3", "--out", str(out)]
    assert cli(args) == EXIT_OK
    assert "CONSENSUS" in capsys.readouterr().out
    first = out.read_bytes()
    assert cli(args) == EXIT_OK
    assert out.read_bytes() == first
    capsys.readouterr()
    rep = tmp_path / "rep.json"
    assert cli(["analyze", files["ab"], files["fig1"], "--seed", "3", "--out", str(rep)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("CONSENSUS")
    assert json.loads(rep.read_text())["prediction_error"] < 1e-5


def test_cli_open_model(files, tmp_path, capsys):
    sched = dump(tmp_path / "s.json", {"times": [0.0, 1.0], "flux": [[0.0] * 8, [0.5] * 8]})
    out = tmp_path / "open.json"
    assert cli(["simulate", files["ab"], files["fig1"], "--t-end", "2", "--x0", "[1.0, 2.0]",
                "--boundary-schedule", sched, "--out", str(out)]) == EXIT_OK
    tr = formats.read_trajectory(out)
    assert tr.times[-1] == 2.0
    assert json.loads(out.read_text())["metadata"]["model"] == "open"


def test_cli_analyze_zero_diffusion(files, tmp_path, capsys):
    d = json.loads(json.dumps(AB))
    for s in d["species"]:
        s["diffusion"] = 0.0
    net = dump(tmp_path / "nodiff.json", d)
    assert cli(["analyze", net, files["fig1"], "--t-end", "40"]) == 2
    assert "NONUNIFORM_STEADY" in capsys.readouterr().err


def test_cli_missing_file(files):
    assert cli(["validate", str(files["dir"] / "nope.json")]) == EXIT_IO
