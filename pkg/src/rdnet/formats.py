"""JSON file formats for networks, meshes, schedules and trajectories.

Network file::

    {
      "species": [{"name": "A", "diffusion": 1.0}, {"name": "B", "diffusion": 1.0}],
      "complexes": [{"id": "C1", "species": {"A": 1}}, {"id": "C2", "species": {"B": 1}}],
      "reactions": [{"source": "C1", "product": "C2", "k_fwd": 2.0, "k_bwd": 1.0}],
      "x_star": [1.0, 2.0]
    }

Mesh file: ``{"dimension": 2, "vertices": [[x, y], ...], "cells": [[i, j, k], ...]}``
or a generator directive such as ``{"generator": "fig1"}``,
``{"generator": "interval", "n_vertices": 17, "length": 1.0}`` or
``{"generator": "equilateral_strip", "rows": 2, "cols": 4, "side": 1.0}``.

Boundary schedule: ``{"times": [t0, ...], "flux": [[...], ...]}`` with one
row of ``m * N_b`` fluxes per knot, linearly interpolated.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from . import mesh as meshmod
from .analysis import PiecewiseLinearSchedule
from .compartmental import StateLayout
from .crn import ReactionNetwork
from .errors import ParseError, ValidationError
from .integrate import Trajectory


def _load_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror or exc}", path) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from exc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _field(d, key, where, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise ValidationError(f"{where}: missing field {key!r}")
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise ValidationError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return v


def _number(v, where, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{where}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ValidationError(f"{where}: must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ValidationError(f"{where}: must be nonnegative, got {v!r}")
    return float(v)


# -- networks -------------------------------------------------------------------


def network_from_dict(data):
    """Validate a network document; returns ``(network, x_star or None)``."""
    if not isinstance(data, dict):
        raise ValidationError("network document must be a JSON object")
    species = _field(data, "species", "network", list)
    names, diff = [], []
    for i, s in enumerate(species):
        where = f"species[{i}]"
        name = _field(s, "name", where, str)
        if name in names:
            raise ValidationError(f"{where}.name: duplicate species {name!r}")
        names.append(name)
        diff.append(_number(s.get("diffusion", 0.0), f"{where}.diffusion", nonneg=True))
    complexes = _field(data, "complexes", "network", list)
    ids, cols = [], []
    for k, c in enumerate(complexes):
        where = f"complexes[{k}]"
        cid = _field(c, "id", where, str)
        if cid in ids:
            raise ValidationError(f"{where}.id: duplicate complex id {cid!r}")
        comp = _field(c, "species", where, dict)
        col = [0] * len(names)
        for s, coef in comp.items():
            if s not in names:
                raise ValidationError(f"{where}.species.{s}: unknown species")
            if isinstance(coef, bool) or not isinstance(coef, int) or coef < 0:
                raise ValidationError(
                    f"{where}.species.{s}: coefficient must be a nonnegative integer, got {coef!r}"
                )
            col[names.index(s)] = coef
        if not any(col):
            raise ValidationError(f"{where}: the empty complex is not supported")
        ids.append(cid)
        cols.append(col)
    reactions = _field(data, "reactions", "network", list)
    B = np.zeros((len(ids), len(reactions)), dtype=np.int64)
    kf, kb = [], []
    for j, r in enumerate(reactions):
        where = f"reactions[{j}]"
        src = _field(r, "source", where, str)
        prod = _field(r, "product", where, str)
        for key, cid in (("source", src), ("product", prod)):
            if cid not in ids:
                raise ValidationError(f"{where}.{key}: unknown complex {cid!r}")
        if src == prod:
            raise ValidationError(f"{where}: source and product complex coincide")
        B[ids.index(src), j] = -1
        B[ids.index(prod), j] = 1
        kf.append(_number(_field(r, "k_fwd", where), f"{where}.k_fwd", positive=True))
        kb.append(_number(_field(r, "k_bwd", where), f"{where}.k_bwd", positive=True))
    Z = np.array(cols, dtype=np.int64).T.reshape(len(names), len(ids))
    net = ReactionNetwork(tuple(names), Z, B, kf, kb, diff, complex_names=tuple(ids))
    x_star = data.get("x_star")
    if x_star is not None:
        if not isinstance(x_star, list) or len(x_star) != len(names):
            raise ValidationError(f"x_star: expected a list of {len(names)} numbers")
        x_star = np.array([_number(v, f"x_star[{i}]", positive=True) for i, v in enumerate(x_star)])
    return net, x_star


def network_to_dict(net: ReactionNetwork, x_star=None):
    out = {
        "species": [
            {"name": n, "diffusion": float(d)} for n, d in zip(net.species_names, net.diffusion)
        ],
        "complexes": [
            {
                "id": cid,
                "species": {
                    net.species_names[i]: int(net.Z[i, k])
                    for i in range(net.n_species)
                    if net.Z[i, k]
                },
            }
            for k, cid in enumerate(net.complex_names)
        ],
        "reactions": [
            {
                "source": net.complex_names[int(net.source[j])],
                "product": net.complex_names[int(net.product[j])],
                "k_fwd": float(net.k_fwd[j]),
                "k_bwd": float(net.k_bwd[j]),
            }
            for j in range(net.n_reactions)
        ],
    }
    if x_star is not None:
        out["x_star"] = [float(v) for v in x_star]
    return out


def parse_network(path):
    """Read a network file; returns ``(network, x_star or None)``."""
    try:
        return network_from_dict(_load_json(path))
    except ValidationError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def write_network(net, path, x_star=None):
    Path(path).write_text(json.dumps(network_to_dict(net, x_star), indent=2) + "\n")


def network_hash(net: ReactionNetwork) -> str:
    return content_hash(network_to_dict(net))


# -- meshes ---------------------------------------------------------------------


def mesh_from_dict(data):
    if not isinstance(data, dict):
        raise ValidationError("mesh document must be a JSON object")
    if "generator" in data:
        gen = data["generator"]
        if gen == "fig1":
            return meshmod.fig1(_number(data.get("side", 1.0), "side", positive=True))
        if gen == "interval":
            n = _field(data, "n_vertices", "mesh", int)
            return meshmod.interval(n, _number(data.get("length", 1.0), "length", positive=True))
        if gen == "equilateral_strip":
            return meshmod.equilateral_strip(
                _field(data, "rows", "mesh", int),
                _field(data, "cols", "mesh", int),
                _number(data.get("side", 1.0), "side", positive=True),
            )
        raise ValidationError(f"generator: unknown generator {gen!r}")
    dim = _field(data, "dimension", "mesh", int)
    if dim not in (1, 2):
        raise ValidationError(f"dimension: only 1 and 2 are supported, got {dim}")
    verts = _field(data, "vertices", "mesh", list)
    cells = _field(data, "cells", "mesh", list)
    V = []
    for i, row in enumerate(verts):
        row = row if isinstance(row, list) else [row]
        if len(row) != dim:
            raise ValidationError(f"vertices[{i}]: expected {dim} coordinates")
        V.append([_number(v, f"vertices[{i}]") for v in row])
    for k, cell in enumerate(cells):
        if not isinstance(cell, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in cell
        ):
            raise ValidationError(f"cells[{k}]: expected a list of vertex indices")
    return meshmod.build_complex(np.array(V, dtype=float).reshape(len(V), dim), cells)


def mesh_to_dict(K):
    return {
        "dimension": int(K.dimension),
        "vertices": K.vertices.tolist(),
        "cells": K.cells.tolist(),
    }


def parse_mesh(path):
    try:
        return mesh_from_dict(_load_json(path))
    except ValidationError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def write_mesh(K, path):
    Path(path).write_text(json.dumps(mesh_to_dict(K), indent=2) + "\n")


def mesh_hash(K) -> str:
    return content_hash(mesh_to_dict(K))


def parse_schedule(path):
    data = _load_json(path)
    times = _field(data, "times", "schedule", list)
    flux = _field(data, "flux", "schedule", list)
    return PiecewiseLinearSchedule(times, flux)


# -- trajectories ------------------------------------------------------------------


def _column_names(layout: StateLayout):
    names = layout.species_names or tuple(str(i) for i in range(layout.n_species))
    return [f"x{j + 1}_{s}" for j in range(layout.n_compartments) for s in names]


def trajectory_to_dict(traj: Trajectory, metadata=None):
    return {
        "metadata": dict(metadata or {}),
        "layout": {
            "n_compartments": traj.layout.n_compartments,
            "n_species": traj.layout.n_species,
            "species_names": list(traj.layout.species_names),
            "order": "compartment-major",
        },
        "termination": traj.termination,
        "config": traj.config,
        "n_rejected": traj.n_rejected,
        "n_positivity_rejections": traj.n_positivity_rejections,
        "times": traj.times.tolist(),
        "states": traj.states.tolist(),
        "energy": traj.energy.tolist(),
        "disagreement": traj.disagreement.tolist(),
        "min_concentration": traj.min_concentration.tolist(),
        "rate": traj.rate.tolist(),
    }


def trajectory_from_dict(data) -> Trajectory:
    lay = data["layout"]
    layout = StateLayout(lay["n_compartments"], lay["n_species"], tuple(lay["species_names"]))
    n = layout.size
    return Trajectory(
        times=np.array(data["times"], dtype=float),
        states=np.array(data["states"], dtype=float).reshape(-1, n),
        energy=np.array(data["energy"], dtype=float),
        disagreement=np.array(data["disagreement"], dtype=float),
        min_concentration=np.array(data["min_concentration"], dtype=float),
        rate=np.array(data["rate"], dtype=float),
        termination=data["termination"],
        layout=layout,
        config=data.get("config", {}),
        n_rejected=data.get("n_rejected", 0),
        n_positivity_rejections=data.get("n_positivity_rejections", 0),
    )


def export_trajectory(traj: Trajectory, fmt: str, path, metadata=None):
    """Write a trajectory as CSV or JSON; output is byte-deterministic."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(trajectory_to_dict(traj, metadata), sort_keys=True, indent=1) + "\n")
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *_column_names(traj.layout), "G_d", "disagreement_max", "min_concentration"])
        for i in range(len(traj)):
            row = [traj.times[i], *traj.states[i], traj.energy[i], traj.disagreement[i],
                   traj.min_concentration[i]]
            w.writerow([repr(float(v)) for v in row])
        path.write_text(buf.getvalue())
    else:
        raise ValidationError(f"unknown trajectory format {fmt!r}; use 'csv' or 'json'")


def read_trajectory(path) -> Trajectory:
    return trajectory_from_dict(_load_json(path))
