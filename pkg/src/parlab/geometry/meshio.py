"""JSON mesh files."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ..errors import InvariantViolation, IoError, ParseError
from .mesh import LABELS, MeshManifold


def mesh_to_dict(mesh: MeshManifold) -> dict:
    return {
        "dim": 2,
        "vertices": mesh.vertices.tolist(),
        "triangles": mesh.triangles.tolist(),
        "boundary_edges": [
            {"v": [int(i), int(j)], "label": lab, "marker": mk}
            for (i, j), lab, mk in zip(mesh.boundary_edges.tolist(), mesh.labels, mesh.markers)
        ],
        "metric": None if mesh.metric is None else mesh.metric.tolist(),
    }


def mesh_from_dict(doc) -> MeshManifold:
    if not isinstance(doc, dict):
        raise ParseError("mesh document must be a JSON object")
    for key in ("vertices", "triangles", "boundary_edges"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}")
    if doc.get("dim", 2) != 2:
        raise ParseError("only dim 2 meshes are supported")
    try:
        V = np.asarray(doc["vertices"], dtype=float)
        T = np.asarray(doc["triangles"])
        edges, labels, markers = [], [], []
        for e in doc["boundary_edges"]:
            edges.append([int(e["v"][0]), int(e["v"][1])])
            labels.append(str(e["label"]))
            markers.append(str(e.get("marker", e["label"])))
        metric = doc.get("metric")
        metric = None if metric is None else np.asarray(metric, dtype=float)
    except (TypeError, ValueError, KeyError, IndexError) as exc:
        raise ParseError(f"malformed mesh document: {exc}") from exc
    if T.size and (T.dtype.kind not in "iu" or T.ndim != 2 or T.shape[1] != 3):
        raise ParseError("triangles must be integer triples")
    bad = set(labels) - set(LABELS)
    if bad:
        raise InvariantViolation(f"unknown boundary label(s) {sorted(bad)}")
    if metric is not None and metric.shape != (T.shape[0], 2, 2):
        raise InvariantViolation("metric must hold one 2x2 matrix per triangle")
    return MeshManifold(V, T, np.asarray(edges, dtype=np.int64).reshape(-1, 2), labels, markers, metric)


def dumps_mesh(mesh: MeshManifold) -> str:
    return json.dumps(mesh_to_dict(mesh), allow_nan=False)


def save_mesh(mesh: MeshManifold, path) -> None:
    path = Path(path)
    text = dumps_mesh(mesh)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_mesh(path) -> MeshManifold:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return mesh_from_dict(doc)
