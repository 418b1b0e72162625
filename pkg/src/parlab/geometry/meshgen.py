"""Mesh generators.

Flat domains (disk, annulus, half-disk, half-annulus) are Delaunay
triangulations of staggered concentric point rings.  Model manifolds are meshed
on a structured (r, theta) grid whose cells are split into right triangles; the
per-triangle metric ``dr^2 + f(r)^2 dtheta^2`` is evaluated at the cell's
midpoint radius, so each cell is a metric rectangle and all stiffness couplings
are non-negative regardless of aspect ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import Delaunay

from ..errors import InvariantViolation, MeshingFailure
from .mesh import MeshManifold
from .model import ModelManifold


# ----------------------------------------------------------------------------
# flat Delaunay meshes
# ----------------------------------------------------------------------------
def _ring_points(a: float, b: float, h: float, half: bool) -> np.ndarray:
    pts = []
    n_r = max(1, int(math.ceil((b - a) / (h * math.sqrt(3.0) / 2.0))))
    radii = [a + k * (b - a) / n_r for k in range(n_r + 1)]
    for k, r in enumerate(radii):
        if r == 0.0:
            continue
        if half:
            n = max(2, int(round(math.pi * r / h)))
            th = math.pi * np.arange(n + 1) / n
        else:
            n = max(6, int(round(2.0 * math.pi * r / h)))
            th = 2.0 * math.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(np.column_stack([r * np.cos(th), r * np.sin(th)]))
    pts.append(np.zeros((1, 2)))  # centre, or hole seed when a > 0
    P = np.vstack(pts)
    if half:
        P[:, 1] = np.where(np.abs(P[:, 1]) < 1e-12 * max(b, 1.0), 0.0, P[:, 1])
    return P


def _ring_mesh(a: float, b: float, h: float, half: bool, inner_label: str = "d0") -> MeshManifold:
    if not (h > 0 and b > 0 and 0 <= a < b):
        raise MeshingFailure(f"invalid ring mesh parameters a={a}, b={b}, h={h}")
    P = _ring_points(a, b, h, half)
    centre = P.shape[0] - 1
    try:
        tri = Delaunay(P).simplices.astype(np.int64)
    except Exception as exc:  # qhull errors
        raise MeshingFailure(str(exc)) from exc
    if a > 0:
        tri = tri[~np.any(tri == centre, axis=1)]
        used = np.unique(tri)
        remap = -np.ones(P.shape[0], dtype=np.int64)
        remap[used] = np.arange(used.size)
        P, tri = P[used], remap[tri]
    # orient counter-clockwise
    d1 = P[tri[:, 1]] - P[tri[:, 0]]
    d2 = P[tri[:, 2]] - P[tri[:, 0]]
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tri[cross < 0] = tri[cross < 0][:, [0, 2, 1]]
    tri = tri[np.abs(cross) > 1e-14 * h * h]

    local = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    keys, counts = np.unique(np.sort(local, axis=1), axis=0, return_counts=True)
    bnd = keys[counts == 1]
    # keep boundary edges in triangle orientation
    directed = {tuple(sorted(e)): tuple(e) for e in local.tolist()}
    edges, labels, markers = [], [], []
    R = np.hypot(P[:, 0], P[:, 1])
    tol = 1e-9 * max(b, 1.0)
    for e in bnd.tolist():
        i, j = directed[tuple(e)]
        if half and abs(P[i, 1]) <= tol and abs(P[j, 1]) <= tol:
            lab, mk = "d1", "wall"
        elif a > 0 and abs(R[i] - a) <= tol and abs(R[j] - a) <= tol:
            lab, mk = inner_label, "inner"
        elif abs(R[i] - b) <= tol and abs(R[j] - b) <= tol:
            lab, mk = "d0", "outer"
        else:
            raise MeshingFailure(f"unclassifiable boundary edge {P[i]} - {P[j]}")
        edges.append((i, j))
        labels.append(lab)
        markers.append(mk)
    try:
        return MeshManifold(P, tri, np.array(edges), labels, markers)
    except InvariantViolation as exc:
        raise MeshingFailure(f"generated mesh is invalid: {exc}") from exc


def build_disk_mesh(radius: float, h: float) -> MeshManifold:
    return _ring_mesh(0.0, radius, h, half=False)


def build_annulus_mesh(a: float, b: float, h: float) -> MeshManifold:
    if not a > 0:
        raise MeshingFailure("annulus needs 0 < a < b")
    return _ring_mesh(a, b, h, half=False)


def build_halfdisk_mesh(radius: float, h: float) -> MeshManifold:
    return _ring_mesh(0.0, radius, h, half=True)


def build_halfannulus_mesh(a: float, b: float, h: float, inner_label: str = "d0") -> MeshManifold:
    if not a > 0:
        raise MeshingFailure("half-annulus needs 0 < a < b")
    return _ring_mesh(a, b, h, half=True, inner_label=inner_label)


@dataclass
class MeshQuality:
    n_vertices: int
    n_triangles: int
    obtuse_triangles: int
    positive_offdiagonals: int
    min_angle_deg: float


def quality_report(mesh: MeshManifold) -> MeshQuality:
    from ..fem import edge_weights  # local import: fem depends on geometry

    G = mesh.gram
    L0 = G[:, 0, 0]
    L2 = G[:, 1, 1]
    L1 = L0 + L2 - 2 * G[:, 0, 1]
    c0 = G[:, 0, 1] / np.sqrt(L0 * L2)
    c1 = (L0 - G[:, 0, 1]) / np.sqrt(L0 * L1)
    c2 = (L2 - G[:, 0, 1]) / np.sqrt(L2 * L1)
    ang = np.degrees(np.arccos(np.clip(np.stack([c0, c1, c2]), -1, 1)))
    w = edge_weights(mesh)
    return MeshQuality(
        mesh.n_vertices,
        mesh.n_triangles,
        mesh.obtuse_count(),
        int(np.sum(w < -1e-12 * np.abs(w).max())),
        float(ang.min()),
    )


# ----------------------------------------------------------------------------
# structured polar meshes on model manifolds
# ----------------------------------------------------------------------------
def model_rings(
    model: ModelManifold,
    a: float,
    b: float,
    dtheta: float,
    stops: Sequence[float] = (),
    kappa: float = 0.25,
    dr_min: Optional[float] = None,
) -> np.ndarray:
    """Ring radii from ``a`` to ``b`` with cells near-square in the model metric.

    The radial step is ``f(r) dtheta`` clipped below by ``dr_min`` and above by
    ``kappa / |f'/f|`` (bounded metric variation per cell).  Every radius in
    ``stops`` is hit exactly, so ring lists for nested exhaustions share prefixes.
    """
    if not 0 < a < b:
        raise MeshingFailure("model rings need 0 < a < b")
    if dr_min is None:
        dr_min = 0.5 * dtheta
    targets = sorted({float(s) for s in stops if a < s < b} | {float(b)})
    rings = [a]
    lo = a
    for hi in targets:
        seg = [lo]
        r = lo
        while True:
            step = model.warp(r) * dtheta
            step = min(max(step, dr_min), kappa / max(model.warp_log_derivative(r), 1e-300))
            if r + 1.5 * step >= hi:
                break
            r += step
            seg.append(r)
        seg.append(hi)
        seg = np.asarray(seg)
        # stretch so the last interval is not a sliver
        if seg.size > 2:
            seg = lo + (seg - lo) * (hi - lo) / (seg[-1] - lo)
        rings.extend(seg[1:].tolist())
        lo = hi
    return np.asarray(rings)


def build_model_mesh(
    model: ModelManifold,
    a: float,
    b: float,
    n_theta: int = 64,
    rings: Optional[np.ndarray] = None,
    inner_label: str = "d0",
) -> MeshManifold:
    """Mesh the annular region ``a <= r <= b`` of a 2-dimensional model.

    With ``sector_fraction < 1`` the two radial sides are walls (label d1,
    marker ``wall``).  Markers ``inner`` and ``outer`` name the circular sides.
    Vertices are numbered ring by ring, so meshes built from prefixes of one ring
    list are nested.
    """
    if model.dim != 2:
        raise MeshingFailure("2-D meshes need a dimension-2 model; use the radial solver otherwise")
    full = model.sector_fraction >= 1.0
    span = 2.0 * math.pi * model.sector_fraction
    n_cells = n_theta if full else max(2, int(round(n_theta * model.sector_fraction)))
    dth = span / n_cells
    if rings is None:
        rings = model_rings(model, a, b, dth)
    rings = np.asarray(rings, dtype=float)
    if rings.size < 2 or np.any(np.diff(rings) <= 0):
        raise MeshingFailure("ring radii must be strictly increasing")
    n_cols = n_cells if full else n_cells + 1
    th = dth * np.arange(n_cols)
    Rg, Tg = np.meshgrid(rings, th, indexing="ij")
    V = np.column_stack([(Rg * np.cos(Tg)).ravel(), (Rg * np.sin(Tg)).ravel()])

    def vid(k, l):
        return k * n_cols + (l % n_cols if full else l)

    tris, metric = [], []
    for k in range(rings.size - 1):
        dr = rings[k + 1] - rings[k]
        fm = model.warp(0.5 * (rings[k] + rings[k + 1]))
        D = np.diag([1.0, fm * fm])
        E1 = np.array([[dr, dr], [0.0, dth]])  # frame of (v00, v10, v11)
        E2 = np.array([[dr, 0.0], [dth, dth]])  # frame of (v00, v11, v01)
        G1, G2 = E1.T @ D @ E1, E2.T @ D @ E2
        for l in range(n_cells):
            v00, v10, v11, v01 = vid(k, l), vid(k + 1, l), vid(k + 1, l + 1), vid(k, l + 1)
            tris += [(v00, v10, v11), (v00, v11, v01)]
            metric += [G1, G2]
    edges, labels, markers = [], [], []
    last = rings.size - 1
    for l in range(n_cells):
        edges.append((vid(0, l + 1), vid(0, l)))
        labels.append(inner_label)
        markers.append("inner")
        edges.append((vid(last, l), vid(last, l + 1)))
        labels.append("d0")
        markers.append("outer")
    if not full:
        for k in range(last):
            edges.append((vid(k, 0), vid(k + 1, 0)))
            edges.append((vid(k + 1, n_cells), vid(k, n_cells)))
            labels += ["d1", "d1"]
            markers += ["wall", "wall"]
    return MeshManifold(V, np.array(tris), np.array(edges), labels, markers, np.array(metric))
