"""Distance fields from a vertex and the ball-growth data derived from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from ..errors import DisconnectedMesh, PreconditionViolated, RadiusOutOfRange
from .mesh import REF_CORNERS, MeshManifold, ScalarField

# reference coordinates of the 3 corners followed by the 3 edge midpoints
_NODES = np.vstack([REF_CORNERS, [[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]])
_PAIRS = np.array([(i, j) for i in range(6) for j in range(i + 1, 6)])


def is_star_shaped(mesh: MeshManifold, o: int, eps: float = 1e-12) -> bool:
    """Kernel test: o must lie on the inner side of every boundary edge's line."""
    if not mesh.is_flat:
        return False
    V = mesh.vertices
    third = {}
    for t in mesh.triangles.tolist():
        for k in range(3):
            a, b = t[k], t[(k + 1) % 3]
            third[(min(a, b), max(a, b))] = t[(k + 2) % 3]
    p = V[o]
    scale = float(np.ptp(V, axis=0).max())
    for a, b in mesh.boundary_edges.tolist():
        c = third[(min(a, b), max(a, b))]
        e = V[b] - V[a]
        side_c = e[0] * (V[c, 1] - V[a, 1]) - e[1] * (V[c, 0] - V[a, 0])
        side_o = e[0] * (p[1] - V[a, 1]) - e[1] * (p[0] - V[a, 0])
        if side_o * np.sign(side_c) < -eps * scale * np.hypot(*e):
            return False
    return True


def _steiner_dijkstra(mesh: MeshManifold, o: int) -> np.ndarray:
    n, E = mesh.n_vertices, mesh.edges.shape[0]
    T = mesh.triangles
    # global ids: vertices, then one node per undirected edge (its midpoint)
    mid = n + mesh.tri_edges[:, [0, 1, 2]]
    ids = np.hstack([T, mid])
    G = mesh.gram
    d = _NODES[_PAIRS[:, 1]] - _NODES[_PAIRS[:, 0]]
    w = np.sqrt(np.einsum("pi,tij,pj->tp", d, G, d))
    rows = ids[:, _PAIRS[:, 0]].ravel()
    cols = ids[:, _PAIRS[:, 1]].ravel()
    w = w.ravel()
    # keep the shortest copy of every duplicated graph edge
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    keep = np.ones(lo.size, dtype=bool)
    keep[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    N = n + E
    A = coo_matrix((w[keep], (lo[keep], hi[keep])), shape=(N, N)).tocsr()
    dist = dijkstra(A, directed=False, indices=o)
    return dist[:n]


def distance_field(mesh: MeshManifold, o: int, mode: str = "auto") -> ScalarField:
    """Approximate geodesic distance to vertex ``o``.

    ``exact`` uses the Euclidean distance and requires a flat mesh star-shaped
    about ``o``; ``dijkstra`` runs over the one-ring graph with edge-midpoint
    Steiner nodes; ``auto`` picks exact when it is valid.
    """
    if not 0 <= o < mesh.n_vertices:
        raise PreconditionViolated(f"vertex {o} out of range")
    if mode not in ("auto", "exact", "dijkstra"):
        raise ValueError(f"unknown distance mode {mode!r}")
    if mode != "dijkstra":
        star = is_star_shaped(mesh, o)
        if star:
            d = np.linalg.norm(mesh.vertices - mesh.vertices[o], axis=1)
            return ScalarField(mesh, d)
        if mode == "exact":
            raise PreconditionViolated("exact distance needs a flat mesh star-shaped about the centre")
    d = _steiner_dijkstra(mesh, o)
    if not np.all(np.isfinite(d)):
        raise DisconnectedMesh(f"{int(np.sum(~np.isfinite(d)))} vertices unreachable from vertex {o}")
    return ScalarField(mesh, d)


@dataclass(frozen=True)
class BallGrowthTable:
    center: int
    radii: np.ndarray
    volumes: np.ndarray
    areas: np.ndarray

    @property
    def rows(self):
        return list(zip(self.radii.tolist(), self.volumes.tolist(), self.areas.tolist()))

    def coarea_error(self) -> float:
        """Worst relative mismatch between vol(R_k) - vol(R_0) and the trapezoid of Area."""
        if self.radii.size < 2:
            return 0.0
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (self.areas[1:] + self.areas[:-1]) * np.diff(self.radii))])
        dv = self.volumes - self.volumes[0]
        scale = np.maximum(np.abs(dv), 1e-300)
        return float(np.max(np.abs(dv[1:] - integral[1:]) / scale[1:]))


def clip_sublevel(mesh: MeshManifold, d: np.ndarray, R: float):
    """Per-triangle measure of {d < R} and length of {d = R} for a P1 field."""
    T = mesh.triangles
    dv = d[T]
    order = np.argsort(dv, axis=1, kind="stable")
    ds = np.take_along_axis(dv, order, axis=1)
    P = _NODES[:3][order]  # (T, 3, 2) reference corners sorted by value
    d0, d1, d2 = ds[:, 0], ds[:, 1], ds[:, 2]
    full = mesh.areas
    G = mesh.gram
    vol = np.zeros(T.shape[0])
    length = np.zeros(T.shape[0])

    def seg(a, b):
        s = b - a
        return np.sqrt(np.einsum("ti,tij,tj->t", s, G[m], s))

    def frac(num, den):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)

    vol[R >= d2] = full[R >= d2]
    m = (d0 < R) & (R <= d1)
    if m.any():
        t01 = frac(R - d0[m], d1[m] - d0[m])
        t02 = frac(R - d0[m], d2[m] - d0[m])
        vol[m] = full[m] * t01 * t02
        p0, p1, p2 = P[m, 0], P[m, 1], P[m, 2]
        length[m] = seg(p0 + t01[:, None] * (p1 - p0), p0 + t02[:, None] * (p2 - p0))
    m = (d1 < R) & (R < d2)
    if m.any():
        s12 = frac(d2[m] - R, d2[m] - d1[m])
        s02 = frac(d2[m] - R, d2[m] - d0[m])
        vol[m] = full[m] * (1.0 - s12 * s02)
        p0, p1, p2 = P[m, 0], P[m, 1], P[m, 2]
        length[m] = seg(p2 + s12[:, None] * (p1 - p2), p2 + s02[:, None] * (p0 - p2))
    return vol, length


def _clip(mesh: MeshManifold, d: np.ndarray, R: float):
    vol, length = clip_sublevel(mesh, d, R)
    return float(vol.sum()), float(length.sum())


def ball_growth_samples(
    mesh: MeshManifold,
    o: int,
    radii: Sequence[float],
    distance: Optional[ScalarField] = None,
) -> BallGrowthTable:
    """Volume of {r < R} and length of {r = R} by exact clipping of the P1 distance."""
    radii = np.asarray(radii, dtype=float)
    if distance is None:
        distance = distance_field(mesh, o)
    d = distance.values
    if radii.ndim != 1 or radii.size == 0:
        raise RadiusOutOfRange("need at least one radius")
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise RadiusOutOfRange("radii must be positive and strictly increasing")
    if radii[-1] > d.max():
        raise RadiusOutOfRange(f"radius {radii[-1]:g} exceeds mesh extent {d.max():g}")
    vols, areas = zip(*(_clip(mesh, d, R) for R in radii))
    return BallGrowthTable(o, radii, np.array(vols), np.array(areas))
