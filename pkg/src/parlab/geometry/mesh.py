"""Triangulated 2-manifolds with labelled boundary, and fields living on them.

Every triangle carries a constant metric expressed in its reference frame: for a
triangle ``(p0, p1, p2)`` the frame is ``e1 = p1 - p0``, ``e2 = p2 - p0`` and the
metric is the 2x2 Gram matrix of that frame.  When no metric is stored it is
induced from the vertex embedding.  Vector fields are stored as contravariant
components in the same frame, so ``<X, grad phi>`` needs no metric at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from ..errors import InvariantViolation, MeshMismatch

LABELS = ("d0", "d1")

# reference coordinates of the three corners
REF_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# d(vertex values) -> reference-frame differential: d = B @ u_local
GRAD_REF = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeshManifold:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    labels: tuple
    markers: tuple
    metric: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "triangles", _frozen(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)))
        object.__setattr__(
            self, "boundary_edges", _frozen(np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))
        )
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "markers", tuple(str(s) for s in self.markers))
        if self.metric is not None:
            object.__setattr__(self, "metric", _frozen(np.asarray(self.metric, dtype=float)))
        self._validate()

    # ------------------------------------------------------------------
    def _validate(self) -> None:
        V, T, B = self.vertices, self.triangles, self.boundary_edges
        if V.ndim != 2 or V.shape[1] not in (2, 3) or V.shape[0] < 3:
            raise InvariantViolation("vertices must be an (n, 2) or (n, 3) array with n >= 3")
        if not np.all(np.isfinite(V)):
            raise InvariantViolation("vertex coordinates must be finite")
        n = V.shape[0]
        if T.shape[0] == 0:
            raise InvariantViolation("mesh has no triangles")
        if T.min() < 0 or T.max() >= n:
            raise InvariantViolation("triangle references a vertex index out of range")
        if np.any(T[:, 0] == T[:, 1]) or np.any(T[:, 1] == T[:, 2]) or np.any(T[:, 0] == T[:, 2]):
            raise InvariantViolation("triangle with repeated vertex")
        if B.size and (B.min() < 0 or B.max() >= n):
            raise InvariantViolation("boundary edge references a vertex index out of range")
        if len(self.labels) != B.shape[0] or len(self.markers) != B.shape[0]:
            raise InvariantViolation("every boundary edge needs exactly one label and one marker")
        bad = [s for s in self.labels if s not in LABELS]
        if bad:
            raise InvariantViolation(f"unknown boundary label(s) {sorted(set(bad))}")
        if self.metric is not None:
            G = self.metric
            if G.shape != (T.shape[0], 2, 2):
                raise InvariantViolation("metric must hold one 2x2 matrix per triangle")
            if not np.all(np.isfinite(G)) or not np.allclose(G[:, 0, 1], G[:, 1, 0], rtol=1e-12, atol=0):
                raise InvariantViolation("metric must be finite and symmetric")
        G = self.gram
        det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]
        if np.any(~(det > 0)) or np.any(~(G[:, 0, 0] > 0)):
            raise InvariantViolation("per-triangle metric is not positive definite (degenerate triangle?)")

        # orientation: each directed edge may appear once
        directed = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        keys = directed[:, 0] * n + directed[:, 1]
        if np.unique(keys).size != keys.size:
            raise InvariantViolation("inconsistent orientation or non-manifold edge")
        counts = np.bincount(self.tri_edges.ravel(), minlength=self.edges.shape[0])
        if np.any(counts > 2):
            raise InvariantViolation("edge shared by more than two triangles")
        topo = {tuple(e) for e in self.edges[counts == 1]}
        labelled = [tuple(sorted(e)) for e in B.tolist()]
        if len(set(labelled)) != len(labelled):
            raise InvariantViolation("boundary edge listed twice")
        missing = topo - set(labelled)
        if missing:
            raise InvariantViolation(f"{len(missing)} topological boundary edge(s) carry no label")
        extra = set(labelled) - topo
        if extra:
            raise InvariantViolation(f"{len(extra)} labelled edge(s) are not boundary edges")

    # ------------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def is_flat(self) -> bool:
        """True when the metric is the one induced by a planar embedding."""
        return self.metric is None and self.vertices.shape[1] == 2

    @cached_property
    def frames(self) -> np.ndarray:
        """(T, d, 2) embedded reference frames ``[p1 - p0, p2 - p0]``."""
        P = self.vertices[self.triangles]
        return np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)

    @cached_property
    def gram(self) -> np.ndarray:
        if self.metric is not None:
            return self.metric
        E = self.frames
        return np.einsum("tdi,tdj->tij", E, E)

    @cached_property
    def det_gram(self) -> np.ndarray:
        G = self.gram
        return G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2

    @cached_property
    def gram_inv(self) -> np.ndarray:
        G, det = self.gram, self.det_gram
        inv = np.empty_like(G)
        inv[:, 0, 0] = G[:, 1, 1] / det
        inv[:, 1, 1] = G[:, 0, 0] / det
        inv[:, 0, 1] = inv[:, 1, 0] = -G[:, 0, 1] / det
        return inv

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.sqrt(self.det_gram)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def _edge_data(self):
        T = self.triangles
        local = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        srt = np.sort(local, axis=1)
        edges, inv = np.unique(srt, axis=0, return_inverse=True)
        tri_edges = inv.reshape(3, -1).T.copy()
        return edges, tri_edges

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) unique undirected edges, sorted."""
        return self._edge_data[0]

    @cached_property
    def tri_edges(self) -> np.ndarray:
        """(T, 3) edge ids; column k is the edge from local vertex k to k+1."""
        return self._edge_data[1]

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """(E, 2) incident triangles per edge, -1 where absent."""
        out = -np.ones((self.edges.shape[0], 2), dtype=np.int64)
        e = self.tri_edges.ravel()
        t = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(e, kind="stable")
        e, t = e[order], t[order]
        uniq, first, counts = np.unique(e, return_index=True, return_counts=True)
        out[uniq, 0] = t[first]
        two = counts == 2
        out[uniq[two], 1] = t[first[two] + 1]
        return out

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Metric length of every edge (mean over incident triangles)."""
        G = self.gram
        total = np.zeros(self.edges.shape[0])
        count = np.zeros(self.edges.shape[0])
        for k in range(3):
            t = REF_CORNERS[(k + 1) % 3] - REF_CORNERS[k]
            L = np.sqrt(np.einsum("i,tij,j->t", t, G, t))
            np.add.at(total, self.tri_edges[:, k], L)
            np.add.at(count, self.tri_edges[:, k], 1.0)
        return total / count

    def vertices_with(self, label: Optional[str] = None, marker: Optional[str] = None) -> np.ndarray:
        """Sorted vertex ids lying on boundary edges matching label and/or marker."""
        mask = np.ones(self.boundary_edges.shape[0], dtype=bool)
        if label is not None:
            mask &= np.array([s == label for s in self.labels], dtype=bool)
        if marker is not None:
            mask &= np.array([s == marker for s in self.markers], dtype=bool)
        return np.unique(self.boundary_edges[mask]) if mask.any() else np.zeros(0, dtype=np.int64)

    @property
    def marker_names(self) -> list:
        return sorted(set(self.markers))

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def neighbors(self) -> list:
        adj = [set() for _ in range(self.n_vertices)]
        for i, j in self.edges:
            adj[i].add(int(j))
            adj[j].add(int(i))
        return adj

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.edges.shape[0] + self.n_triangles

    def boundary_loops(self) -> int:
        """Number of connected components of the boundary graph."""
        parent = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j in self.boundary_edges.tolist():
            parent[find(i)] = find(j)
        return len({find(v) for v in parent})

    def obtuse_count(self) -> int:
        """Triangles with an angle above 90 degrees in their metric."""
        G = self.gram
        # corner k's angle is obtuse iff the frame at k has negative inner product
        c0 = G[:, 0, 1]
        c1 = G[:, 0, 0] - G[:, 0, 1]
        c2 = G[:, 1, 1] - G[:, 0, 1]
        return int(np.sum((c0 < -1e-14 * G[:, 0, 0]) | (c1 < -1e-14 * G[:, 0, 0]) | (c2 < -1e-14 * G[:, 0, 0])))

    def with_metric(self, metric: Optional[np.ndarray]) -> "MeshManifold":
        return MeshManifold(self.vertices, self.triangles, self.boundary_edges, self.labels, self.markers, metric)

    def structurally_equal(self, other: "MeshManifold") -> bool:
        if self.metric is None and other.metric is not None or self.metric is not None and other.metric is None:
            return False
        same = (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and self.labels == other.labels
            and self.markers == other.markers
        )
        if same and self.metric is not None:
            same = np.array_equal(self.metric, other.metric)
        return bool(same)


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: MeshManifold
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.mesh.n_vertices:
            raise MeshMismatch(f"{v.shape[0]} values for a mesh with {self.mesh.n_vertices} vertices")
        if not np.all(np.isfinite(v)):
            raise InvariantViolation("scalar field values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def __getitem__(self, i):
        return self.values[i]

    @classmethod
    def from_function(cls, mesh: MeshManifold, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        return cls(mesh, fn(mesh.vertices))

    @cached_property
    def ref_gradient(self) -> np.ndarray:
        """(T, 2) covector components of the gradient in each triangle's frame."""
        return np.einsum("ij,tj->ti", GRAD_REF, self.values[self.mesh.triangles])

    def gradient(self) -> "VectorField":
        """Piecewise-constant metric gradient as a vector field."""
        return VectorField(self.mesh, np.einsum("tij,tj->ti", self.mesh.gram_inv, self.ref_gradient))

    def gradient_norm_sq(self) -> np.ndarray:
        d = self.ref_gradient
        return np.einsum("ti,tij,tj->t", d, self.mesh.gram_inv, d)


@dataclass(frozen=True, eq=False)
class VectorField:
    mesh: MeshManifold
    vectors: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.vectors, dtype=float)
        if X.shape != (self.mesh.n_triangles, 2):
            raise MeshMismatch(f"vector field shape {X.shape} does not match {self.mesh.n_triangles} triangles")
        object.__setattr__(self, "vectors", _frozen(X))

    def norm_sq(self) -> np.ndarray:
        return np.einsum("ti,tij,tj->t", self.vectors, self.mesh.gram, self.vectors)

    def l2_norm_sq(self) -> float:
        return float(np.sum(self.norm_sq() * self.mesh.areas))

    def sup_norm(self) -> float:
        return float(np.sqrt(self.norm_sq().max()))

    @classmethod
    def from_ambient(cls, mesh: MeshManifold, ambient: np.ndarray) -> "VectorField":
        """Project ambient vectors (one per triangle) onto the triangle frames."""
        A = np.asarray(ambient, dtype=float)
        E = mesh.frames
        cov = np.einsum("tdi,td->ti", E, A[:, : E.shape[1]])
        return cls(mesh, np.einsum("tij,tj->ti", mesh.gram_inv, cov))


def refine(mesh: MeshManifold, snap: Optional[Callable[[str, np.ndarray], np.ndarray]] = None) -> MeshManifold:
    """Split every triangle 1 -> 4 at edge midpoints.

    Boundary labels and markers are inherited by both halves.  A stored metric
    is restricted exactly to the children.  ``snap(marker, point)`` may move new
    boundary midpoints onto a curve (area is then no longer preserved).
    """
    V, T = mesh.vertices, mesh.triangles
    edges, tri_edges = mesh.edges, mesh.tri_edges
    n = V.shape[0]
    mids = 0.5 * (V[edges[:, 0]] + V[edges[:, 1]])
    edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
    new_b, new_l, new_m = [], [], []
    if snap is not None:
        mids = mids.copy()
    for (i, j), lab, mk in zip(mesh.boundary_edges.tolist(), mesh.labels, mesh.markers):
        k = edge_index[(min(i, j), max(i, j))]
        if snap is not None:
            mids[k] = snap(mk, mids[k])
        mid = n + k
        new_b += [(i, mid), (mid, j)]
        new_l += [lab, lab]
        new_m += [mk, mk]
    m01, m12, m20 = n + tri_edges[:, 0], n + tri_edges[:, 1], n + tri_edges[:, 2]
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    children = np.stack(
        [
            np.stack([a, m01, m20], 1),
            np.stack([m01, b, m12], 1),
            np.stack([m20, m12, c], 1),
            np.stack([m01, m12, m20], 1),
        ],
        axis=1,
    ).reshape(-1, 3)
    metric = None
    if mesh.metric is not None:
        G = mesh.metric
        Ec = np.array([[0.0, -0.5], [0.5, 0.5]])  # centre child frame in parent coordinates
        Gc = np.einsum("ai,tab,bj->tij", Ec, G, Ec)
        metric = np.stack([G / 4.0, G / 4.0, G / 4.0, Gc], axis=1).reshape(-1, 2, 2)
    return MeshManifold(np.vstack([V, mids]), children, np.array(new_b), new_l, new_m, metric)


def field_on(mesh: MeshManifold, values: Sequence[float] | np.ndarray | float) -> ScalarField:
    if np.isscalar(values):
        return ScalarField(mesh, np.full(mesh.n_vertices, float(values)))
    return ScalarField(mesh, np.asarray(values, dtype=float))


def marker_dict(mesh: MeshManifold) -> Dict[str, str]:
    """marker -> label, for markers that carry a single label."""
    out: Dict[str, str] = {}
    for lab, mk in zip(mesh.labels, mesh.markers):
        out.setdefault(mk, lab)
    return out
