"""P1 finite-element assembly on meshes with per-triangle metrics."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystem, SolverDivergence
from .geometry.mesh import GRAD_REF, MeshManifold

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
RESIDUAL_TOL = 1e-10


def _cached(mesh: MeshManifold, key: str, build):
    store = mesh.__dict__.setdefault("_fem_cache", {})
    if key not in store:
        store[key] = build()
    return store[key]


def local_stiffness(mesh: MeshManifold) -> np.ndarray:
    """(T, 3, 3) element matrices ``area * B^T G^-1 B``."""

    def build():
        return mesh.areas[:, None, None] * np.einsum("ai,tab,bj->tij", GRAD_REF, mesh.gram_inv, GRAD_REF)

    return _cached(mesh, "local_stiffness", build)


def _assemble(mesh: MeshManifold, local: np.ndarray) -> sp.csr_matrix:
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def stiffness(mesh: MeshManifold) -> sp.csr_matrix:
    return _cached(mesh, "stiffness", lambda: _assemble(mesh, local_stiffness(mesh)))


def mass(mesh: MeshManifold) -> sp.csr_matrix:
    def build():
        base = (np.ones((3, 3)) + np.eye(3)) / 12.0
        return _assemble(mesh, mesh.areas[:, None, None] * base[None])

    return _cached(mesh, "mass", build)


def lumped_mass(mesh: MeshManifold) -> np.ndarray:
    def build():
        m = np.zeros(mesh.n_vertices)
        np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
        return m

    return _cached(mesh, "lumped_mass", build)


def edge_weights(mesh: MeshManifold) -> np.ndarray:
    """Coupling ``w_ij = -S_ij`` for every edge in ``mesh.edges`` (cotangent weights)."""

    def build():
        K = local_stiffness(mesh)
        w = np.zeros(mesh.edges.shape[0])
        for k in range(3):
            np.add.at(w, mesh.tri_edges[:, k], -K[:, k, (k + 1) % 3])
        return w

    return _cached(mesh, "edge_weights", build)


def laplacian_action(mesh: MeshManifold, u: np.ndarray) -> np.ndarray:
    """``(S u)_i`` in difference form ``sum_j w_ij (u_i - u_j)``.

    The difference form keeps the sign exact in floating point: a strict local
    maximum with non-negative weights always yields a strictly positive entry.
    """
    E = mesh.edges
    w = edge_weights(mesh)
    d = w * (u[E[:, 0]] - u[E[:, 1]])
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, E[:, 0], d)
    np.add.at(out, E[:, 1], -d)
    return out


def solve_spd(A: sp.spmatrix, b: np.ndarray, tol: float = RESIDUAL_TOL) -> np.ndarray:
    """Solve a symmetric positive definite sparse system and verify the residual.

    The system is scaled symmetrically by its diagonal first; warped models mix
    couplings of very different size.  Convergence is judged by the normwise
    backward error ``|r| / (|A| |x| + |b|)`` of the scaled system (infinity norms),
    which stays meaningful when the data is tiny compared with the solution.
    """
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    d = np.asarray(sp.csr_matrix(A).diagonal(), dtype=float)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise SingularSystem("stiffness has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(d)
    D = sp.diags(s)
    As = sp.csc_matrix(D @ A @ D)
    bs = s * b
    if not np.any(bs):
        return np.zeros(n)
    anorm = spla.norm(As, np.inf)

    def backward_error(y):
        r = np.abs(As @ y - bs).max()
        return r / (anorm * np.abs(y).max() + np.abs(bs).max())

    lu = None
    if n <= DIRECT_LIMIT:
        try:
            # SPD: no pivoting, so the fill-reducing symmetric ordering survives
            lu = spla.splu(As, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        y = lu.solve(bs)
    else:
        y, info = spla.cg(As, bs, rtol=tol * 0.1, atol=0.0, maxiter=20 * n)
        if info != 0:
            raise SolverDivergence(f"conjugate gradient did not converge (info={info})")
    if not np.all(np.isfinite(y)):
        raise SingularSystem("non-finite solution")
    res = backward_error(y)
    if res > tol and lu is not None:
        # one step of iterative refinement before giving up
        y = y + lu.solve(bs - As @ y)
        res = backward_error(y)
    if res > tol:
        raise SolverDivergence(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return s * y


def solve_dirichlet(
    A: sp.csr_matrix,
    rhs: np.ndarray,
    fixed: np.ndarray,
    fixed_values: np.ndarray,
    tol: float = RESIDUAL_TOL,
) -> np.ndarray:
    """Solve ``A u = rhs`` on free rows with ``u[fixed] = fixed_values``."""
    n = A.shape[0]
    if fixed.size == 0:
        raise SingularSystem("no Dirichlet constraint: the Neumann problem is singular")
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[fixed] = True
    free = np.flatnonzero(~is_fixed)
    u = np.zeros(n)
    u[fixed] = fixed_values
    if free.size:
        A = sp.csr_matrix(A)
        Aff = A[free][:, free]
        b = rhs[free] - A[free][:, fixed] @ u[fixed]
        u[free] = solve_spd(Aff, b, tol)
    return u


def gradient_ref(mesh: MeshManifold, u: np.ndarray) -> np.ndarray:
    return np.einsum("ij,tj->ti", GRAD_REF, u[mesh.triangles])


def vertex_average(mesh: MeshManifold, tri_values: np.ndarray) -> np.ndarray:
    """Lumped-mass weighted average of per-triangle values at the vertices."""
    acc = np.zeros(mesh.n_vertices)
    np.add.at(acc, mesh.triangles.ravel(), np.repeat(tri_values * mesh.areas / 3.0, 3))
    return acc / lumped_mass(mesh)


def boundary_edge_geometry(mesh: MeshManifold, mask: Optional[np.ndarray] = None):
    """For boundary edges: owning triangle, local edge slot and orientation sign.

    Returns arrays ``(edge_rows, tri, slot)`` where ``tri`` contains the edge as
    its local edge ``slot`` (from local vertex ``slot`` to ``slot + 1``).
    """
    B = mesh.boundary_edges
    if mask is None:
        mask = np.ones(B.shape[0], dtype=bool)
    rows = np.flatnonzero(mask)
    lookup = _cached(mesh, "edge_slot", lambda: _edge_slot_map(mesh))
    tri = np.empty(rows.size, dtype=np.int64)
    slot = np.empty(rows.size, dtype=np.int64)
    for n, r in enumerate(rows):
        i, j = B[r]
        tri[n], slot[n] = lookup[(min(i, j), max(i, j))]
    return rows, tri, slot


def _edge_slot_map(mesh: MeshManifold) -> dict:
    out = {}
    bset = {(min(i, j), max(i, j)) for i, j in mesh.boundary_edges.tolist()}
    T = mesh.triangles
    for k in range(3):
        a, b = T[:, k], T[:, (k + 1) % 3]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        for t, key in enumerate(zip(lo.tolist(), hi.tolist())):
            if key in bset:
                out[key] = (t, k)
    return out


def edge_fluxes(mesh: MeshManifold, X: np.ndarray, tri: np.ndarray, slot: np.ndarray) -> np.ndarray:
    """Outward flux ``int_e <X, nu> ds`` of the P0 field through local edges.

    In the reference frame the flux through an edge with (counter-clockwise)
    tangent ``t`` is ``sqrt(det G) * (X^1 t^2 - X^2 t^1)``.
    """
    from .geometry.mesh import REF_CORNERS

    t = REF_CORNERS[(slot + 1) % 3] - REF_CORNERS[slot]
    Xt = X[tri]
    return np.sqrt(mesh.det_gram[tri]) * (Xt[:, 0] * t[:, 1] - Xt[:, 1] * t[:, 0])


def dual_areas(mesh: MeshManifold) -> np.ndarray:
    """Mixed Voronoi vertex areas: circumcentric cells, with the barycentric-style
    split (A/2 at the obtuse corner, A/4 elsewhere) in obtuse triangles.

    With these areas the cotangent Laplacian of a metric-quadratic ``|x|^2`` is
    exact at interior vertices, which barycentric lumping is not.
    """

    def build():
        G = mesh.gram
        A = mesh.areas
        # squared edge lengths opposite corners 0, 1, 2 and corner dot products
        l0 = G[:, 0, 0] + G[:, 1, 1] - 2 * G[:, 0, 1]
        l1 = G[:, 1, 1]
        l2 = G[:, 0, 0]
        d0 = G[:, 0, 1]
        d1 = G[:, 0, 0] - G[:, 0, 1]
        d2 = G[:, 1, 1] - G[:, 0, 1]
        cot0, cot1, cot2 = d0 / (2 * A), d1 / (2 * A), d2 / (2 * A)
        # Voronoi part at corner k: (|e_kj|^2 cot(opposite of kj) + |e_kl|^2 cot(opposite of kl)) / 8
        v0 = (l2 * cot2 + l1 * cot1) / 8.0
        v1 = (l2 * cot2 + l0 * cot0) / 8.0
        v2 = (l1 * cot1 + l0 * cot0) / 8.0
        local = np.stack([v0, v1, v2], axis=1)
        obtuse = np.stack([d0, d1, d2], axis=1) < 0
        bad = obtuse.any(axis=1)
        local[bad] = np.where(obtuse[bad], A[bad, None] / 2, A[bad, None] / 4)
        out = np.zeros(mesh.n_vertices)
        np.add.at(out, mesh.triangles.ravel(), local.ravel())
        return out

    return _cached(mesh, "dual_areas", build)


def recovered_gradient(mesh: MeshManifold, u: np.ndarray, rings: int = 3) -> np.ndarray:
    """Vertex gradients (chart coordinates) from a local least-squares cubic fit.

    The fit uses every vertex within ``rings`` edge hops and falls back to a quadratic
    where the cubic is rank deficient. Unlike averaging the piecewise-constant gradient,
    this stays second-order accurate on irregular vertex patches.
    """
    n = mesh.n_vertices
    E = mesh.edges
    A = sp.coo_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(n, n))
    A = (A + A.T + sp.identity(n)).tocsr()
    R = A
    for _ in range(rings - 1):
        R = R @ A
    R = R.tocsr()
    X = mesh.vertices
    out = np.zeros((n, 2))
    for i in range(n):
        nb = R.indices[R.indptr[i] : R.indptr[i + 1]]
        d = X[nb] - X[i]
        s = float(np.abs(d).max())
        x, y = d[:, 0] / s, d[:, 1] / s
        basis = [np.ones_like(x), x, y, x * x, x * y, y * y, x**3, x * x * y, x * y * y, y**3]
        for k in (10, 6, 3):
            V = np.column_stack(basis[:k])
            c, _, rank, _ = np.linalg.lstsq(V, u[nb], rcond=None)
            if rank == k:
                break
        out[i] = c[1:3] / s
    return out
