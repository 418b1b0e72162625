"""Discrete weak calculus on meshes with boundary.

Hat functions are the test functions throughout: they positively span the cone
of non-negative P1 functions, so a weak inequality against every admissible
test function reduces to one inequality per hat.  Vector fields are P0, whose
distributional divergence lives on edges as normal-flux jumps.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import fem
from .errors import EmptyBoundary, MeshMismatch, PreconditionViolated
from .geometry.mesh import MeshManifold, ScalarField, VectorField
from .potential import Condenser, classify_sequence, condenser_capacity, fmt, harmonic_measure


def _check_mesh(mesh: MeshManifold, *fields) -> None:
    for f in fields:
        other = f.mesh
        if other is mesh:
            continue
        if other.n_vertices != mesh.n_vertices or not np.array_equal(other.triangles, mesh.triangles):
            raise MeshMismatch("field lives on a different mesh")


def _values(mesh: MeshManifold, u) -> np.ndarray:
    if isinstance(u, ScalarField):
        _check_mesh(mesh, u)
        return u.values
    v = np.asarray(u, dtype=float)
    if v.shape != (mesh.n_vertices,):
        raise MeshMismatch(f"{v.shape} values for a mesh with {mesh.n_vertices} vertices")
    return v


def test_vertices(mesh: MeshManifold) -> np.ndarray:
    """Centres of admissible hats: interior and true-boundary vertices, none on D0."""
    on_d0 = np.zeros(mesh.n_vertices, dtype=bool)
    on_d0[mesh.vertices_with(label="d0")] = True
    return np.flatnonzero(~on_d0)


# ----------------------------------------------------------------------------
# Laplacian pairings
# ----------------------------------------------------------------------------
def weak_laplacian_pairing(mesh: MeshManifold, u, phi) -> float:
    """``-int <grad u, grad phi>`` = ``-phi^T S u``."""
    u, phi = _values(mesh, u), _values(mesh, phi)
    return float(-phi @ (fem.stiffness(mesh) @ u))


def hat_pairings(mesh: MeshManifold, u) -> np.ndarray:
    """``-int <grad u, grad hat_i>`` for every vertex i (difference form)."""
    return -fem.laplacian_action(mesh, _values(mesh, u))


@dataclass
class WeakPairingReport:
    worst_vertex: int
    worst_value: float
    passed: bool
    tolerance: float
    tested: int

    def to_dict(self) -> dict:
        return asdict(self)


def is_weak_neumann_subsolution(mesh: MeshManifold, u, tol: float = 0.0) -> WeakPairingReport:
    """Check ``-int <grad u, grad hat_i> >= -tol`` at every interior and D1 vertex."""
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    idx = test_vertices(mesh)
    if idx.size == 0:
        return WeakPairingReport(-1, math.inf, True, tol, 0)
    p = hat_pairings(mesh, u)[idx]
    k = int(np.argmin(p))
    worst = float(p[k])
    return WeakPairingReport(int(idx[k]), worst, worst >= -tol, tol, int(idx.size))


# ----------------------------------------------------------------------------
# Ahlfors maximum principle
# ----------------------------------------------------------------------------
@dataclass
class AhlforsReport:
    sup_D: float
    sup_boundary0: float
    gap: float
    argmax: int
    boundary_size: int

    def to_dict(self) -> dict:
        return asdict(self)


def boundary0_vertices(mesh: MeshManifold, D: np.ndarray, marker: Optional[str] = None) -> np.ndarray:
    """Discrete ``d0 D``: D vertices on D0 edges (or on ``marker`` edges) plus D vertices adjacent to the complement."""
    inD = np.zeros(mesh.n_vertices, dtype=bool)
    inD[D] = True
    tagged = mesh.vertices_with(label="d0") if marker is None else mesh.vertices_with(marker=marker)
    out = np.zeros(mesh.n_vertices, dtype=bool)
    out[tagged] = True
    out &= inD
    E = mesh.edges
    cut = inD[E[:, 0]] != inD[E[:, 1]]
    ends = E[cut].ravel()
    out[ends[inD[ends]]] = True
    return np.flatnonzero(out)


def ahlfors_report(mesh: MeshManifold, u, D=None, marker: Optional[str] = None) -> AhlforsReport:
    """Suprema of ``u`` over the vertex set D and over its discrete ``d0`` part."""
    v = _values(mesh, u)
    D = np.arange(mesh.n_vertices) if D is None else np.unique(np.asarray(D, dtype=np.int64))
    B = boundary0_vertices(mesh, D, marker)
    if B.size == 0:
        raise EmptyBoundary("the d0 part of D has no vertices")
    k = int(D[np.argmax(v[D])])
    sup_D, sup_B = float(v[k]), float(v[B].max())
    return AhlforsReport(sup_D, sup_B, sup_D - sup_B, k, int(B.size))


@dataclass
class AhlforsStudyRow:
    j: int
    outer_radius: float
    gap: float
    capacity_bound: float
    oscillation: float
    whole_mesh_gap: float


@dataclass
class AhlforsFamilyStudy:
    region_radius: float
    rows: List[AhlforsStudyRow]
    monotone: bool
    within_bound: bool
    final_ratio: float
    trend: str
    note: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rows"] = [asdict(r) for r in self.rows]
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "outer_radius", "gap", "capacity_bound", "oscillation", "whole_mesh_gap"])
        for r in self.rows:
            w.writerow([r.j, fmt(r.outer_radius), fmt(r.gap), fmt(r.capacity_bound), fmt(r.oscillation), fmt(r.whole_mesh_gap)])
        return buf.getvalue()


def ahlfors_family_study(family, j_max: Optional[int] = None, region_radius: float = 2.0) -> AhlforsFamilyStudy:
    """Whole-manifold Ahlfors probe along an exhaustion.

    On member j the bounded field u_j is harmonic, 0 on the true boundary
    (walls and inner circle) and 1 on the exhaustion arc.  The gap is
    ``sup u_j`` over the fixed region ``r <= region_radius`` minus ``sup u_j``
    over the true boundary.  Comparison with ``1 - v_j`` (v_j the equilibrium
    potential of the inner circle, Neumann walls) bounds the gap by the
    capacity rate.
    """
    j_max = j_max or family.j_max
    rows = []
    for j in range(1, j_max + 1):
        mesh = family.mesh(j, inner_label="d1")
        d1 = mesh.vertices_with(label="d1")
        u = harmonic_measure(mesh, d1, mesh.vertices_with(marker="outer")).values
        r = np.linalg.norm(mesh.vertices, axis=1)
        region = np.flatnonzero(r <= region_radius * (1 + 1e-12))
        gap = float(u[region].max() - u[d1].max())
        whole = ahlfors_report(mesh, u).gap
        cap_mesh = family.mesh(j)
        v = condenser_capacity(Condenser.from_markers(cap_mesh, "inner", "outer")).potential.values
        bound = float(np.max(1.0 - v[region]))
        rows.append(AhlforsStudyRow(j, family.outer_radius(j), gap, bound, float(u.max() - u.min()), whole))
    gaps = np.array([r.gap for r in rows])
    monotone = bool(np.all(np.diff(gaps) <= 1e-12))
    within = all(r.gap <= r.capacity_bound + 1e-12 for r in rows)
    final_ratio = rows[-1].gap / rows[-1].oscillation if rows[-1].oscillation > 0 else 0.0
    verdict = classify_sequence(np.maximum(gaps, 1e-300), [r.outer_radius for r in rows])
    return AhlforsFamilyStudy(region_radius, rows, monotone, within, final_ratio, verdict.classification, verdict.note)


# ----------------------------------------------------------------------------
# divergence
# ----------------------------------------------------------------------------
def _local_fluxes(mesh: MeshManifold, X: np.ndarray) -> np.ndarray:
    """(T, 3) outward flux of the P0 field through each local edge."""
    T = mesh.n_triangles
    out = np.empty((T, 3))
    tri = np.arange(T)
    for k in range(3):
        out[:, k] = fem.edge_fluxes(mesh, X, tri, np.full(T, k))
    return out


def boundary_fluxes(mesh: MeshManifold, X: VectorField, label: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-boundary-edge outward flux; returns (edge rows, flux)."""
    mask = None if label is None else np.array([s == label for s in mesh.labels], dtype=bool)
    rows, tri, slot = fem.boundary_edge_geometry(mesh, mask)
    return rows, fem.edge_fluxes(mesh, np.asarray(X.vectors), tri, slot)


def weak_divergence_pairing(mesh: MeshManifold, X: VectorField, phi) -> float:
    """``(div X, phi) = -int <X, grad phi> + int_{D1} phi <X, nu>`` (trapezoid on phi)."""
    _check_mesh(mesh, X)
    p = _values(mesh, phi)
    dphi = fem.gradient_ref(mesh, p)
    bulk = -float(np.sum(mesh.areas * np.einsum("ti,ti->t", np.asarray(X.vectors), dphi)))
    rows, flux = boundary_fluxes(mesh, X, "d1")
    ends = mesh.boundary_edges[rows]
    edge = float(np.sum(flux * 0.5 * (p[ends[:, 0]] + p[ends[:, 1]])))
    return bulk + edge


def interior_divergence(mesh: MeshManifold, X: VectorField) -> float:
    """``int div X`` as the sum of inter-triangle normal-flux jumps over interior edges."""
    out = _local_fluxes(mesh, np.asarray(X.vectors))
    interior = mesh.edge_triangles[:, 1] >= 0
    jump = np.zeros(mesh.edges.shape[0])
    np.add.at(jump, mesh.tri_edges.ravel(), out.ravel())
    return float(-np.sum(jump[interior]))


def stokes_scale(mesh: MeshManifold, X: VectorField) -> float:
    return float(np.sqrt(np.max(X.norm_sq())) * mesh.edge_lengths.sum())


def stokes_residual(mesh: MeshManifold, X: VectorField) -> float:
    """``|int div X - int_{D0 u D1} <X, nu>|``; infinite if X is not finite."""
    _check_mesh(mesh, X)
    if not np.all(np.isfinite(X.vectors)):
        return math.inf
    _, flux = boundary_fluxes(mesh, X)
    return abs(interior_divergence(mesh, X) - float(flux.sum()))


@dataclass
class StokesRow:
    j: int
    interior: float
    d1_flux: float
    d0_leak: float
    l2_norm: float

    @property
    def gap(self) -> float:
        return self.interior - self.d1_flux


@dataclass
class StokesLimitStudy:
    rows: List[StokesRow]
    l2_bounded: bool
    verdict: str
    expected_gap: Optional[float]
    relative_error: Optional[float]
    note: str

    def to_dict(self) -> dict:
        return {
            "rows": [dict(asdict(r), gap=r.gap) for r in self.rows],
            "l2_bounded": self.l2_bounded,
            "verdict": self.verdict,
            "expected_gap": self.expected_gap,
            "relative_error": self.relative_error,
            "note": self.note,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "interior", "d1_flux", "d0_leak", "l2_norm", "gap", "l2_bounded", "verdict"])
        for r in self.rows:
            w.writerow([r.j, fmt(r.interior), fmt(r.d1_flux), fmt(r.d0_leak), fmt(r.l2_norm), fmt(r.gap),
                        self.l2_bounded, self.verdict])
        return buf.getvalue()


def _stabilizes(values: Sequence[float], rel: float = 1e-9) -> bool:
    """Increments of a non-decreasing sequence contract geometrically (or vanish)."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return False
    inc = np.diff(v)
    scale = max(abs(v[-1]), 1e-300)
    if np.all(np.abs(inc[-2:]) <= rel * scale):
        return True
    if np.any(inc[-3:] < -rel * scale):
        return False
    ratios = inc[1:] / np.maximum(inc[:-1], 1e-300)
    return bool(np.all(ratios[-2:] <= 0.9))


def stokes_limit_study(
    meshes: Sequence[MeshManifold],
    X_generator: Callable[[MeshManifold, int], VectorField],
    expected_gap: Optional[float] = None,
    leak_tol: float = 1e-9,
) -> StokesLimitStudy:
    """Tabulate the Stokes identity along truncations and decide how the limit behaves.

    ``gap = interior - d1_flux`` equals the flux leaking through the exhaustion
    arc.  Verdicts: ``NotL2`` when the energy grows without bound, ``MatchesTheorem``
    when the leak vanishes for an L2 field, ``StokesFails`` when an L2 field keeps
    a non-zero leak (the witness of a non-parabolic family).
    """
    rows = []
    for j, mesh in enumerate(meshes, start=1):
        X = X_generator(mesh, j)
        _, d1 = boundary_fluxes(mesh, X, "d1")
        _, d0 = boundary_fluxes(mesh, X, "d0")
        rows.append(StokesRow(j, interior_divergence(mesh, X), float(d1.sum()), float(d0.sum()),
                              math.sqrt(X.l2_norm_sq())))
    bounded = _stabilizes([r.l2_norm for r in rows])
    last = rows[-1]
    scale = max(1.0, abs(last.interior), abs(last.d1_flux), last.l2_norm)
    rel_err = None
    if expected_gap is not None and expected_gap != 0:
        rel_err = abs(last.gap - expected_gap) / abs(expected_gap)
    if not bounded:
        verdict, note = "NotL2", "energy of X grows along the exhaustion; the theorem's L2 hypothesis fails"
    elif abs(last.gap) <= leak_tol * scale:
        verdict, note = "MatchesTheorem", "leak through the exhaustion boundary vanishes; identity holds"
    else:
        verdict = "StokesFails"
        note = f"L2 field with persistent leak {last.gap:.6g}: global Stokes fails as predicted"
        if rel_err is not None:
            note += f" (relative error {rel_err:.3g} vs expected {expected_gap:.6g})"
    return StokesLimitStudy(rows, bounded, verdict, expected_gap, rel_err, note)


# ----------------------------------------------------------------------------
# divergence inequalities
# ----------------------------------------------------------------------------
@dataclass
class DivInequalityRow:
    j: int
    int_f: float
    d1_flux: float
    phi_f: float
    div_phi: float
    energy_term: float
    d1_phi: float
    capacity: float
    l2_norm: float
    chain_ok: bool


@dataclass
class DivInequalityReport:
    rows: List[DivInequalityRow]
    l2_bounded: bool
    conclusion: str
    holds: bool

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "l2_bounded": self.l2_bounded,
                "conclusion": self.conclusion, "holds": self.holds}


def div_inequality_report(
    meshes: Sequence[MeshManifold],
    generator: Callable[[MeshManifold, int], Tuple[VectorField, ScalarField]],
    K: Callable[[MeshManifold], np.ndarray],
    tol: float = 1e-10,
) -> DivInequalityReport:
    """``int f <= int_{d1} <X, nu>`` along an exhaustion, following the capacity argument.

    Each member checks the hypotheses (non-positive true-boundary flux, weak
    ``div X >= f`` at every admissible hat) and the chain
    ``int phi f <= (div X, phi) <= |X|_2 cap^(1/2) + int_{d1} phi <X, nu>``
    with ``phi`` the equilibrium potential of ``(K, Omega_j)``.  ``tol`` is relative
    to ``sup|X| * h``; fields from Neumann solves carry O(h) flux noise on d1 edges,
    so discrete solutions need a tolerance of a few percent.
    """
    rows = []
    for j, mesh in enumerate(meshes, start=1):
        X, f = generator(mesh, j)
        fv = _values(mesh, f)
        # per-edge and per-hat quantities are of size |X| h
        scale = X.sup_norm() * float(mesh.edge_lengths.max())
        rws, d1 = boundary_fluxes(mesh, X, "d1")
        if d1.size and d1.max() > tol * scale:
            raise PreconditionViolated(f"positive true-boundary flux {d1.max():.3e} on member {j}")
        Mf = fem.mass(mesh) @ fv
        idx = test_vertices(mesh)
        hats = np.array([weak_divergence_pairing(mesh, X, _hat(mesh, i)) for i in idx]) if idx.size < 2000 else \
            _hat_divergences(mesh, X)[idx]
        slack = hats - Mf[idx]
        if slack.size and slack.min() < -tol * scale:
            k = int(np.argmin(slack))
            raise PreconditionViolated(f"weak inequality div X >= f fails at vertex {int(idx[k])} by {-slack[k]:.3e}")
        cap = condenser_capacity(Condenser(mesh, K(mesh), "outer"))
        phi = cap.potential.values
        ends = mesh.boundary_edges[rws]
        d1_phi = float(np.sum(d1 * 0.5 * (phi[ends[:, 0]] + phi[ends[:, 1]]))) if d1.size else 0.0
        phi_f = float(phi @ Mf)
        div_phi = weak_divergence_pairing(mesh, X, phi)
        l2 = math.sqrt(X.l2_norm_sq())
        energy = l2 * math.sqrt(cap.value)
        ok = phi_f <= div_phi + tol * scale and div_phi <= energy + d1_phi + tol * scale
        rows.append(DivInequalityRow(j, float(Mf.sum()), float(d1.sum()), phi_f, div_phi, energy, d1_phi, cap.value, l2, ok))
    norms = [r.l2_norm for r in rows]
    bounded = _stabilizes(norms) or (len(norms) > 1 and norms[-1] <= max(norms[:-1]))
    last = rows[-1]
    holds = all(r.chain_ok for r in rows)
    if not holds:
        conclusion = "capacity chain violated"
    elif not bounded:
        conclusion = "X is not L2 along the exhaustion; no limit statement"
    else:
        diff = last.int_f - last.d1_flux
        conclusion = f"int f - int_d1 <X,nu> = {diff:.6g} at the finest truncation (limit must be <= 0)"
    return DivInequalityReport(rows, bounded, conclusion, holds)


def _hat(mesh: MeshManifold, i: int) -> np.ndarray:
    e = np.zeros(mesh.n_vertices)
    e[i] = 1.0
    return e


def _hat_divergences(mesh: MeshManifold, X: VectorField) -> np.ndarray:
    """``(div X, hat_i)`` for all vertices at once."""
    from .geometry.mesh import GRAD_REF

    Xv = np.asarray(X.vectors)
    out = np.zeros(mesh.n_vertices)
    # bulk: -area * X . d(hat) with d(hat_k) = GRAD_REF[:, k]
    contrib = -mesh.areas[:, None] * (Xv @ GRAD_REF)
    np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
    rows, flux = boundary_fluxes(mesh, X, "d1")
    ends = mesh.boundary_edges[rows]
    np.add.at(out, ends[:, 0], 0.5 * flux)
    np.add.at(out, ends[:, 1], 0.5 * flux)
    return out
