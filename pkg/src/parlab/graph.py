"""Graphs of prescribed mean curvature over meshed bases, and the probes built on them.

Sign convention: the Gauss map points downward, N = (grad u, -1) / W, so the
mean curvature is ``H = -(1/m) div(grad u / W)`` and an upper spherical cap of
radius R0 has ``H = +1/R0``.  The base dimension is m = 2.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from . import fem
from .calculus import WeakPairingReport, _hat_divergences, boundary_fluxes, is_weak_neumann_subsolution
from .errors import HypothesisViolation, InvariantViolation, PreconditionViolated, SolverError
from .geometry.distance import BallGrowthTable, ball_growth_samples, clip_sublevel, distance_field
from .geometry.mesh import GRAD_REF, MeshManifold, ScalarField, VectorField
from .potential import fmt

M_DIM = 2


# ----------------------------------------------------------------------------
# graph surface
# ----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class GraphSurface:
    base: MeshManifold
    u: ScalarField

    def __post_init__(self):
        if self.u.mesh is not self.base and self.u.values.size != self.base.n_vertices:
            raise InvariantViolation("height field does not live on the base mesh")

    @classmethod
    def from_values(cls, base: MeshManifold, values) -> "GraphSurface":
        if isinstance(values, ScalarField):
            values = values.values
        return cls(base, ScalarField(base, values))

    @cached_property
    def du(self) -> np.ndarray:
        """(T, 2) differential of u in each triangle's reference frame."""
        return fem.gradient_ref(self.base, self.u.values)

    @cached_property
    def grad_norm_sq(self) -> np.ndarray:
        d = self.du
        return np.einsum("ti,tij,tj->t", d, self.base.gram_inv, d)

    @cached_property
    def W(self) -> np.ndarray:
        return np.sqrt(1.0 + self.grad_norm_sq)

    @property
    def cos_theta(self) -> np.ndarray:
        return -1.0 / self.W

    @cached_property
    def W_vertex(self) -> np.ndarray:
        if not self.base.is_flat:
            return fem.vertex_average(self.base, self.W)
        grad = fem.recovered_gradient(self.base, self.u.values)
        return np.sqrt(1.0 + np.einsum("vi,vi->v", grad, grad))

    @cached_property
    def metric(self) -> np.ndarray:
        """Pulled-back metric ``g + du (x) du`` per triangle."""
        d = self.du
        return self.base.gram + np.einsum("ti,tj->tij", d, d)

    @cached_property
    def sigma_mesh(self) -> MeshManifold:
        """The base carrying the graph metric (the base itself when u is constant)."""
        if not np.any(self.du):
            return self.base
        return self.base.with_metric(self.metric)

    @cached_property
    def normalized_gradient(self) -> VectorField:
        grad = np.einsum("tij,tj->ti", self.base.gram_inv, self.du)
        return VectorField(self.base, grad / self.W[:, None])

    @property
    def area(self) -> float:
        return float(np.sum(self.base.areas * self.W))


def mean_curvature_field(g: GraphSurface) -> ScalarField:
    """Weak mean curvature over mixed Voronoi areas at interior and D1 vertices; 0 at D0 vertices."""
    base = g.base
    H = -_hat_divergences(base, g.normalized_gradient) / (M_DIM * fem.dual_areas(base))
    H[base.vertices_with(label="d0")] = 0.0
    return ScalarField(base, H)


# ----------------------------------------------------------------------------
# CMC Dirichlet solver
# ----------------------------------------------------------------------------
def _local_terms(base: MeshManifold, u: np.ndarray):
    d = fem.gradient_ref(base, u)
    Gi = base.gram_inv
    gd = np.einsum("tij,tj->ti", Gi, d)  # metric gradient components
    W = np.sqrt(1.0 + np.einsum("ti,ti->t", d, gd))
    q = np.einsum("ji,tj->ti", GRAD_REF, gd)  # B^T G^-1 d, (T, 3)
    return d, W, q


def cmc_energy(base: MeshManifold, u: np.ndarray, H: float) -> float:
    """``int W - m H int u``: its critical points are the graphs of mean curvature H."""
    _, W, _ = _local_terms(base, u)
    return float(np.sum(base.areas * W) - M_DIM * H * (fem.dual_areas(base) @ u))


def cmc_residual(base: MeshManifold, u: np.ndarray, H: float) -> np.ndarray:
    """``R_i = int <grad u / W, grad hat_i> - m H int hat_i`` with ``int hat_i`` lumped to mixed Voronoi areas."""
    _, W, q = _local_terms(base, u)
    r = np.zeros(base.n_vertices)
    np.add.at(r, base.triangles.ravel(), ((base.areas / W)[:, None] * q).ravel())
    return r - M_DIM * H * fem.dual_areas(base)


def cmc_jacobian(base: MeshManifold, u: np.ndarray) -> sp.csr_matrix:
    """Analytic derivative of :func:`cmc_residual` (independent of H)."""
    _, W, q = _local_terms(base, u)
    K0 = fem.local_stiffness(base)  # area * B^T G^-1 B
    A = base.areas
    local = K0 / W[:, None, None] - (A / W**3)[:, None, None] * np.einsum("ti,tj->tij", q, q)
    return fem._assemble(base, local)


@dataclass
class CmcSolveResult:
    u: ScalarField
    newton_iterations: int
    final_residual: float
    continuation_steps: int
    status: str
    H_reached: float
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "newton_iterations": self.newton_iterations,
            "final_residual": self.final_residual,
            "continuation_steps": self.continuation_steps,
            "H_reached": self.H_reached,
            "max_u": float(self.u.values.max()),
            "min_u": float(self.u.values.min()),
            "message": self.message,
        }


def _dirichlet_set(base: MeshManifold, data: Mapping[str, float], neumann: bool):
    vals: Dict[int, float] = {}
    for marker, value in data.items():
        verts = base.vertices_with(marker=marker)
        if verts.size == 0:
            raise PreconditionViolated(f"no boundary edges carry the marker {marker!r}")
        if callable(value):
            given = np.broadcast_to(np.asarray(value(base.vertices[verts]), dtype=float), verts.shape)
        else:
            given = np.full(verts.shape, float(value))
        for v, x in zip(verts.tolist(), given.tolist()):
            if v in vals and vals[v] != x:
                raise InvariantViolation(f"vertex {v} receives conflicting boundary values")
            vals[v] = x
    if not neumann:
        missing = np.setdiff1d(base.boundary_vertices(), np.fromiter(vals, dtype=np.int64, count=len(vals)))
        if missing.size:
            raise PreconditionViolated(f"{missing.size} boundary vertices carry no Dirichlet data")
    if not vals:
        raise PreconditionViolated("at least one Dirichlet vertex is required")
    fixed = np.array(sorted(vals), dtype=np.int64)
    return fixed, np.array([vals[v] for v in fixed.tolist()])


def solve_cmc_dirichlet(
    base: MeshManifold,
    H_target: float,
    boundary_data: Mapping[str, Union[float, Callable]],
    neumann: bool = False,
    tol: float = 1e-10,
    max_newton: int = 200,
    dH_fraction: float = 0.1,
    blowup: float = 1e3,
) -> CmcSolveResult:
    """Newton with Armijo backtracking on the convex energy, continuing H from 0.

    ``boundary_data`` maps boundary markers to constant heights, or to callables
    taking an (k, 2) array of vertex positions and returning k heights.  With
    ``neumann=True`` unlisted boundary edges get the natural (zero-flux)
    condition instead of being required.  Returns ``Diverged`` on a line-search
    stall or when heights exceed ``blowup`` times the problem scale (no
    solution), ``StepLimit`` when ``max_newton`` iterations are spent.
    """
    fixed, fvals = _dirichlet_set(base, boundary_data, neumann)
    n = base.n_vertices
    free = np.setdiff1d(np.arange(n), fixed)
    # start from the harmonic extension of the data (exact when H = 0 and the data are flat)
    try:
        u = fem.solve_dirichlet(fem.stiffness(base), np.zeros(n), fixed, fvals)
    except SolverError as exc:
        return CmcSolveResult(ScalarField(base, np.zeros(n)), 0, math.inf, 0, "Diverged", 0.0, f"linear solve failed: {exc}")
    lumped = fem.dual_areas(base)
    scale = float(np.linalg.norm(lumped[free])) * max(1.0, M_DIM * abs(H_target))
    extent = float(np.ptp(base.vertices, axis=0).max())
    limit = blowup * max(1.0, extent, float(np.abs(fvals).max()), 1.0 / abs(H_target) if H_target else 1.0)
    steps = max(1, int(math.ceil(1.0 / dH_fraction - 1e-12))) if H_target != 0 else 1
    Hs = [H_target * (k + 1) / steps for k in range(steps)]
    iters = 0
    rel = math.inf

    def result(status, H, k, msg=""):
        return CmcSolveResult(ScalarField(base, u), iters, rel, k, status, H, msg)

    if free.size == 0:
        rel = 0.0
        return result("Converged", H_target, 0)
    H_done = 0.0
    for k, H in enumerate(Hs, start=1):
        while True:
            R = cmc_residual(base, u, H)[free]
            rnorm = float(np.linalg.norm(R))
            rel = rnorm / scale
            if rel <= tol:
                break
            if iters >= max_newton:
                return result("StepLimit", H_done, k - 1, f"no convergence at H={H:.6g} within {max_newton} Newton steps")
            J = cmc_jacobian(base, u)[free][:, free]
            try:
                delta = fem.solve_spd(J, -R)
            except SolverError as exc:
                return result("Diverged", H_done, k - 1, f"linear solve failed: {exc}")
            iters += 1
            E0 = cmc_energy(base, u, H)
            slope = float(R @ delta)
            alpha = 1.0
            while True:
                trial = u.copy()
                trial[free] += alpha * delta
                E1 = cmc_energy(base, trial, H)
                if E1 <= E0 + 1e-4 * alpha * slope:
                    break
                # near convergence energy differences drown in roundoff; accept residual decrease
                if np.linalg.norm(cmc_residual(base, trial, H)[free]) <= (1.0 - 1e-4 * alpha) * rnorm:
                    break
                alpha *= 0.5
                if alpha < 2.0**-40:
                    return result("Diverged", H_done, k - 1, f"line search stalled at H={H:.6g}")
            u = trial
            if not np.all(np.isfinite(u)) or np.abs(u).max() > limit:
                return result("Diverged", H_done, k - 1, f"heights exceed {limit:.3g} at H={H:.6g}: no solution")
        H_done = H
    return result("Converged", H_done, len(Hs))


# ----------------------------------------------------------------------------
# height estimate and the auxiliary function
# ----------------------------------------------------------------------------
def mesh_size(mesh: MeshManifold) -> float:
    return float(mesh.edge_lengths.max())


@dataclass
class HeightReport:
    H: float
    min_u: float
    max_u: float
    bound: float
    slack: float
    tol_height: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def height_estimate_check(g: GraphSurface, H: float, boundary_tol: float = 1e-12) -> HeightReport:
    """``0 <= u <= 1/H`` for a graph of mean curvature H > 0 with boundary in the zero slice."""
    if not H > 0:
        raise HypothesisViolation("the height estimate needs H > 0")
    u = g.u.values
    bnd = g.base.boundary_vertices()
    if np.abs(u[bnd]).max() > boundary_tol:
        raise HypothesisViolation("boundary of the graph is not contained in the zero slice")
    tol = 5.0 * mesh_size(g.base) * (1.0 + math.sqrt(float(g.grad_norm_sq.max())))
    lo, hi = float(u.min()), float(u.max())
    return HeightReport(H, lo, hi, 1.0 / H, 1.0 / H - hi, tol, lo >= -tol and hi <= 1.0 / H + tol)


def auxiliary_w_field(g: GraphSurface, H: float) -> ScalarField:
    """``w = H u - 1/W`` with W taken from recovered vertex gradients."""
    if not g.base.is_flat:
        raise PreconditionViolated("the auxiliary function is subharmonic only over flat bases here")
    return ScalarField(g.base, H * g.u.values - 1.0 / g.W_vertex)


def auxiliary_subsolution_check(g: GraphSurface, H: float, tol: Optional[float] = None) -> WeakPairingReport:
    """Hat-function subsolution check of w in the graph metric."""
    w = auxiliary_w_field(g, H)
    tol = 5e-2 * mesh_size(g.base) if tol is None else tol
    return is_weak_neumann_subsolution(g.sigma_mesh, w.values, tol)


# ----------------------------------------------------------------------------
# volume growth of the graph
# ----------------------------------------------------------------------------
def graph_ball_growth(g: GraphSurface, o: int, radii, mode: str = "auto") -> BallGrowthTable:
    """Ball growth measured intrinsically on the graph (pulled-back metric)."""
    mesh = g.sigma_mesh
    return ball_growth_samples(mesh, o, radii, distance_field(mesh, o, mode))


@dataclass
class LiWangReport:
    constant: float
    radii: List[float]
    graph_volume: List[float]
    base_volume: List[float]
    base_area: List[float]
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return dict(asdict(self), passed=self.passed)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "graph_volume", "base_volume", "base_area", "rhs"])
        for R, gv, bv, ba in zip(self.radii, self.graph_volume, self.base_volume, self.base_area):
            w.writerow([fmt(R), fmt(gv), fmt(bv), fmt(ba), fmt(self.constant * (bv + ba))])
        return buf.getvalue()


def li_wang_constant(g: GraphSurface, H_sup: Optional[float] = None) -> float:
    su = float(np.abs(g.u.values).max())
    sH = float(np.abs(mean_curvature_field(g).values).max()) if H_sup is None else abs(H_sup)
    return M_DIM * su * sH + 1.0 + su


def li_wang_check(g: GraphSurface, o: int, radii, H_sup: Optional[float] = None) -> LiWangReport:
    """``vol B_R^Sigma <= C (vol(M n B_R) + Area(M n dB_R))`` at the given radii."""
    C = li_wang_constant(g, H_sup)
    top = graph_ball_growth(g, o, radii)
    bot = ball_growth_samples(g.base, o, radii)
    rhs = C * (bot.volumes + bot.areas)
    bad = int(np.sum(top.volumes > rhs * (1 + 1e-12)))
    return LiWangReport(C, list(map(float, radii)), top.volumes.tolist(), bot.volumes.tolist(), bot.areas.tolist(), bad)


# ----------------------------------------------------------------------------
# Liouville probe
# ----------------------------------------------------------------------------
@dataclass
class LiouvilleReport:
    status: str
    radii: List[float]
    energy: List[float]
    area: List[float]
    fd_ratio: List[float]
    fd_bound: List[float]
    fd_holds: List[bool]
    integrated_bound: List[float]
    integrated_holds: List[bool]
    exceptions: List[dict] = field(default_factory=list)

    @property
    def fd_fraction(self) -> float:
        return float(np.mean(self.fd_holds)) if self.fd_holds else 1.0

    def to_dict(self) -> dict:
        return dict(asdict(self), fd_fraction=self.fd_fraction)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "energy", "area", "fd_ratio", "fd_bound", "fd_holds", "integrated_bound", "integrated_holds"])
        n = len(self.radii)
        pad = lambda xs: list(xs) + [float("nan")] * (n - len(xs))
        for row in zip(self.radii, self.energy, self.area, pad(self.fd_ratio), pad(self.fd_bound),
                       list(self.fd_holds) + [""] * (n - len(self.fd_holds)), self.integrated_bound,
                       self.integrated_holds):
            w.writerow([fmt(x) if isinstance(x, float) else x for x in row])
        return buf.getvalue()


def liouville_probe(base: MeshManifold, u, o: int, radii, distance: Optional[ScalarField] = None) -> LiouvilleReport:
    """Tabulate ``E(R) = int_{B_R} e^u Phi(|grad u|) |grad u|^2`` and test ``E'/E^2 >= 1/Area``.

    u is shifted so that ``sup u = 0``.  The finite-difference ratio on
    ``[R_k, R_k+1]`` is compared with ``1/Area(R_k+1)``; the integrated
    consequence ``E(R_0) <= 1 / int_{R_0}^R Area^-1`` is checked at every R.
    """
    vals = np.asarray(u.values if isinstance(u, ScalarField) else u, dtype=float)
    if vals.shape != (base.n_vertices,):
        raise PreconditionViolated("height field does not match the base mesh")
    if np.any(np.isnan(vals)) or np.any(vals == np.inf):
        raise PreconditionViolated("u must be bounded above")
    if np.any(~np.isfinite(vals)):
        raise PreconditionViolated("u must be finite")
    radii = np.asarray(radii, dtype=float)
    vals = vals - vals.max()
    d = distance_field(base, o) if distance is None else distance
    table = ball_growth_samples(base, o, radii, d)
    g = GraphSurface.from_values(base, vals)
    t2 = g.grad_norm_sq
    dens = np.exp(vals)[base.triangles].mean(axis=1) * t2 / np.sqrt(1.0 + t2) / base.areas
    energy = np.array([float(np.sum(clip_sublevel(base, d.values, R)[0] * dens * base.areas)) for R in radii])
    area = table.areas
    if not np.any(t2 > 0):
        n = radii.size
        return LiouvilleReport("NoteConstant", radii.tolist(), energy.tolist(), area.tolist(), [], [], [],
                               [math.inf] * n, [True] * n)
    ratios, bounds, holds, exceptions = [], [], [], []
    for k in range(radii.size - 1):
        dR = radii[k + 1] - radii[k]
        Ek = energy[k]
        ratio = (energy[k + 1] - Ek) / (dR * Ek**2) if Ek > 0 else math.inf
        bound = 1.0 / area[k + 1] if area[k + 1] > 0 else math.inf
        ok = bool(ratio >= bound)
        ratios.append(float(ratio))
        bounds.append(float(bound))
        holds.append(ok)
        if not ok:
            exceptions.append({"R": float(radii[k]), "ratio": float(ratio), "bound": float(bound),
                               "shortfall": float(bound - ratio)})
    inv = np.where(area > 0, 1.0 / np.maximum(area, 1e-300), np.inf)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(radii))])
    ib = np.where(cum > 0, 1.0 / np.maximum(cum, 1e-300), np.inf)
    ih = [bool(energy[0] <= b * (1 + 1e-12)) for b in ib]
    status = "Holds" if all(holds) and all(ih) else "Exceptions"
    return LiouvilleReport(status, radii.tolist(), energy.tolist(), area.tolist(), ratios, bounds, holds,
                           ib.tolist(), ih, exceptions)


# ----------------------------------------------------------------------------
# slice theorem
# ----------------------------------------------------------------------------
@dataclass
class SliceReport:
    thresholds: List[float]
    superlevel_volumes: List[float]
    superlevel_touch_d0: List[bool]
    max_H: float
    case_a: bool
    case_c: bool
    boundary_flux_max: float
    T: float
    finite_projection: bool
    hypotheses_hold: bool
    classification: Optional[str]
    constancy_deficit: float
    tol_slice: float
    conclusion: str
    violated: bool
    verified: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "superlevel_volume", "touches_d0"])
        for t, v, k in zip(self.thresholds, self.superlevel_volumes, self.superlevel_touch_d0):
            w.writerow([fmt(t), fmt(v), k])
        return buf.getvalue()


def slice_report(
    g: GraphSurface,
    classification: Optional[str] = None,
    thresholds: Optional[Sequence[float]] = None,
    tol_H: float = 1e-6,
    tol_flux: float = 1e-10,
) -> SliceReport:
    """Check the hypotheses of the slice theorem for graphs and, when they hold on a
    Parabolic family, that u is constant within ``tol_slice = 10 h``.

    Discrete readings: H <= tol_H at interior vertices (else
    HypothesisViolation); case (a) is ``u = 0`` on D1 and ``u >= 0``; case (c) is
    ``du/dnu <= 0`` on every D1 edge; the projection is finite when no
    superlevel set ``{u >= t}``, t > 0, reaches the exhaustion boundary D0
    (empty sets count as finite).
    """
    base = g.base
    # gate on interior vertices: at D1 vertices the piecewise-constant boundary flux
    # makes H only first-order accurate
    interior = np.ones(base.n_vertices, dtype=bool)
    interior[base.boundary_vertices()] = False
    H = mean_curvature_field(g).values[interior]
    if H.size and H.max() > tol_H:
        raise HypothesisViolation(f"mean curvature {H.max():.4g} > 0 violates H <= 0")
    u = g.u.values
    h = mesh_size(base)
    tol_slice = 10.0 * h
    d1 = base.vertices_with(label="d1")
    d0 = base.vertices_with(label="d0")
    verified = ["H<=0"]
    case_a = bool(d1.size and np.abs(u[d1]).max() <= 1e-12 and u.min() >= -1e-12)
    grad = VectorField(base, np.einsum("tij,tj->ti", base.gram_inv, g.du))
    _, flux = boundary_fluxes(base, grad, "d1")
    flux_max = float(flux.max()) if flux.size else -math.inf
    case_c = bool(flux.size and flux_max <= tol_flux * max(1.0, base.edge_lengths.sum()))
    if case_a:
        verified.append("(a)")
    if case_c:
        verified.append("(c)")
    T = (max(float(u[d1].max()), 0.0) if d1.size else 0.0) + 1.0
    verified.append("T")
    top = float(u.max())
    if thresholds is None:
        thresholds = [top * f for f in (0.25, 0.5, 0.75, 0.9)] if top > 0 else []
    vols, touch = [], []
    on_d0 = np.zeros(base.n_vertices, dtype=bool)
    on_d0[d0] = True
    total = base.areas
    finite = True
    for t in thresholds:
        below, _ = clip_sublevel(base, u, t)
        vols.append(float(np.sum(total - below)))
        tch = bool(np.any((u >= t) & on_d0))
        touch.append(tch)
        if t > 0 and tch:
            finite = False
    if finite:
        verified.append("finite projection")
    deficit = float(u.max() - u.min())
    hyp = (case_a or case_c) and finite
    violated = False
    if deficit <= tol_slice and deficit == 0.0:
        conclusion = "u is constant: the graph is a slice"
    elif hyp and classification == "Parabolic":
        violated = deficit > tol_slice
        conclusion = (f"hypotheses hold on a parabolic family: constancy deficit {deficit:.4g} "
                      f"{'exceeds' if violated else 'within'} tol_slice {tol_slice:.4g}")
    elif hyp:
        conclusion = f"hypotheses hold but the family is {classification or 'unclassified'}; no assertion"
    else:
        conclusion = f"hypotheses not all verified ({', '.join(verified)}); deficit {deficit:.4g} carries no assertion"
    return SliceReport(list(map(float, thresholds)), vols, touch, float(H.max()) if H.size else 0.0, case_a, case_c, flux_max, T, finite,
                       hyp, classification, deficit, tol_slice, conclusion, violated, verified)
