"""Mixed Dirichlet/Neumann solves, Dirichlet energy and condenser capacities."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Union

import numpy as np

from . import fem
from .errors import InvariantViolation, MonotonicityViolation
from .geometry.mesh import MeshManifold, ScalarField
from .geometry.model import ModelManifold
from .quadrature import adaptive_simpson, integrate_to_infinity

logger = logging.getLogger(__name__)

THETA_ZERO = 1e-2
RATIO_LO, RATIO_HI = 0.1, 0.9


def dirichlet_energy(mesh: MeshManifold, u: ScalarField) -> float:
    """Sum over triangles of ``|grad u|_g^2 * area_g``."""
    if u.mesh is not mesh and u.mesh.n_vertices != mesh.n_vertices:
        raise InvariantViolation("field does not live on this mesh")
    vals = np.asarray(u.values)
    d = fem.gradient_ref(mesh, vals)
    return float(np.sum(mesh.areas * np.einsum("ti,tij,tj->t", d, mesh.gram_inv, d)))


def _dirichlet_vertices(mesh: MeshManifold, dirichlet: Mapping[str, float]):
    value_at: Dict[int, float] = {}
    for marker, val in dirichlet.items():
        vs = mesh.vertices_with(marker=marker)
        if vs.size == 0:
            raise InvariantViolation(f"marker {marker!r} does not exist on this mesh")
        for v in vs.tolist():
            if v in value_at and value_at[v] != float(val):
                raise InvariantViolation(f"vertex {v} receives conflicting Dirichlet values")
            value_at[v] = float(val)
    idx = np.array(sorted(value_at), dtype=np.int64)
    return idx, np.array([value_at[i] for i in idx.tolist()])


def solve_mixed_bvp(
    mesh: MeshManifold,
    dirichlet: Mapping[str, float],
    source: Optional[ScalarField] = None,
) -> ScalarField:
    """P1 Galerkin solution of ``-Lap u = source`` with Dirichlet data on the listed
    markers and the natural zero-flux condition on every other boundary edge."""
    fixed, vals = _dirichlet_vertices(mesh, dirichlet)
    return ScalarField(mesh, _solve(mesh, fixed, vals, source))


def _solve(mesh, fixed, vals, source=None) -> np.ndarray:
    rhs = np.zeros(mesh.n_vertices)
    if source is not None:
        rhs = fem.mass(mesh) @ np.asarray(source.values)
    return fem.solve_dirichlet(fem.stiffness(mesh), rhs, fixed, vals)


def solve_neumann_poisson(mesh: MeshManifold, f: ScalarField, outer_marker: str = "outer") -> ScalarField:
    """``-Lap u = f`` with ``u = 0`` on ``outer_marker`` and zero flux elsewhere."""
    return solve_mixed_bvp(mesh, {outer_marker: 0.0}, f)


# ----------------------------------------------------------------------------
# condensers
# ----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Condenser:
    mesh: MeshManifold
    K: np.ndarray
    omega_marker: str = "outer"

    def __post_init__(self):
        K = np.unique(np.asarray(self.K, dtype=np.int64))
        object.__setattr__(self, "K", K)
        if K.size == 0:
            raise InvariantViolation("condenser plate K is empty")
        if K.min() < 0 or K.max() >= self.mesh.n_vertices:
            raise InvariantViolation("plate vertex out of range")
        outer = self.outer_vertices
        if outer.size == 0:
            raise InvariantViolation(f"no vertices carry the marker {self.omega_marker!r}")
        clash = np.intersect1d(K, outer)
        if clash.size:
            raise InvariantViolation(
                f"plate K touches the outer boundary at {clash.size} vertex(es); K must lie inside Omega"
            )

    @property
    def outer_vertices(self) -> np.ndarray:
        return self.mesh.vertices_with(marker=self.omega_marker)

    @classmethod
    def from_markers(cls, mesh: MeshManifold, k_marker: str = "inner", omega_marker: str = "outer") -> "Condenser":
        K = mesh.vertices_with(marker=k_marker)
        if K.size == 0:
            raise InvariantViolation(f"marker {k_marker!r} does not exist on this mesh")
        return cls(mesh, K, omega_marker)

    @classmethod
    def from_predicate(cls, mesh: MeshManifold, inside: Callable[[np.ndarray], np.ndarray], omega_marker="outer"):
        return cls(mesh, np.flatnonzero(inside(mesh.vertices)), omega_marker)

    def interface_edges(self) -> np.ndarray:
        """Edges joining a plate vertex to a non-plate vertex (the discrete boundary of K)."""
        inK = np.zeros(self.mesh.n_vertices, dtype=bool)
        inK[self.K] = True
        E = self.mesh.edges
        return E[inK[E[:, 0]] ^ inK[E[:, 1]]]


@dataclass
class CapacityResult:
    value: float
    potential: ScalarField
    energy_residual: float = 0.0

    def to_dict(self) -> dict:
        u = self.potential.values
        return {
            "value": self.value,
            "energy_residual": self.energy_residual,
            "n_vertices": int(u.size),
            "potential_min": float(u.min()),
            "potential_max": float(u.max()),
        }


def condenser_capacity(c: Condenser) -> CapacityResult:
    """Equilibrium potential (1 on K, 0 on the outer marker, Neumann elsewhere) and its energy."""
    mesh = c.mesh
    fixed = np.concatenate([c.K, c.outer_vertices])
    vals = np.concatenate([np.ones(c.K.size), np.zeros(c.outer_vertices.size)])
    order = np.argsort(fixed)
    u = ScalarField(mesh, _solve(mesh, fixed[order], vals[order]))
    value = dirichlet_energy(mesh, u)
    quad = float(u.values @ (fem.stiffness(mesh) @ u.values))
    return CapacityResult(value, u, abs(quad - value))


def harmonic_measure(mesh: MeshManifold, zero: np.ndarray, one: np.ndarray) -> ScalarField:
    """Discrete harmonic function equal to 0 on ``zero`` and 1 on ``one``, Neumann elsewhere.

    Vertices in both sets take the value 0 (corner vertices shared by the true
    boundary and an exhaustion arc belong to the true boundary).
    """
    zero = np.unique(np.asarray(zero, dtype=np.int64))
    one = np.setdiff1d(np.asarray(one, dtype=np.int64), zero)
    fixed = np.concatenate([zero, one])
    vals = np.concatenate([np.zeros(zero.size), np.ones(one.size)])
    order = np.argsort(fixed)
    return ScalarField(mesh, _solve(mesh, fixed[order], vals[order]))


# ----------------------------------------------------------------------------
# radial oracles
# ----------------------------------------------------------------------------
def radial_capacity_oracle(model: ModelManifold, a: float, b: float = math.inf) -> float:
    """``omega / int_a^b f^-(m-1)``; a divergent improper integral gives 0."""
    if not 0 < a < b:
        raise ValueError("radial condenser needs 0 < a < b")
    m = model.dim

    def g(t):
        w = model.warp(t)
        return math.inf if w == 0.0 else w ** (1 - m)

    if math.isinf(b):
        res = integrate_to_infinity(g, a)
        if res.divergent:
            return 0.0
        integral = res.value
    else:
        integral = adaptive_simpson(g, a, b)
    if math.isinf(integral):
        return 0.0
    return model.omega / integral


def radial_fem_capacity(model: ModelManifold, rings: np.ndarray, probe: Optional[float] = None):
    """1-D P1 capacity of the radial condenser between ``rings[0]`` and ``rings[-1]``.

    Each element gets the weight ``f(r_mid)^(m-1) / dr``.  Returns the capacity and
    the potential at radius ``probe`` (linear interpolation).
    """
    r = np.asarray(rings, dtype=float)
    dr = np.diff(r)
    mid = 0.5 * (r[1:] + r[:-1])
    w = np.array([model.warp(x) ** (model.dim - 1) for x in mid]) / dr
    resistance = np.sum(1.0 / w)
    cap = model.omega / resistance
    u_o = math.nan
    if probe is not None:
        drop = np.concatenate([[0.0], np.cumsum(1.0 / w)]) / resistance
        u_o = float(np.interp(probe, r, 1.0 - drop))
    return cap, u_o


# ----------------------------------------------------------------------------
# exhaustions
# ----------------------------------------------------------------------------
@dataclass
class ExhaustionMember:
    j: int
    outer_radius: float
    capacity: float
    potential_at_o: float


class ExhaustionFamily(Protocol):
    name: str

    def capacity_member(self, j: int, K=None) -> ExhaustionMember: ...


@dataclass
class SequenceVerdict:
    classification: str
    limit_estimate: float
    note: str


def classify_sequence(
    values: Sequence[float],
    radii: Optional[Sequence[float]] = None,
    theta_zero: float = THETA_ZERO,
) -> SequenceVerdict:
    """Decide whether a positive non-increasing sequence tends to zero.

    The test runs on the reciprocals ("resistances"): geometric contraction of
    their increments (ratio <= 0.9) means a finite resistance and a positive
    limit, increments that do not contract mean the values decay to zero.
    """
    v = np.asarray(values, dtype=float)
    slope = math.nan
    if radii is not None and len(radii) >= 2 and np.all(v > 0):
        slope = float(np.polyfit(np.log(radii), np.log(v), 1)[0])
    tag = f"log-log slope {slope:.4g}; " if math.isfinite(slope) else ""
    if v.size < 4:
        return SequenceVerdict("Undetermined", math.nan, tag + f"need at least 4 members, have {v.size}")
    if v[-1] <= theta_zero * v[0]:
        return SequenceVerdict("DecaysToZero", 0.0, tag + f"last value below theta_zero={theta_zero:g} x first")
    rho = 1.0 / v
    inc = np.diff(rho)
    if np.any(inc < -1e-9 * rho[1:]):
        return SequenceVerdict("Undetermined", math.nan, tag + "sequence is not monotone")
    if inc[-1] <= 1e-12 * rho[-1]:
        return SequenceVerdict("PositiveLimit", float(v[-1]), tag + "reciprocal increments negligible")
    ratios = inc[1:] / np.maximum(inc[:-1], 1e-300)
    last = ratios[-2:]
    rtxt = ", ".join(f"{x:.4g}" for x in last)
    if np.all(last >= RATIO_HI):
        return SequenceVerdict(
            "DecaysToZero", 0.0, tag + f"reciprocal increments do not contract (ratios {rtxt}); reciprocal diverges"
        )
    if np.all(last <= RATIO_HI):
        r = float(last[-1])
        rho_inf = rho[-1] + inc[-1] * r / (1.0 - r)
        note = f"geometric contraction of reciprocal increments (ratios {rtxt})"
        if r < RATIO_LO:
            note += "; ratio below window, limit effectively reached"
        return SequenceVerdict("PositiveLimit", float(1.0 / rho_inf), tag + note)
    return SequenceVerdict("Undetermined", math.nan, tag + f"mixed increment ratios ({rtxt})")


@dataclass
class ExhaustionReport:
    rows: List[ExhaustionMember]
    limit_estimate: float
    classification: str
    extrapolation_note: str
    family: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "outer_radius", "capacity", "potential_at_o"])
        for r in self.rows:
            w.writerow([r.j, fmt(r.outer_radius), fmt(r.capacity), fmt(r.potential_at_o)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "family": self.family,
            "classification": self.classification,
            "limit_estimate": self.limit_estimate,
            "extrapolation_note": self.extrapolation_note,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def fmt(x: float) -> str:
    """17 significant digits: lossless for doubles."""
    return format(float(x), ".17g")


def absolute_capacity(family: ExhaustionFamily, K=None, j_max: int = 5, rel_slack: float = 1e-9) -> ExhaustionReport:
    """Capacities of ``(K, Omega_j)`` for j = 1..j_max and their classified limit."""
    if j_max < 1:
        raise ValueError("j_max must be positive")
    rows = [family.capacity_member(j, K) for j in range(1, j_max + 1)]
    for prev, cur in zip(rows, rows[1:]):
        if cur.capacity > prev.capacity * (1.0 + rel_slack) + 1e-300:
            raise MonotonicityViolation(
                f"capacity increased from {prev.capacity:.12g} (j={prev.j}) to {cur.capacity:.12g} (j={cur.j})"
            )
    verdict = classify_sequence([r.capacity for r in rows], [r.outer_radius for r in rows])
    return ExhaustionReport(rows, verdict.limit_estimate, verdict.classification, verdict.note, getattr(family, "name", ""))
