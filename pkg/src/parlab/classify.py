"""Parabolicity verdicts: integral growth criteria, capacity decay, walks and D-tests."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from . import fem
from .calculus import ahlfors_family_study, ahlfors_report
from .errors import InsufficientData, NonAbsorbingConfiguration, ObtuseMeshUnsupported, PreconditionViolated
from .geometry.distance import BallGrowthTable
from .geometry.mesh import MeshManifold
from .geometry.model import ModelManifold
from .potential import absolute_capacity, classify_sequence, fmt, harmonic_measure
from .quadrature import adaptive_simpson

EPS_SLOPE = 0.1
MIN_WINDOWS = 10

VERDICTS = ("Parabolic", "NonParabolic", "Inconclusive")
_FROM_SEQUENCE = {"DecaysToZero": "Parabolic", "PositiveLimit": "NonParabolic", "Undetermined": "Inconclusive"}


@dataclass
class Classification:
    verdict: str
    method: str
    evidence: List[dict] = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "method": self.method, "note": self.note, "evidence": self.evidence}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def evidence_csv(self) -> str:
        if not self.evidence:
            return ""
        buf = io.StringIO()
        cols = list(self.evidence[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.evidence:
            w.writerow([fmt(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        return buf.getvalue()


# ----------------------------------------------------------------------------
# integral criteria
# ----------------------------------------------------------------------------
def _table_integral(table: BallGrowthTable, column: np.ndarray, lo: float, hi: float, weight) -> float:
    r = table.radii
    inside = r[(r > lo) & (r < hi)]
    grid = np.concatenate([[lo], inside, [hi]])
    vals = np.interp(grid, r, column)
    with np.errstate(divide="ignore"):
        y = weight(grid) / vals
    return float(np.trapezoid(y, grid)) if hasattr(np, "trapezoid") else float(np.trapz(y, grid))


def _window_criterion(source, R_max: float, R_min: Optional[float], kind: str, eps_slope: float) -> Classification:
    method = "VolumeCriterion" if kind == "volume" else "AreaCriterion"
    if isinstance(source, ModelManifold):
        R_min = 1.0 if R_min is None else R_min
        fn = source.ball_volume if kind == "volume" else source.sphere_area

        def integrand(R):
            d = fn(R)
            num = R if kind == "volume" else 1.0
            return math.inf if d == 0.0 else num / d

        window = lambda lo, hi: adaptive_simpson(integrand, lo, hi)
    elif isinstance(source, BallGrowthTable):
        R_min = float(source.radii[0]) if R_min is None else R_min
        if R_max > source.radii[-1] * (1 + 1e-12) or R_min < source.radii[0] * (1 - 1e-12):
            raise InsufficientData("window range exceeds the tabulated radii")
        col = source.volumes if kind == "volume" else source.areas
        wt = (lambda R: R) if kind == "volume" else (lambda R: np.ones_like(R))
        window = lambda lo, hi: _table_integral(source, col, lo, hi, wt)
    else:
        raise TypeError("source must be a ModelManifold or a BallGrowthTable")
    if R_min <= 0:
        raise InsufficientData("windows need a positive starting radius")
    n = int(math.floor(math.log2(R_max / R_min) + 1e-12))
    if n < MIN_WINDOWS:
        raise InsufficientData(f"only {n} dyadic windows fit in [{R_min:g}, {R_max:g}]; need {MIN_WINDOWS}")
    evidence = []
    sums = []
    for k in range(n):
        lo, hi = R_min * 2.0**k, R_min * 2.0 ** (k + 1)
        w = window(lo, hi)
        sums.append(w)
        evidence.append({"window": k, "lo": lo, "hi": hi, "sum": float(w)})
    sums = np.array(sums, dtype=float)
    tail = sums[-max(5, n // 2):]
    if np.any(~np.isfinite(tail)) or np.any(np.isnan(tail)):
        slope = math.inf
    elif np.any(tail <= 0):
        slope = -math.inf
    else:
        slope = float(np.polyfit(np.arange(tail.size), np.log2(tail), 1)[0])
    verdict = "Parabolic" if slope >= -eps_slope else "Inconclusive"
    note = f"log2 slope of the last {tail.size} window sums {slope:.4g} (threshold -{eps_slope:g})"
    return Classification(verdict, method, evidence, note)


def volume_criterion(source, R_max: float = 1024.0, R_min: Optional[float] = None, eps_slope: float = EPS_SLOPE):
    """Divergence of ``int R / vol B_R``: Parabolic when dyadic window sums do not decay."""
    return _window_criterion(source, R_max, R_min, "volume", eps_slope)


def area_criterion(source, R_max: float = 1024.0, R_min: Optional[float] = None, eps_slope: float = EPS_SLOPE):
    """Divergence of ``int 1 / Area(d0 B_R)``: Parabolic when dyadic window sums do not decay."""
    return _window_criterion(source, R_max, R_min, "area", eps_slope)


# ----------------------------------------------------------------------------
# capacity decay and D-test
# ----------------------------------------------------------------------------
def capacity_decay_test(family, K=None, j_max: Optional[int] = None) -> Classification:
    j_max = j_max or family.j_max
    rep = absolute_capacity(family, K, j_max)
    ev = [asdict(r) for r in rep.rows]
    for row in ev:
        row["capacity"] = float(row["capacity"])
    note = f"{rep.classification}; limit {rep.limit_estimate:.6g}; {rep.extrapolation_note}"
    return Classification(_FROM_SEQUENCE[rep.classification], "CapacityDecay", ev, note)


def d_parabolicity_test(family, j_max: Optional[int] = None) -> Classification:
    """Harmonic measure of the exhaustion arc seen from o, with u = 0 on the true boundary."""
    j_max = j_max or family.j_max
    ev = []
    for j in range(1, j_max + 1):
        mesh = family.mesh(j, inner_label="d1")
        d1 = mesh.vertices_with(label="d1")
        if d1.size == 0:
            raise PreconditionViolated(f"member {j} has no true-boundary (D1) edges")
        u = harmonic_measure(mesh, d1, mesh.vertices_with(marker="outer"))
        ev.append({"j": j, "outer_radius": family.outer_radius(j), "u_at_o": float(u.values[family.probe_vertex(mesh)])})
    seq = classify_sequence([e["u_at_o"] for e in ev], [e["outer_radius"] for e in ev])
    return Classification(_FROM_SEQUENCE[seq.classification], "DParabolicTest", ev, seq.note)


# ----------------------------------------------------------------------------
# reflected random walk
# ----------------------------------------------------------------------------
@dataclass
class WalkEstimate:
    trials: int
    hits_K: int
    p_hat: float
    std_err: float
    seed: int
    start: int = -1
    mean_steps: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class _Chain:
    indptr: np.ndarray
    indices: np.ndarray
    keys: np.ndarray  # row id + cumulative probability, globally increasing


def transition_chain(mesh: MeshManifold, rel_tol: float = 1e-12) -> _Chain:
    """Vertex walk with probabilities proportional to the positive stiffness couplings."""
    w = fem.edge_weights(mesh)
    if w.size and w.min() < -rel_tol * np.abs(w).max():
        raise ObtuseMeshUnsupported(f"negative coupling {w.min():.3e}: the walk needs non-negative weights")
    E = mesh.edges
    keep = w > rel_tol * np.abs(w).max()
    i = np.concatenate([E[keep, 0], E[keep, 1]])
    j = np.concatenate([E[keep, 1], E[keep, 0]])
    ww = np.concatenate([w[keep], w[keep]])
    order = np.lexsort((j, i))
    i, j, ww = i[order], j[order], ww[order]
    n = mesh.n_vertices
    counts = np.bincount(i, minlength=n)
    if np.any(counts == 0):
        raise NonAbsorbingConfiguration("isolated vertex without positive couplings")
    indptr = np.concatenate([[0], np.cumsum(counts)])
    cum = np.cumsum(ww)
    row_total = cum[indptr[1:] - 1]
    row_start = np.concatenate([[0.0], row_total[:-1]])
    cp = (cum - np.repeat(row_start, counts)) / np.repeat(row_total - row_start, counts)
    cp[indptr[1:] - 1] = 1.0
    return _Chain(indptr, j, i + cp)


def _run_chunk(chain: _Chain, status: np.ndarray, start: int, n: int, rng: np.random.Generator, max_steps: int):
    pos = np.full(n, start, dtype=np.int64)
    alive = np.arange(n)
    hits = 0
    steps = 0
    for _ in range(max_steps):
        if alive.size == 0:
            break
        cur = pos[alive]
        k = np.searchsorted(chain.keys, cur + rng.random(cur.size), side="right")
        k = np.minimum(k, chain.indptr[cur + 1] - 1)
        nxt = chain.indices[k]
        steps += cur.size
        s = status[nxt]
        hits += int(np.count_nonzero(s == 1))
        pos[alive] = nxt
        alive = alive[s == 0]
    else:
        raise NonAbsorbingConfiguration(f"{alive.size} walkers still free after {max_steps} steps")
    return hits, steps


def reflected_walk_test(
    mesh: MeshManifold,
    K,
    outer_marker: str,
    trials: int,
    seed: int,
    start: int,
    chunk: int = 25_000,
    max_steps: int = 10_000_000,
    threads: Optional[int] = None,
) -> WalkEstimate:
    """Monte Carlo probability that the walk from ``start`` hits K before the outer marker.

    D1 vertices simply keep walking (reflection).  Chunk c of the trials draws
    from ``Philox(seed).jumped(c)``, so the estimate does not depend on the
    number of threads.
    """
    K = np.unique(np.asarray(K, dtype=np.int64))
    outer = mesh.vertices_with(marker=outer_marker)
    if outer.size == 0:
        raise NonAbsorbingConfiguration(f"no vertices carry the marker {outer_marker!r}")
    if K.size == 0:
        raise NonAbsorbingConfiguration("target set K is empty")
    if trials < 1:
        raise ValueError("trials must be positive")
    status = np.zeros(mesh.n_vertices, dtype=np.int8)
    status[outer] = 2
    status[K] = 1
    if status[start] != 0:
        raise NonAbsorbingConfiguration("start vertex lies in K or on the outer boundary")
    chain = transition_chain(mesh)
    sizes = [min(chunk, trials - c) for c in range(0, trials, chunk)]
    base = np.random.Philox(key=int(seed) & (2**64 - 1))

    def job(c):
        rng = np.random.Generator(base.jumped(c))
        return _run_chunk(chain, status, start, sizes[c], rng, max_steps)

    threads = threads or int(os.environ.get("PARLAB_THREADS", "1") or 1)
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(job, range(len(sizes))))
    else:
        results = [job(c) for c in range(len(sizes))]
    hits = sum(h for h, _ in results)
    steps = sum(s for _, s in results)
    p = hits / trials
    return WalkEstimate(trials, hits, p, math.sqrt(p * (1.0 - p) / trials), int(seed), int(start), steps / trials)


# ----------------------------------------------------------------------------
# implication chain
# ----------------------------------------------------------------------------
@dataclass
class ImplicationEntry:
    family: str
    verdict: str
    injected: bool
    checked: bool
    ahlfors_trend: Optional[str] = None
    ahlfors_max_on_boundary: Optional[bool] = None
    d_verdict: Optional[str] = None
    violations: List[str] = field(default_factory=list)


@dataclass
class ImplicationReport:
    entries: List[ImplicationEntry]

    @property
    def violations(self) -> List[str]:
        return [f"{e.family}: {v}" for e in self.entries for v in e.violations]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations, "entries": [asdict(e) for e in self.entries]}


def implication_check(suite: Sequence, j_max: Optional[int] = None) -> ImplicationReport:
    """For every family classified Parabolic, test the Ahlfors (A) and D consequences.

    Suite items are families or ``(family, label)`` pairs; a label overrides the
    capacity verdict (used to inject a false premise).  Report only.
    """
    entries = []
    for item in suite:
        family, label = (item if isinstance(item, tuple) else (item, None))
        verdict = label or capacity_decay_test(family, j_max=j_max).verdict
        e = ImplicationEntry(family.name, verdict, label is not None, verdict == "Parabolic")
        if e.checked:
            if family.model.dim != 2:
                e.violations.append("cannot mesh a family of dimension > 2; implications untested")
            else:
                study = ahlfors_family_study(family, j_max)
                e.ahlfors_trend = study.trend
                e.ahlfors_max_on_boundary = all(r.whole_mesh_gap <= 0.0 for r in study.rows)
                if study.trend == "PositiveLimit":
                    e.violations.append("(A) bounded subharmonic fields keep a positive Ahlfors gap")
                if not e.ahlfors_max_on_boundary:
                    e.violations.append("(A) Neumann-harmonic field exceeds its d0 supremum")
                d = d_parabolicity_test(family, j_max)
                e.d_verdict = d.verdict
                if d.verdict == "NonParabolic":
                    e.violations.append("(D) harmonic measure of infinity stays positive")
        entries.append(e)
    return ImplicationReport(entries)
