"""Theorem-reproduction pipelines: each builds its configured family, runs the
module checks and asserts the checkable conclusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.integrate import quad

from .calculus import ahlfors_family_study, stokes_limit_study
from .classify import implication_check
from .errors import HypothesisViolation
from .families import FIVE_STOCK, stock_family
from .geometry import ScalarField, build_disk_mesh, build_halfannulus_mesh, build_halfdisk_mesh
from .graph import (
    GraphSurface,
    height_estimate_check,
    li_wang_check,
    liouville_probe,
    slice_report,
    solve_cmc_dirichlet,
)
from .output import csv_table
from .potential import solve_neumann_poisson


@dataclass
class Reproduction:
    theorem: str
    passed: bool
    summary: dict
    tables: Dict[str, str] = field(default_factory=dict)
    failure: Optional[str] = None

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "passed": self.passed, "failure": self.failure, "summary": self.summary}


def _exhaustion(cfg: dict):
    ex = cfg.get("exhaustion")
    return None if ex is None else (float(ex[0]), float(ex[1]), int(ex[2]))


def bump(t) -> np.ndarray:
    """Smooth bump supported on |t| < 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


# ----------------------------------------------------------------------------
AHLFORS_EXHAUSTION = (2.0, 4.0, 6)  # outer radius 2048: the gap decays like 1/R


def reproduce_ahlfors(cfg: dict) -> Reproduction:
    fam = stock_family(cfg.get("family", "half-plane"), _exhaustion(cfg) or AHLFORS_EXHAUSTION)
    study = ahlfors_family_study(fam)
    failure = None
    if not study.monotone:
        failure = "gap sequence is not monotone"
    elif study.final_ratio > 1e-2:
        failure = f"final gap ratio {study.final_ratio:.4g} exceeds 1e-2"
    elif any(r.whole_mesh_gap > 0 for r in study.rows):
        row = next(r for r in study.rows if r.whole_mesh_gap > 0)
        failure = f"row j={row.j}: whole-mesh gap {row.whole_mesh_gap:.4g} > 0"
    return Reproduction("ahlfors", failure is None, study.to_dict(), {"ahlfors.csv": study.to_csv()}, failure)


# ----------------------------------------------------------------------------
STOKES_CENTER = (1.5, 0.3)  # radial centre and half-width of the source
STOKES_ANGLE = (math.pi / 4, math.pi / 8)


def stokes_source(r, theta) -> np.ndarray:
    (rc, rw), (tc, tw) = STOKES_CENTER, STOKES_ANGLE
    return bump((np.asarray(r) - rc) / rw) * bump((np.asarray(theta) - tc) / tw)


def stokes_source_integral(warp: Callable[[float], float]) -> float:
    """``int f`` with area element ``warp(r) dr dtheta``, by nested adaptive quadrature."""
    (rc, rw), (tc, tw) = STOKES_CENTER, STOKES_ANGLE

    def inner(r):
        return quad(lambda t: float(stokes_source(r, t)), tc - tw, tc + tw, epsabs=1e-14, epsrel=1e-12)[0]

    return quad(lambda r: warp(r) * inner(r), rc - rw, rc + rw, epsabs=1e-14, epsrel=1e-12)[0]


def stokes_witness(name: str, exhaustion=None):
    """Neumann-Poisson field ``X = grad u``, ``-Lap u = f``, along a stock family."""
    fam = stock_family(name, exhaustion)
    meshes = [fam.mesh(j, "d1") for j in range(1, fam.j_max + 1)]

    def gen(mesh, j):
        X = mesh.vertices
        f = stokes_source(np.linalg.norm(X, axis=1), np.arctan2(X[:, 1], X[:, 0]))
        return solve_neumann_poisson(mesh, ScalarField(mesh, f)).gradient()

    warp = np.sinh if fam.model.kind == "hyperbolic" else (lambda r: r)
    expected = -stokes_source_integral(warp)
    return stokes_limit_study(meshes, gen, expected_gap=expected)


def reproduce_stokes(cfg: dict) -> Reproduction:
    ex = _exhaustion(cfg)
    witness = stokes_witness("h2-half", ex)
    control = stokes_witness("half-plane", ex)
    failure = None
    if witness.verdict != "StokesFails":
        failure = f"hyperbolic witness verdict {witness.verdict}"
    elif witness.relative_error > 0.05:
        failure = f"witness gap off by {witness.relative_error:.3g} (> 5%)"
    elif control.verdict == "StokesFails":
        failure = "flat half-plane control reports a failure of Stokes"
    summary = {"witness": witness.to_dict(), "control": control.to_dict(), "verdict": witness.note}
    tables = {"stokes_witness.csv": witness.to_csv(), "stokes_control.csv": control.to_csv()}
    return Reproduction("stokes", failure is None, summary, tables, failure)


# ----------------------------------------------------------------------------
HEIGHT_RHOS = (0.5, 0.7, 0.9, 0.97)


def reproduce_height(cfg: dict) -> Reproduction:
    h = float(cfg.get("h", 0.02))
    H = float(cfg.get("H", 1.0))
    rows, failure = [], None
    for rho in cfg.get("rhos", HEIGHT_RHOS):
        mesh = build_disk_mesh(rho, h)
        res = solve_cmc_dirichlet(mesh, H, {"outer": 0.0}, tol=float(cfg.get("tol", 1e-10)))
        if res.status != "Converged":
            failure = failure or f"rho={rho}: solver {res.status} ({res.message})"
            rows.append((rho, res.status, math.nan, math.nan, math.nan, math.nan, False))
            continue
        g = GraphSurface.from_values(mesh, res.u)
        rep = height_estimate_check(g, H)
        r = np.linalg.norm(mesh.vertices, axis=1)
        exact = np.sqrt(1 / H**2 - r**2) - math.sqrt(1 / H**2 - rho**2)
        err = float(np.abs(res.u.values - exact).max())
        rows.append((rho, res.status, rep.max_u, float(exact.max()), err, rep.slack, rep.passed))
        if not rep.passed:
            failure = failure or f"rho={rho}: heights leave [0, 1/H]"
        elif rep.slack < 0:
            failure = failure or f"rho={rho}: negative slack {rep.slack:.4g}"
    slacks = [row[5] for row in rows if row[1] == "Converged"]
    if failure is None and any(b >= a for a, b in zip(slacks, slacks[1:])):
        failure = "slack does not decrease as rho grows"
    table = csv_table(["rho", "status", "max_u", "closed_form_max", "linf_error", "slack", "passed"], rows)
    summary = {"H": H, "h": h, "slack_decreasing": failure is None or "slack" not in failure}
    return Reproduction("height", failure is None, summary, {"height.csv": table}, failure)


# ----------------------------------------------------------------------------
def _fan_data(P, amplitude=0.1):
    theta = np.arctan2(P[:, 1], P[:, 0])
    return amplitude * 0.5 * (1 + np.cos(2 * theta))


def slice_suite(radii=(4.0, 8.0, 16.0), cells: int = 40) -> List[dict]:
    """Minimal graphs over half-disks and half-annuli with Neumann walls, the zero
    graph on every base, and the spherical cap (which must be rejected by the H <= 0 gate)."""
    out = []
    for R in radii:
        bases = [
            ("half-disk", build_halfdisk_mesh(R, R / cells), {"outer": _fan_data}),
            ("half-annulus", build_halfannulus_mesh(1.0, R, R / cells, inner_label="d1"), {"outer": _fan_data, "inner": 0.0}),
        ]
        for name, mesh, data in bases:
            res = solve_cmc_dirichlet(mesh, 0.0, data, neumann=True)
            out.append({"case": f"{name} R={R:g}", "report": slice_report(GraphSurface.from_values(mesh, res.u), "Parabolic")})
            zero = GraphSurface.from_values(mesh, np.zeros(mesh.n_vertices))
            out.append({"case": f"{name} R={R:g} zero", "report": slice_report(zero, "Parabolic")})
    disk = build_disk_mesh(0.9, 0.05)
    r = np.linalg.norm(disk.vertices, axis=1)
    try:
        slice_report(GraphSurface.from_values(disk, np.sqrt(1 - r**2)))
        out.append({"case": "spherical cap", "report": None, "rejected": False})
    except HypothesisViolation:
        out.append({"case": "spherical cap", "report": None, "rejected": True})
    return out


def reproduce_slice(cfg: dict) -> Reproduction:
    suite = slice_suite()
    rows, failure = [], None
    for item in suite:
        rep = item["report"]
        if rep is None:
            rows.append((item["case"], "", "", "", "", "", "rejected" if item["rejected"] else "accepted"))
            if not item["rejected"]:
                failure = failure or "spherical cap passed the H <= 0 gate"
            continue
        rows.append((item["case"], rep.max_H, rep.case_a, rep.case_c, rep.finite_projection,
                     rep.constancy_deficit, "violated" if rep.violated else rep.conclusion))
        if rep.violated:
            failure = failure or f"{item['case']}: {rep.conclusion}"
    table = csv_table(["case", "max_H", "case_a", "case_c", "finite_projection", "constancy_deficit", "outcome"], rows)
    return Reproduction("slice", failure is None, {"cases": len(suite)}, {"slice.csv": table}, failure)


# ----------------------------------------------------------------------------
def reproduce_liouville(cfg: dict) -> Reproduction:
    rows, tables, failure = [], {}, None
    holds = total = 0
    for R in cfg.get("radii", (4.0, 8.0, 16.0)):
        mesh = build_halfdisk_mesh(R, R / 40)
        res = solve_cmc_dirichlet(mesh, 0.0, {"outer": lambda P: np.cos(2 * np.arctan2(P[:, 1], P[:, 0]))}, neumann=True)
        o = int(np.argmin(np.linalg.norm(mesh.vertices - [0.0, 0.1 * R], axis=1)))
        rep = liouville_probe(mesh, res.u, o, np.linspace(0.1 * R, 0.85 * R, 16))
        holds += sum(rep.fd_holds)
        total += len(rep.fd_holds)
        tables[f"liouville_R{R:g}.csv"] = rep.to_csv()
        rows.append((R, rep.status, rep.fd_fraction, all(rep.integrated_holds), len(rep.exceptions)))
        if not all(rep.integrated_holds):
            failure = failure or f"R={R:g}: integrated bound fails"
    fraction = holds / total if total else 1.0
    if failure is None and fraction < 0.95:
        failure = f"finite-difference inequality holds at only {fraction:.3f} of radii"
    tables["liouville.csv"] = csv_table(["R", "status", "fd_fraction", "integrated_holds", "exceptions"], rows)
    return Reproduction("liouville", failure is None, {"fd_fraction": fraction}, tables, failure)


# ----------------------------------------------------------------------------
def reproduce_liwang(cfg: dict) -> Reproduction:
    rows, tables, failure = [], {}, None
    h = float(cfg.get("h", 0.04))
    for rho in cfg.get("rhos", (0.5, 0.7, 0.9)):
        mesh = build_disk_mesh(rho, h)
        res = solve_cmc_dirichlet(mesh, 1.0, {"outer": 0.0})
        g = GraphSurface.from_values(mesh, res.u)
        o = int(np.argmin(np.linalg.norm(mesh.vertices, axis=1)))
        radii = np.linspace(0.1, 0.95, 10) * rho
        rep = li_wang_check(g, o, radii)
        tables[f"liwang_rho{rho:g}.csv"] = rep.to_csv()
        rows.append((rho, rep.constant, rep.violations))
        if rep.violations:
            failure = failure or f"rho={rho:g}: {rep.violations} radii violate the volume bound"
    tables["liwang.csv"] = csv_table(["rho", "constant", "violations"], rows)
    return Reproduction("liwang", failure is None, {"h": h}, tables, failure)


# ----------------------------------------------------------------------------
def reproduce_implications(cfg: dict) -> Reproduction:
    ex = _exhaustion(cfg)
    report = implication_check([stock_family(n, ex) for n in cfg.get("families", FIVE_STOCK)])
    rows = [(e.family, e.verdict, e.checked, e.ahlfors_trend or "", e.d_verdict or "", "; ".join(e.violations))
            for e in report.entries]
    table = csv_table(["family", "verdict", "checked", "ahlfors_trend", "d_verdict", "violations"], rows)
    failure = None if report.ok else report.violations[0]
    return Reproduction("implications", report.ok, report.to_dict(), {"implications.csv": table}, failure)


THEOREMS: Dict[str, Callable[[dict], Reproduction]] = {
    "ahlfors": reproduce_ahlfors,
    "stokes": reproduce_stokes,
    "height": reproduce_height,
    "slice": reproduce_slice,
    "liouville": reproduce_liouville,
    "liwang": reproduce_liwang,
    "implications": reproduce_implications,
}
