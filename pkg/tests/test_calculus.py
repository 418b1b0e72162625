import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import square_mesh
from parlab.calculus import (
    ahlfors_family_study,
    ahlfors_report,
    boundary_fluxes,
    div_inequality_report,
    hat_pairings,
    interior_divergence,
    is_weak_neumann_subsolution,
    stokes_limit_study,
    stokes_residual,
    stokes_scale,
    weak_divergence_pairing,
    weak_laplacian_pairing,
)
from parlab.errors import EmptyBoundary, MeshMismatch, PreconditionViolated
from parlab.families import stock_family
from parlab.geometry import ScalarField, VectorField, build_annulus_mesh, build_model, build_model_mesh
from parlab.potential import solve_mixed_bvp, solve_neumann_poisson
from parlab.reproduce import stokes_source


def _random_mesh(kind: int, rng: np.random.Generator):
    if kind == 0:
        return square_mesh(int(rng.integers(2, 8)), float(rng.uniform(0.5, 3.0)), labels=("d0", "d1", "d0", "d1"))
    if kind == 1:
        return build_annulus_mesh(1.0, float(rng.uniform(1.5, 3.0)), float(rng.uniform(0.15, 0.4)))
    model = build_model(("euclidean", "hyperbolic", "cusp")[int(rng.integers(3))], sector_fraction=float(rng.uniform(0.2, 1.0)))
    return build_model_mesh(model, 1.0, float(rng.uniform(1.5, 3.0)), int(rng.integers(8, 24)), inner_label="d1")


# ----------------------------------------------------------------------------
# Stokes identity
# ----------------------------------------------------------------------------
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_stokes_residual_vanishes_on_random_fields(kind, seed):
    rng = np.random.default_rng(seed)
    mesh = _random_mesh(kind, rng)
    X = VectorField(mesh, rng.normal(size=(mesh.n_triangles, 2)) * 10.0 ** rng.uniform(-3, 3))
    assert stokes_residual(mesh, X) <= 1e-12 * stokes_scale(mesh, X)


def test_stokes_residual_non_finite_is_inf():
    m = square_mesh(2)
    v = np.zeros((m.n_triangles, 2))
    v[0, 0] = np.nan
    assert stokes_residual(m, VectorField(m, v)) == math.inf


def test_constant_field_has_no_divergence():
    m = square_mesh(4)
    X = VectorField.from_ambient(m, np.tile([0.3, -1.2], (m.n_triangles, 1)))
    assert abs(interior_divergence(m, X)) < 1e-14
    _, flux = boundary_fluxes(m, X)
    assert abs(flux.sum()) < 1e-14


def test_mesh_mismatch_rejected():
    a, b = square_mesh(2), square_mesh(3)
    with pytest.raises(MeshMismatch):
        stokes_residual(a, VectorField(b, np.zeros((b.n_triangles, 2))))


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_divergence_pairing_integrates_by_parts(x0, x1, a, b, c):
    # constant X, linear phi, whole boundary in D1: (div X, phi) = int phi div X = 0
    m = square_mesh(3, labels=("d1", "d1", "d1", "d1"))
    X = VectorField.from_ambient(m, np.tile([x0, x1], (m.n_triangles, 1)))
    phi = a + b * m.vertices[:, 0] + c * m.vertices[:, 1]
    assert abs(weak_divergence_pairing(m, X, phi)) < 1e-12


# ----------------------------------------------------------------------------
# weak pairings and Ahlfors
# ----------------------------------------------------------------------------
def test_laplacian_pairing_is_symmetric(annulus_010):
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=(2, annulus_010.n_vertices))
    assert weak_laplacian_pairing(annulus_010, u, v) == pytest.approx(weak_laplacian_pairing(annulus_010, v, u), rel=1e-12)
    assert weak_laplacian_pairing(annulus_010, u, np.ones_like(u)) == pytest.approx(0.0, abs=1e-11)


def test_tolerance_must_be_nonnegative(annulus_010):
    with pytest.raises(ValueError):
        is_weak_neumann_subsolution(annulus_010, np.zeros(annulus_010.n_vertices), -1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 1))
def test_subsolutions_obey_the_discrete_ahlfors_principle(seed, which):
    rng = np.random.default_rng(seed)
    if which == 0:
        m = square_mesh(int(rng.integers(3, 9)), labels=("d0", "d1", "d0", "d1"))
        data = {"bottom": float(rng.normal()), "top": float(rng.normal())}
    else:
        m = build_model_mesh(build_model("euclidean", sector_fraction=0.5), 1.0, 3.0, 16, inner_label="d1")
        data = {"outer": float(rng.normal())}
    f = ScalarField(m, -rng.uniform(0.1, 2.0, m.n_vertices))  # -Lap u = f < 0: subharmonic
    u = solve_mixed_bvp(m, data, f)
    assert is_weak_neumann_subsolution(m, u, tol=0.0).passed
    assert ahlfors_report(m, u).gap <= 0.0


def test_ahlfors_report_needs_boundary():
    m = square_mesh(3, labels=("d1", "d1", "d1", "d1"))
    with pytest.raises(EmptyBoundary):
        ahlfors_report(m, np.zeros(m.n_vertices))


def test_ahlfors_subregion_boundary():
    m = square_mesh(6, labels=("d1", "d1", "d1", "d1"))
    D = np.flatnonzero(m.vertices[:, 0] <= 0.5 + 1e-12)
    u = m.vertices[:, 0]
    rep = ahlfors_report(m, u, D)
    assert rep.gap == 0.0 and rep.sup_D == pytest.approx(0.5)


def test_ahlfors_family_study_half_plane():
    study = ahlfors_family_study(stock_family("half-plane", (2.0, 4.0, 6)))
    assert study.monotone and study.within_bound
    assert study.final_ratio <= 1e-2
    assert all(r.whole_mesh_gap <= 0 for r in study.rows)


# ----------------------------------------------------------------------------
# exhaustion studies
# ----------------------------------------------------------------------------
def _poisson_witness(name):
    fam = stock_family(name)
    meshes = [fam.mesh(j, "d1") for j in range(1, fam.j_max + 1)]

    def source(mesh):
        P = mesh.vertices
        return ScalarField(mesh, stokes_source(np.linalg.norm(P, axis=1), np.arctan2(P[:, 1], P[:, 0])))

    return meshes, source


def test_stokes_limit_verdicts():
    meshes, source = _poisson_witness("half-plane")
    flat = stokes_limit_study(meshes, lambda m, j: solve_neumann_poisson(m, source(m)).gradient())
    assert flat.verdict == "NotL2"
    meshes, source = _poisson_witness("h2-half")
    hyp = stokes_limit_study(meshes, lambda m, j: solve_neumann_poisson(m, source(m)).gradient())
    assert hyp.verdict == "StokesFails" and hyp.l2_bounded
    exact = stokes_limit_study(meshes, lambda m, j: VectorField(m, np.zeros((m.n_triangles, 2))))
    assert exact.verdict == "MatchesTheorem"


def test_div_inequality_on_neumann_fields():
    meshes, source = _poisson_witness("h2-half")
    inner = lambda m: m.vertices_with(marker="inner")

    def gen(m, j):
        f = source(m)
        return solve_neumann_poisson(m, f).gradient(), ScalarField(m, -f.values)

    rep = div_inequality_report(meshes, gen, inner, tol=0.05)
    assert rep.holds and rep.l2_bounded
    last = rep.rows[-1]
    assert last.int_f - last.d1_flux <= 0.05 * abs(last.int_f)


def test_div_inequality_precondition():
    meshes, source = _poisson_witness("h2-half")

    def gen(m, j):  # claims div X >= f for a positive f with X = 0
        return VectorField(m, np.zeros((m.n_triangles, 2))), ScalarField(m, np.ones(m.n_vertices))

    with pytest.raises(PreconditionViolated):
        div_inequality_report(meshes[:1], gen, lambda m: m.vertices_with(marker="inner"), tol=0.05)
