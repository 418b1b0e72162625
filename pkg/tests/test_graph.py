import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import square_mesh
from parlab.errors import HypothesisViolation, PreconditionViolated
from parlab.geometry import build_disk_mesh, build_halfdisk_mesh, build_model, build_model_mesh
from parlab.graph import (
    GraphSurface,
    auxiliary_subsolution_check,
    cmc_energy,
    cmc_jacobian,
    cmc_residual,
    height_estimate_check,
    li_wang_check,
    liouville_probe,
    mean_curvature_field,
    slice_report,
    solve_cmc_dirichlet,
)

SQRT_019 = 0.43588989435406736  # sqrt(1 - 0.9^2)


def cap_heights(mesh, rho, H=1.0):
    r = np.linalg.norm(mesh.vertices, axis=1)
    return np.sqrt(1 / H**2 - r**2) - math.sqrt(1 / H**2 - rho**2)


@pytest.fixture(scope="module")
def disk09():
    return build_disk_mesh(0.9, 0.05)


# ----------------------------------------------------------------------------
# surface quantities
# ----------------------------------------------------------------------------
def test_tilted_plane_quantities():
    m = square_mesh(4)
    g = GraphSurface.from_values(m, m.vertices[:, 0])
    assert np.allclose(g.cos_theta, -1 / math.sqrt(2))
    assert g.area == pytest.approx(math.sqrt(2), rel=1e-14)
    assert np.allclose(mean_curvature_field(g).values, 0.0, atol=1e-12)


def test_constant_graph_is_the_base():
    m = square_mesh(3)
    g = GraphSurface.from_values(m, np.full(m.n_vertices, 2.5))
    assert g.sigma_mesh is m
    assert np.all(g.cos_theta == -1.0)


def test_graph_metric_area_matches_surface_area(disk09):
    g = GraphSurface.from_values(disk09, cap_heights(disk09, 0.9))
    assert g.sigma_mesh.total_area == pytest.approx(g.area, rel=1e-12)
    # spherical cap of the unit sphere over the disk of radius 0.9
    assert g.area == pytest.approx(2 * math.pi * (1 - SQRT_019), rel=5e-3)


def test_sphere_has_mean_curvature_one(disk09):
    g = GraphSurface.from_values(disk09, cap_heights(disk09, 0.9))
    H = mean_curvature_field(g).values
    inner = np.linalg.norm(disk09.vertices, axis=1) < 0.7
    assert np.max(np.abs(H[inner] - 1.0)) < 0.05


# ----------------------------------------------------------------------------
# residual, energy, Jacobian
# ----------------------------------------------------------------------------
@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_residual_invariant_under_constant_shift(c, seed):
    m = square_mesh(4)
    u = np.random.default_rng(seed).normal(size=m.n_vertices)
    assert np.allclose(cmc_residual(m, u + c, 0.7), cmc_residual(m, u, 0.7), atol=1e-12)


def test_residual_is_energy_gradient():
    m = build_disk_mesh(1.0, 0.2)
    rng = np.random.default_rng(5)
    u = 0.3 * rng.normal(size=m.n_vertices)
    R = cmc_residual(m, u, 0.8)
    eps = 1e-6
    for i in rng.choice(m.n_vertices, 10, replace=False):
        e = np.zeros(m.n_vertices)
        e[i] = eps
        fd = (cmc_energy(m, u + e, 0.8) - cmc_energy(m, u - e, 0.8)) / (2 * eps)
        assert fd == pytest.approx(R[i], rel=1e-6, abs=1e-9)


def jacobian_errors(mesh, u, n_dirs: int, seed: int):
    rng = np.random.default_rng(seed)
    J = cmc_jacobian(mesh, u)
    out = []
    for _ in range(n_dirs):
        v = rng.normal(size=mesh.n_vertices)
        eps = 1e-5
        fd = (cmc_residual(mesh, u + eps * v, 1.0) - cmc_residual(mesh, u - eps * v, 1.0)) / (2 * eps)
        Jv = J @ v
        out.append(float(np.linalg.norm(fd - Jv) / np.linalg.norm(Jv)))
    return out


def test_jacobian_matches_finite_differences():
    m = build_disk_mesh(1.0, 0.1)
    u = 0.5 * np.cos(m.vertices[:, 0]) * np.sin(2 * m.vertices[:, 1])
    assert max(jacobian_errors(m, u, 20, 11)) <= 1e-6


def test_jacobian_on_curved_base():
    m = build_model_mesh(build_model("hyperbolic", sector_fraction=0.5), 1.0, 2.0, 16, inner_label="d1")
    u = np.sin(m.vertices[:, 0])
    assert max(jacobian_errors(m, u, 5, 2)) <= 1e-6


# ----------------------------------------------------------------------------
# CMC solver
# ----------------------------------------------------------------------------
def test_minimal_plane_is_reproduced():
    m = build_disk_mesh(1.0, 0.1)
    res = solve_cmc_dirichlet(m, 0.0, {"outer": lambda P: 0.4 * P[:, 0] - P[:, 1]})
    assert res.status == "Converged" and res.newton_iterations == 0
    assert np.allclose(res.u.values, 0.4 * m.vertices[:, 0] - m.vertices[:, 1], atol=1e-12)


def test_cap_solve_and_height_estimate(disk09):
    res = solve_cmc_dirichlet(disk09, 1.0, {"outer": 0.0})
    assert res.status == "Converged"
    assert np.max(np.abs(res.u.values - cap_heights(disk09, 0.9))) < 5e-3
    g = GraphSurface.from_values(disk09, res.u)
    rep = height_estimate_check(g, 1.0)
    assert rep.passed and rep.slack == pytest.approx(SQRT_019, abs=5e-3)
    H = mean_curvature_field(g).values
    inner = np.setdiff1d(np.arange(disk09.n_vertices), disk09.boundary_vertices())
    assert np.allclose(H[inner], 1.0, atol=1e-9)


def test_nonexistence_diverges():
    res = solve_cmc_dirichlet(build_disk_mesh(1.2, 0.05), 1.0, {"outer": 0.0}, max_newton=200)
    assert res.status == "Diverged"
    assert res.newton_iterations <= 200
    assert res.H_reached < 1.0


def test_solver_preconditions(disk09):
    with pytest.raises(PreconditionViolated):
        solve_cmc_dirichlet(disk09, 1.0, {"nowhere": 0.0})
    hd = build_halfdisk_mesh(1.0, 0.2)
    with pytest.raises(PreconditionViolated):
        solve_cmc_dirichlet(hd, 0.0, {"outer": 0.0})  # the wall carries no data
    assert solve_cmc_dirichlet(hd, 0.0, {"outer": 0.0}, neumann=True).status == "Converged"


def test_height_estimate_hypotheses(disk09):
    g = GraphSurface.from_values(disk09, cap_heights(disk09, 0.9) + 0.1)
    with pytest.raises(HypothesisViolation):
        height_estimate_check(g, 1.0)
    with pytest.raises(HypothesisViolation):
        height_estimate_check(GraphSurface.from_values(disk09, cap_heights(disk09, 0.9)), 0.0)


def test_auxiliary_function_is_subharmonic():
    m = build_disk_mesh(0.9, 0.03)
    res = solve_cmc_dirichlet(m, 1.0, {"outer": 0.0})
    rep = auxiliary_subsolution_check(GraphSurface.from_values(m, res.u), 1.0)
    assert rep.passed, rep


def test_auxiliary_function_needs_flat_base():
    m = build_model_mesh(build_model("hyperbolic"), 1.0, 2.0, 16)
    with pytest.raises(PreconditionViolated):
        auxiliary_subsolution_check(GraphSurface.from_values(m, np.zeros(m.n_vertices)), 1.0)


# ----------------------------------------------------------------------------
# growth, Liouville and slice probes
# ----------------------------------------------------------------------------
def test_li_wang_on_cap(disk09):
    res = solve_cmc_dirichlet(disk09, 1.0, {"outer": 0.0})
    g = GraphSurface.from_values(disk09, res.u)
    o = int(np.argmin(np.linalg.norm(disk09.vertices, axis=1)))
    rep = li_wang_check(g, o, np.linspace(0.1, 0.85, 10))
    assert rep.passed
    assert rep.constant == pytest.approx(2 * res.u.values.max() + 1 + res.u.values.max(), rel=1e-6)
    # horizontal tangent plane at the apex: small graph balls look like base balls
    assert rep.graph_volume[0] == pytest.approx(rep.base_volume[0], rel=0.05)


def test_liouville_probe_constant_and_bounded():
    m = build_halfdisk_mesh(4.0, 0.2)
    o = int(np.argmin(np.linalg.norm(m.vertices - [0.0, 0.4], axis=1)))
    radii = np.linspace(0.4, 3.4, 8)
    assert liouville_probe(m, np.zeros(m.n_vertices), o, radii).status == "NoteConstant"
    bad = np.zeros(m.n_vertices)
    bad[0] = np.inf
    with pytest.raises(PreconditionViolated):
        liouville_probe(m, bad, o, radii)
    res = solve_cmc_dirichlet(m, 0.0, {"outer": lambda P: np.cos(2 * np.arctan2(P[:, 1], P[:, 0]))}, neumann=True)
    rep = liouville_probe(m, res.u, o, radii)
    assert all(rep.integrated_holds)
    assert rep.fd_fraction >= 0.95


def test_slice_report_cases():
    m = build_halfdisk_mesh(4.0, 0.1)
    const = slice_report(GraphSurface.from_values(m, np.zeros(m.n_vertices)), "Parabolic")
    assert const.hypotheses_hold and not const.violated and const.constancy_deficit == 0.0
    disk = build_disk_mesh(0.9, 0.05)
    r = np.linalg.norm(disk.vertices, axis=1)
    with pytest.raises(HypothesisViolation):
        slice_report(GraphSurface.from_values(disk, np.sqrt(1 - r**2)))
