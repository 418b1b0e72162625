import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import square_mesh
from parlab import fem
from parlab.calculus import hat_pairings, test_vertices as admissible_vertices
from parlab.errors import InvariantViolation, MonotonicityViolation, QuadratureFailure
from parlab.families import stock_family
from parlab.geometry import ScalarField, build_model, quality_report
from parlab.potential import (
    Condenser,
    absolute_capacity,
    classify_sequence,
    condenser_capacity,
    dirichlet_energy,
    fmt,
    harmonic_measure,
    radial_capacity_oracle,
    radial_fem_capacity,
    solve_mixed_bvp,
)
from parlab.quadrature import adaptive_simpson, integrate_to_infinity

CAP_ANNULUS = 9.064720283654388  # 2 pi / ln 2
CAP_H2 = 8.139507067607900  # 2 pi / int_1^inf 1/sinh
CAP_H2_HALF = 4.069753533803950


# ----------------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------------
def test_adaptive_simpson_exact_and_smooth():
    assert adaptive_simpson(lambda x: x**3, 0.0, 2.0) == pytest.approx(4.0, rel=1e-14)
    assert adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, rel=1e-9)
    assert adaptive_simpson(math.exp, 1.0, 0.0) == pytest.approx(1 - math.e, rel=1e-9)


def test_adaptive_simpson_depth_failure():
    with pytest.raises(QuadratureFailure):
        adaptive_simpson(lambda x: 1.0 if x > 1 / 3 else 0.0, 0.0, 1.0, abs_tol=1e-30, rel_tol=0.0, max_depth=5)


def test_improper_integrals():
    res = integrate_to_infinity(lambda t: 1.0 / t**2, 1.0)
    assert not res.divergent and res.value == pytest.approx(1.0, rel=1e-8)
    assert integrate_to_infinity(lambda t: 1.0 / t, 1.0).divergent


# ----------------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------------
def test_solve_spd_matches_dense():
    rng = np.random.default_rng(0)
    n = 60
    B = sp.random(n, n, density=0.1, random_state=1)
    A = (B @ B.T + sp.identity(n) * 5).tocsc()
    b = rng.normal(size=n)
    x = fem.solve_spd(A, b)
    assert np.allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-12, atol=1e-12)


def test_dual_areas_partition_the_mesh(annulus_010):
    assert fem.dual_areas(annulus_010).sum() == pytest.approx(annulus_010.total_area, rel=1e-13)
    assert np.all(fem.dual_areas(annulus_010) > 0)


def test_cotangent_laplacian_of_r2_is_exact(disk_010):
    # Lap |x|^2 = 4 pointwise at vertices whose triangles are all non-obtuse
    m = disk_010
    u = np.sum(m.vertices**2, axis=1)
    lap = -(fem.stiffness(m) @ u) / fem.dual_areas(m)
    G = m.gram
    obtuse = (G[:, 0, 1] < 0) | (G[:, 0, 0] < G[:, 0, 1]) | (G[:, 1, 1] < G[:, 0, 1])
    bad = np.zeros(m.n_vertices, dtype=bool)
    bad[m.triangles[obtuse].ravel()] = True
    bad[m.boundary_vertices()] = True
    assert np.count_nonzero(~bad) > 0.8 * m.n_vertices
    assert np.allclose(lap[~bad], 4.0, atol=1e-10)


def test_recovered_gradient_exact_for_cubics(disk_010):
    P = disk_010.vertices
    u = P[:, 0] ** 3 - 2 * P[:, 0] * P[:, 1] + P[:, 1]
    g = fem.recovered_gradient(disk_010, u)
    exact = np.column_stack([3 * P[:, 0] ** 2 - 2 * P[:, 1], -2 * P[:, 0] + 1])
    assert np.allclose(g, exact, atol=1e-9)


# ----------------------------------------------------------------------------
# mixed problems and condensers
# ----------------------------------------------------------------------------
def test_linear_data_reproduced_exactly():
    m = square_mesh(6, labels=("d0", "d1", "d0", "d1"))
    u = solve_mixed_bvp(m, {"bottom": 0.0, "top": 1.0})
    assert np.allclose(u.values, m.vertices[:, 1], atol=1e-13)


def test_unknown_marker_raises(annulus_010):
    with pytest.raises(InvariantViolation):
        solve_mixed_bvp(annulus_010, {"nowhere": 1.0})
    with pytest.raises(InvariantViolation):
        Condenser.from_markers(annulus_010, "outer", "outer")


def test_annulus_capacity_and_potential(annulus_003):
    res = condenser_capacity(Condenser.from_markers(annulus_003))
    assert res.value == pytest.approx(CAP_ANNULUS, rel=1e-3)
    r = np.linalg.norm(annulus_003.vertices, axis=1)
    exact = np.log(2 / r) / math.log(2)
    assert np.max(np.abs(res.potential.values - exact)) < 1e-3
    assert res.energy_residual <= 1e-12 * res.value


def test_equilibrium_potential_contract(annulus_010):
    assert quality_report(annulus_010).positive_offdiagonals == 0
    res = condenser_capacity(Condenser.from_markers(annulus_010))
    u = res.potential.values
    assert u.min() >= 0.0 and u.max() <= 1.0
    assert abs(dirichlet_energy(annulus_010, res.potential) - res.value) == 0.0
    free = np.setdiff1d(admissible_vertices(annulus_010), annulus_010.vertices_with(marker="inner"))
    assert np.max(np.abs(hat_pairings(annulus_010, u)[free])) < 1e-8


def test_half_annulus_capacity_is_half(halfannulus_003):
    res = condenser_capacity(Condenser.from_markers(halfannulus_003))
    assert res.value == pytest.approx(CAP_ANNULUS / 2, rel=1e-3)


def test_harmonic_measure_shared_vertices_take_zero():
    m = square_mesh(4, labels=("d0", "d1", "d0", "d1"))
    bottom, right = m.vertices_with(marker="bottom"), m.vertices_with(marker="right")
    u = harmonic_measure(m, bottom, right)
    shared = np.intersect1d(bottom, right)
    assert shared.size == 1 and u.values[shared[0]] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_capacity_invariant_under_affine_data(a, b):
    # capacity is the energy of the (0, 1) potential; affine data a + b u scale it by b^2
    m = square_mesh(5, labels=("d0", "d1", "d0", "d1"))
    u = solve_mixed_bvp(m, {"bottom": a, "top": a + b})
    assert dirichlet_energy(m, u) == pytest.approx(b * b, rel=1e-10, abs=1e-12)


# ----------------------------------------------------------------------------
# radial oracles and exhaustions
# ----------------------------------------------------------------------------
def test_radial_oracles():
    assert radial_capacity_oracle(build_model("euclidean"), 1.0, 2.0) == pytest.approx(CAP_ANNULUS, rel=1e-9)
    assert radial_capacity_oracle(build_model("hyperbolic"), 1.0) == pytest.approx(CAP_H2, rel=1e-7)
    assert radial_capacity_oracle(build_model("hyperbolic", sector_fraction=0.5), 1.0) == pytest.approx(CAP_H2_HALF, rel=1e-7)
    assert radial_capacity_oracle(build_model("euclidean"), 1.0) == 0.0
    assert radial_capacity_oracle(build_model("euclidean", dim=3), 1.0) == pytest.approx(4 * math.pi, rel=1e-8)


def test_radial_fem_second_order():
    m = build_model("euclidean", dim=3)
    exact = 4 * math.pi / (1 - 1 / 3)
    errs = [abs(radial_fem_capacity(m, np.linspace(1, 3, n + 1))[0] - exact) for n in (20, 40, 80)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_classify_sequence_verdicts():
    R = 2.0 ** np.arange(1, 7)
    assert classify_sequence(2 * math.pi / np.log(R), R).classification == "DecaysToZero"
    lim = classify_sequence(5.0 + 1.0 / R, R)
    assert lim.classification == "PositiveLimit" and lim.limit_estimate == pytest.approx(5.0, rel=1e-2)
    assert classify_sequence([3.0, 2.0, 1.0], R[:3]).classification == "Undetermined"
    assert classify_sequence([1.0, 2.0, 1.5, 1.4], R[:4]).classification == "Undetermined"


def test_absolute_capacity_plane_and_hyperbolic():
    plane = absolute_capacity(stock_family("plane"), j_max=6)
    assert plane.classification == "DecaysToZero"
    caps = [r.capacity for r in plane.rows]
    assert np.all(np.diff(caps) < 0)
    h2 = absolute_capacity(stock_family("h2"), j_max=6)
    assert h2.classification == "PositiveLimit"
    assert h2.limit_estimate == pytest.approx(CAP_H2, rel=2e-2)


class _Increasing:
    name = "bad"

    def capacity_member(self, j, K=None):
        from parlab.potential import ExhaustionMember

        return ExhaustionMember(j, float(j), float(j), 0.5)


def test_monotonicity_violation_detected():
    with pytest.raises(MonotonicityViolation):
        absolute_capacity(_Increasing(), j_max=3)


def test_exhaustion_csv_is_lossless():
    rep = absolute_capacity(stock_family("r3"), j_max=4)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "j,outer_radius,capacity,potential_at_o"
    assert float(lines[1].split(",")[2]) == rep.rows[0].capacity
    assert fmt(0.1) == "0.10000000000000001"
