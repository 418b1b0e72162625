import numpy as np
import pytest

from parlab.classify import (
    area_criterion,
    capacity_decay_test,
    d_parabolicity_test,
    implication_check,
    reflected_walk_test,
    transition_chain,
    volume_criterion,
)
from parlab.errors import InsufficientData, NonAbsorbingConfiguration, ObtuseMeshUnsupported
from parlab.families import FIVE_STOCK, stock_family
from parlab.geometry import MeshManifold, ball_growth_samples, build_annulus_mesh, build_disk_mesh, build_model
from parlab.potential import Condenser, condenser_capacity, radial_capacity_oracle


def oracle_verdict(name: str) -> str:
    fam = stock_family(name)
    return "NonParabolic" if radial_capacity_oracle(fam.model, 1.0) > 0 else "Parabolic"


@pytest.mark.parametrize(
    "kind, dim, expected",
    [
        ("euclidean", 2, "Parabolic"),
        ("euclidean", 3, "Inconclusive"),
        ("hyperbolic", 2, "Inconclusive"),
        ("cusp", 2, "Parabolic"),
    ],
)
def test_integral_criteria_on_models(kind, dim, expected):
    m = build_model(kind, dim=dim)
    assert volume_criterion(m, R_max=1024.0).verdict == expected
    assert area_criterion(m, R_max=1024.0).verdict == expected


def test_power_warp_threshold():
    # f = r^p in dimension 2: parabolic iff p <= 1
    assert area_criterion(build_model("power", (1.0,))).verdict == "Parabolic"
    assert area_criterion(build_model("power", (1.5,))).verdict == "Inconclusive"


def test_criteria_need_enough_windows():
    with pytest.raises(InsufficientData):
        volume_criterion(build_model("euclidean"), R_max=8.0)


def test_volume_criterion_on_table():
    disk = build_disk_mesh(1.0, 0.05)
    o = int(np.argmin(np.linalg.norm(disk.vertices, axis=1)))
    tab = ball_growth_samples(disk, o, np.geomspace(5e-4, 0.99, 200))
    with pytest.raises(InsufficientData):
        volume_criterion(tab, R_max=0.99, R_min=0.5)
    c = volume_criterion(tab, R_max=0.99)
    assert c.method == "VolumeCriterion" and len(c.evidence) >= 9


def test_capacity_decay_matches_oracle_on_stock_families():
    for name in FIVE_STOCK:
        assert capacity_decay_test(stock_family(name)).verdict == oracle_verdict(name), name


def test_d_parabolicity_on_half_families():
    assert d_parabolicity_test(stock_family("half-plane")).verdict == "Parabolic"
    assert d_parabolicity_test(stock_family("h2-half")).verdict == "NonParabolic"


def test_implication_chain_and_injected_premise():
    rep = implication_check([stock_family("half-plane"), stock_family("h2")])
    assert rep.ok
    assert [e.checked for e in rep.entries] == [True, False]
    forced = implication_check([(stock_family("h2-half"), "Parabolic")])
    assert not forced.ok and forced.entries[0].injected
    assert any("(D)" in v for v in forced.violations)


# ----------------------------------------------------------------------------
# reflected walk
# ----------------------------------------------------------------------------
@pytest.fixture(scope="module")
def walk_mesh():
    return build_annulus_mesh(1.0, 2.0, 0.15)


def _start(mesh):
    return int(np.argmin(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1.5)))


def test_walk_is_deterministic_and_thread_independent(walk_mesh):
    K = walk_mesh.vertices_with(marker="inner")
    s = _start(walk_mesh)
    a = reflected_walk_test(walk_mesh, K, "outer", 20_000, seed=7, start=s, chunk=5000, threads=1)
    b = reflected_walk_test(walk_mesh, K, "outer", 20_000, seed=7, start=s, chunk=5000, threads=4)
    c = reflected_walk_test(walk_mesh, K, "outer", 20_000, seed=8, start=s, chunk=5000)
    assert a == b
    assert a.hits_K != c.hits_K


def test_walk_agrees_with_potential(walk_mesh):
    K = walk_mesh.vertices_with(marker="inner")
    s = _start(walk_mesh)
    u = condenser_capacity(Condenser(walk_mesh, K)).potential.values[s]
    est = reflected_walk_test(walk_mesh, K, "outer", 100_000, seed=1, start=s)
    assert abs(est.p_hat - u) <= 3 * est.std_err


def test_transition_rows_are_distributions(walk_mesh):
    ch = transition_chain(walk_mesh)
    last = ch.keys[ch.indptr[1:] - 1] - np.arange(walk_mesh.n_vertices)
    assert np.allclose(last, 1.0)
    assert np.all(np.diff(ch.keys) >= 0)


def test_walk_rejects_bad_configurations(walk_mesh):
    K = walk_mesh.vertices_with(marker="inner")
    with pytest.raises(NonAbsorbingConfiguration):
        reflected_walk_test(walk_mesh, K, "outer", 10, seed=0, start=int(K[0]))
    with pytest.raises(NonAbsorbingConfiguration):
        reflected_walk_test(walk_mesh, K, "nowhere", 10, seed=0, start=_start(walk_mesh))
    V = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.1], [1.0, -1.0]])
    # the apex at (1, 0.1) makes the shared edge coupling negative
    obtuse = MeshManifold(V, np.array([[0, 1, 2], [0, 3, 1]]), np.array([[1, 2], [2, 0], [0, 3], [3, 1]]), ["d0"] * 4, ["x"] * 4)
    with pytest.raises(ObtuseMeshUnsupported):
        transition_chain(obtuse)
