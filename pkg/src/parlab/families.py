"""Exhaustion families of model manifolds used by the classification pipelines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .geometry.mesh import MeshManifold
from .geometry.meshgen import build_model_mesh, model_rings
from .geometry.model import ModelManifold, build_model
from .potential import (
    Condenser,
    ExhaustionMember,
    condenser_capacity,
    radial_capacity_oracle,
    radial_fem_capacity,
)


def geometric_radii(base: float, ratio: float, count: int) -> Tuple[float, ...]:
    if base <= 0 or ratio <= 1 or count < 1:
        raise ValueError("exhaustion needs base > 0, ratio > 1, count >= 1")
    return tuple(base * ratio**k for k in range(count))


@dataclass
class ModelFamily:
    """Annular truncations ``a <= r <= radii[j-1]`` of a model manifold.

    The plate K is the inner circle ``r = a`` (marker ``inner``).  All members
    share one ring list, so member j's mesh is the first rings of member j+1's.
    Dimension-2 models are meshed; higher dimensions use the 1-D radial solver.
    """

    name: str
    model: ModelManifold
    radii: Tuple[float, ...]
    a: float = 1.0
    n_theta: int = 64
    probe_radius: Optional[float] = None

    def __post_init__(self):
        self.radii = tuple(float(r) for r in self.radii)
        if self.radii[0] <= self.a or any(np.diff(self.radii) <= 0):
            raise ValueError("outer radii must increase and exceed the plate radius")
        if self.probe_radius is None:
            self.probe_radius = 0.5 * (self.a + self.radii[0])

    @property
    def j_max(self) -> int:
        return len(self.radii)

    @property
    def dtheta(self) -> float:
        s = self.model.sector_fraction
        if s >= 1.0:
            return 2.0 * math.pi / self.n_theta
        return 2.0 * math.pi * s / max(2, int(round(self.n_theta * s)))

    @cached_property
    def rings(self) -> np.ndarray:
        return model_rings(self.model, self.a, self.radii[-1], self.dtheta, stops=self.radii)

    def rings_for(self, j: int) -> np.ndarray:
        b = self.radii[j - 1]
        k = int(np.argmin(np.abs(self.rings - b)))
        return self.rings[: k + 1]

    def outer_radius(self, j: int) -> float:
        return float(self.rings_for(j)[-1])

    def mesh(self, j: int, inner_label: str = "d0") -> MeshManifold:
        cache = self.__dict__.setdefault("_mesh_cache", {})
        key = (j, inner_label)
        if key not in cache:
            cache[key] = build_model_mesh(self.model, self.a, self.radii[j - 1], self.n_theta, self.rings_for(j), inner_label)
        return cache[key]

    def probe_vertex(self, mesh: MeshManifold) -> int:
        """Vertex on the ring closest to ``probe_radius``, mid-sector."""
        rings = self.rings
        k = int(np.argmin(np.abs(rings - self.probe_radius)))
        s = self.model.sector_fraction
        n_cols = self.n_theta if s >= 1.0 else max(2, int(round(self.n_theta * s))) + 1
        col = 0 if s >= 1.0 else n_cols // 2
        return k * n_cols + col

    def capacity_member(self, j: int, K=None) -> ExhaustionMember:
        b = self.outer_radius(j)
        if self.model.dim != 2:
            cap, u_o = radial_fem_capacity(self.model, self.rings_for(j), self.probe_radius)
            return ExhaustionMember(j, b, cap, u_o)
        mesh = self.mesh(j)
        if K is None:
            cond = Condenser.from_markers(mesh, "inner", "outer")
        elif callable(K):
            cond = Condenser(mesh, K(mesh), "outer")
        else:
            cond = Condenser(mesh, np.asarray(K), "outer")
        res = condenser_capacity(cond)
        return ExhaustionMember(j, b, res.value, float(res.potential.values[self.probe_vertex(mesh)]))

    def oracle_capacity(self, b: float = math.inf) -> float:
        return radial_capacity_oracle(self.model, self.a, b)

    def describe(self) -> dict:
        return {"name": self.name, "model": self.model.describe(), "a": self.a, "radii": list(self.radii)}


STOCK = {
    "plane": ("euclidean", 2, 1.0, (2.0, 2.0, 6)),
    "half-plane": ("euclidean", 2, 0.5, (2.0, 2.0, 6)),
    "r3": ("euclidean", 3, 1.0, (2.0, 2.0, 6)),
    "h2": ("hyperbolic", 2, 1.0, (2.0, 1.5, 6)),
    "h2-half": ("hyperbolic", 2, 0.5, (2.0, 1.5, 6)),
    "cusp": ("cusp", 2, 1.0, (2.0, 1.5, 5)),
}

FIVE_STOCK = ("plane", "half-plane", "r3", "h2", "cusp")


def stock_family(
    name: str,
    exhaustion: Optional[Tuple[float, float, int]] = None,
    n_theta: int = 64,
    probe_radius: Optional[float] = None,
) -> ModelFamily:
    if name not in STOCK:
        raise KeyError(f"unknown stock family {name!r}; choose from {sorted(STOCK)}")
    kind, dim, sector, default = STOCK[name]
    base, ratio, count = exhaustion or default
    model = build_model(kind, (), dim, sector)
    return ModelFamily(name, model, geometric_radii(base, ratio, count), 1.0, n_theta, probe_radius)


def family_for_model(model: ModelManifold, exhaustion: Tuple[float, float, int], n_theta: int = 64) -> ModelFamily:
    base, ratio, count = exhaustion
    return ModelFamily(f"{model.kind}-{model.dim}d-s{model.sector_fraction:g}", model, geometric_radii(base, ratio, count), 1.0, n_theta)
