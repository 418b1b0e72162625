"""Rotationally symmetric model manifolds with warp function f(r)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import InvalidFraction, InvalidWarp
from ..quadrature import adaptive_simpson

WARP_KINDS = ("euclidean", "hyperbolic", "cusp", "power", "table")


def unit_sphere_area(k: int) -> float:
    """Area of the unit k-sphere in R^(k+1); ``unit_sphere_area(1) == 2 pi``."""
    n = k + 1
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _safe(fn, *args) -> float:
    try:
        return fn(*args)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class ModelManifold:
    dim: int
    kind: str
    params: Tuple[float, ...] = ()
    sector_fraction: float = 1.0
    table_r: Optional[Tuple[float, ...]] = None
    table_f: Optional[Tuple[float, ...]] = None

    # -- warp -------------------------------------------------------------
    def warp(self, r: float) -> float:
        k = self.kind
        if k == "euclidean":
            return r
        if k == "hyperbolic":
            return _safe(math.sinh, r)
        if k == "cusp":
            return math.exp(-r)
        if k == "power":
            return r ** self.params[0] if r > 0 else 0.0
        if r < self.table_r[0] or r > self.table_r[-1]:
            raise InvalidWarp(f"radius {r} outside sampled warp table")
        return float(np.interp(r, self.table_r, self.table_f))

    def warp_log_derivative(self, r: float) -> float:
        """|f'(r) / f(r)|, used to bound metric variation inside mesh cells."""
        k = self.kind
        if k == "euclidean":
            return 1.0 / r
        if k == "hyperbolic":
            return 1.0 / math.tanh(r)
        if k == "cusp":
            return 1.0
        if k == "power":
            return abs(self.params[0]) / r
        h = 1e-6 * max(1.0, r)
        lo, hi = max(self.table_r[0], r - h), min(self.table_r[-1], r + h)
        return abs(math.log(self.warp(hi)) - math.log(self.warp(lo))) / (hi - lo)

    @property
    def omega(self) -> float:
        """sector_fraction times the area of the unit (dim-1)-sphere."""
        return self.sector_fraction * unit_sphere_area(self.dim - 1)

    # -- growth -----------------------------------------------------------
    def ball_volume(self, R: float) -> float:
        if R < 0:
            raise ValueError("radius must be non-negative")
        if R == 0:
            return 0.0
        m = self.dim
        k = self.kind
        if k == "euclidean":
            base = R**m / m
        elif k == "hyperbolic" and m == 2:
            base = _safe(math.cosh, R) - 1.0
        elif k == "hyperbolic" and m == 3:
            base = (_safe(math.sinh, 2.0 * R) - 2.0 * R) / 4.0
        elif k == "cusp":
            base = -math.expm1(-(m - 1) * R) / (m - 1)
        elif k == "power":
            p = self.params[0] * (m - 1) + 1.0
            base = R**p / p
        else:
            lo = 0.0 if self.kind != "table" else self.table_r[0]
            base = adaptive_simpson(lambda t: self.warp(t) ** (m - 1), lo, R)
        return self.omega * base

    def sphere_area(self, R: float) -> float:
        if R <= 0:
            raise ValueError("radius must be positive")
        return self.omega * self.warp(R) ** (self.dim - 1)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "kind": self.kind,
            "params": list(self.params),
            "sector_fraction": self.sector_fraction,
        }


def build_model(
    kind: str,
    params: Sequence[float] = (),
    dim: int = 2,
    sector_fraction: float = 1.0,
    table: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    r_probe: float = 10.0,
) -> ModelManifold:
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    if not (0.0 < sector_fraction <= 1.0):
        raise InvalidFraction(f"sector_fraction must lie in (0, 1], got {sector_fraction}")
    if kind not in WARP_KINDS:
        raise InvalidWarp(f"unknown warp kind {kind!r}")
    params = tuple(float(p) for p in params)
    expected = {"euclidean": 0, "hyperbolic": 0, "cusp": 0, "power": 1, "table": 0}[kind]
    if len(params) != expected:
        raise InvalidWarp(f"warp {kind!r} takes {expected} parameter(s), got {len(params)}")
    table_r = table_f = None
    if kind == "table":
        if table is None:
            raise InvalidWarp("sampled warp requires a (r, f) table")
        tr = np.asarray(table[0], dtype=float)
        tf = np.asarray(table[1], dtype=float)
        if tr.ndim != 1 or tr.shape != tf.shape or tr.size < 2:
            raise InvalidWarp("warp table must be two equal-length 1-D sequences")
        if np.any(np.diff(tr) <= 0):
            raise InvalidWarp("warp table radii must be strictly increasing")
        if tr[0] < 0:
            raise InvalidWarp("warp table radii must be non-negative")
        table_r, table_f = tuple(tr), tuple(tf)
        r_probe = min(r_probe, tr[-1])
    model = ModelManifold(dim, kind, params, float(sector_fraction), table_r, table_f)
    lo = table_r[0] if table_r else 0.0
    for r in np.linspace(lo, r_probe, 201)[1:]:
        if not model.warp(float(r)) > 0:
            raise InvalidWarp(f"warp is non-positive at r={r:.4g}")
    return model
