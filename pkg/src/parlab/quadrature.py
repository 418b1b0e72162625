"""Adaptive Simpson quadrature and dyadic-window improper integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List

from .errors import QuadratureFailure

ABS_TOL = 1e-10
REL_TOL = 1e-8
MAX_DEPTH = 40


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    abs_tol: float = ABS_TOL,
    rel_tol: float = REL_TOL,
    max_depth: int = MAX_DEPTH,
) -> float:
    """Integrate ``f`` over ``[a, b]``.

    The local acceptance test is the classical ``|S2 - S1| <= 15 tol`` with the
    tolerance halved at each bisection.  Raises QuadratureFailure when an
    interval reaches ``max_depth`` without meeting it.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    if not math.isfinite(whole):
        return sign * whole
    tol = max(abs_tol, rel_tol * abs(whole))

    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, tl, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        err = left + right - est
        if not math.isfinite(err):
            return sign * (left + right)
        if abs(err) <= 15.0 * tl:
            total += left + right + err / 15.0
            continue
        if depth >= max_depth:
            raise QuadratureFailure(
                f"adaptive Simpson: tolerance {tl:.3e} not met on [{lo}, {hi}] at depth {depth}"
            )
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * tl, depth + 1))
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * tl, depth + 1))
    return sign * total


@dataclass
class ImproperIntegral:
    value: float
    divergent: bool
    windows: List[float] = field(default_factory=list)


def integrate_to_infinity(
    f: Callable[[float], float],
    a: float,
    slope_eps: float = 0.1,
    max_windows: int = 400,
    rel_tail: float = 1e-12,
) -> ImproperIntegral:
    """Integrate ``f`` over ``[a, inf)`` window by window on ``[a 2^k, a 2^(k+1)]``.

    Divergence is declared when four consecutive window sums fail to shrink by
    more than ``2**-slope_eps`` per doubling, or when a window is infinite.
    """
    if a <= 0:
        raise ValueError("lower limit must be positive")
    windows: List[float] = []
    total = 0.0
    lo = a
    for _ in range(max_windows):
        hi = 2.0 * lo
        w = adaptive_simpson(f, lo, hi)
        windows.append(w)
        if math.isinf(w) or math.isnan(w):
            return ImproperIntegral(math.inf, True, windows)
        total += w
        if len(windows) >= 4:
            last = windows[-4:]
            if abs(w) <= rel_tail * abs(total) or (total == 0.0 and w == 0.0):
                return ImproperIntegral(total, False, windows)
            ratios_ok = all(
                x > 0 and y > 0 and math.log2(y / x) >= -slope_eps for x, y in zip(last, last[1:])
            )
            if ratios_ok:
                return ImproperIntegral(math.inf, True, windows)
        lo = hi
    raise QuadratureFailure("improper integral undecided after max_windows dyadic windows")
