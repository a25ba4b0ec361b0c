"""Bracketed bisection helpers shared by the equilibrium solvers.

Everything here is plain bisection: guaranteed on any sign-change bracket,
derivative-free, and deterministic, which matters because the indifference
curves are non-monotone and Newton steps misbehave near branch tangencies.
Queue-ratio roots use geometric (log-space) bisection so the 18-decade
domain converges to uniform relative precision.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import BracketFailure, LAMBDA_MAX, LAMBDA_MIN

MAX_ITER = 120
REL_TOL = 1e-15


def bisect(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Linear bisection on [lo, hi]; requires f(lo) and f(hi) to differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketFailure(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        if hi - lo <= REL_TOL * max(abs(lo), abs(hi), 1.0):
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisect_geom(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Bisection with geometric midpoints; lo and hi must be positive."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketFailure(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(MAX_ITER):
        mid = float(np.sqrt(lo * hi))
        if hi - lo <= REL_TOL * hi or not lo < mid < hi:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return float(np.sqrt(lo * hi))


def expand_bracket_up(
    f: Callable[[float], float], start: float, cap: float = LAMBDA_MAX, factor: float = 10.0
) -> tuple[float, float]:
    """Grow [start, start*factor**n] until f changes sign; error past ``cap``."""
    lo, flo = start, f(start)
    if flo == 0.0:
        return lo, lo
    hi = lo
    while True:
        hi = hi * factor
        if hi > cap:
            raise BracketFailure(f"no sign change of f up to the queue cap {cap}")
        fhi = f(hi)
        if fhi == 0.0 or (fhi > 0) != (flo > 0):
            return lo, hi
        lo = hi


def expand_bracket_down(
    f: Callable[[float], float], start: float, floor: float = LAMBDA_MIN, factor: float = 10.0
) -> tuple[float, float]:
    """Shrink [start/factor**n, start] until f changes sign; error below ``floor``."""
    hi, fhi = start, f(start)
    if fhi == 0.0:
        return hi, hi
    lo = hi
    while True:
        lo = lo / factor
        if lo < floor:
            raise BracketFailure(f"no sign change of f down to the queue floor {floor}")
        flo = f(lo)
        if flo == 0.0 or (flo > 0) != (fhi > 0):
            return lo, hi
        hi = lo


def bisect_geom_many(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    iters: int = MAX_ITER,
) -> np.ndarray:
    """Vectorized geometric bisection; every element must hold a sign change.

    ``f`` maps an array of probe points to an array of residuals. Runs a
    fixed iteration count (the domain spans at most 18 decades, so 120
    geometric halvings exhaust double precision) and returns the final
    geometric midpoints.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = f(lo)
    fhi = f(hi)
    # Entries without an interior sign change have their root at an endpoint
    # up to rounding (targets get clipped to segment boundary values, and
    # vectorized powers can land an ulp off the scalar path); pin those to
    # the endpoint with the smaller residual instead of letting the sign
    # bookkeeping walk the bracket away.
    same_sign = (flo > 0) == (fhi > 0)
    pinned = np.where(
        same_sign, np.where(np.abs(flo) <= np.abs(fhi), lo, hi), np.nan
    )
    for _ in range(iters):
        mid = np.sqrt(lo * hi)
        fm = f(mid)
        same = (fm > 0) == (flo > 0)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
        if np.all(hi - lo <= REL_TOL * hi):
            break
    return np.where(np.isnan(pinned), np.sqrt(lo * hi), pinned)
