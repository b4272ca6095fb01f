"""Scalar solvers shared by the zero- and positive-temperature code (thin scipy wrappers)."""

from __future__ import annotations

import numpy as np
from scipy import optimize


def minimize_bounded(f, a: float, b: float, xtol: float = 1e-6, max_iter: int = 500) -> float:
    """Minimize f on [a, b] by bounded Brent search; the result stays inside [a, b]."""
    if b <= a:
        return a
    res = optimize.minimize_scalar(f, bounds=(a, b), method="bounded",
                                   options={"xatol": xtol, "maxiter": max_iter})
    return float(res.x)


def bisect_monotone(f, target: float, lo: float, hi: float, xtol: float = 1e-15,
                    max_iter: int = 200) -> float:
    """Solve f(x) = target for increasing f on [lo, hi], clamping to the ends."""
    flo = f(lo) - target
    fhi = f(hi) - target
    if flo >= 0:
        return lo
    if fhi <= 0:
        return hi
    return optimize.brentq(lambda x: f(x) - target, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
