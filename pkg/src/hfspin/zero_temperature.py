"""Exact zero-temperature energies and spin transitions for Riesz interactions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import RieszPotential, energy_coefficients
from .optimize import bisect_monotone, minimize_bounded

__all__ = [
    "PolarizationCurve",
    "TransitionReport",
    "nospin_energy_T0",
    "mu_T0",
    "polarization_energy",
    "polarization_curve",
    "lambda_of_x",
    "classify_transition",
    "scan_polarization",
    "detect_transitions",
    "wigner_seitz_radius",
]

T_GRID_POINTS = 2001


@dataclass(frozen=True)
class PolarizationCurve:
    rho: float
    t: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        if not (np.all(np.diff(self.t) > 0) and self.t[0] == 0.0 and self.t[-1] == 0.5):
            raise ValueError("t samples must increase strictly from 0 to 1/2")


@dataclass
class TransitionReport:
    kind: str  # first_order | second_order | multiple
    critical_densities: list[tuple[float, str]]
    rho_samples: np.ndarray = field(default_factory=lambda: np.empty(0))
    t_samples: np.ndarray = field(default_factory=lambda: np.empty(0))

    def polarization_at(self, rho: float) -> float:
        """Optimal polarization, interpolated from the sampled curve."""
        if self.kind == "first_order":
            rc = self.critical_densities[0][0]
            return 0.0 if rho < rc else 0.5
        lo, hi = self.critical_densities[0][0], self.critical_densities[1][0]
        if rho <= lo:
            return 0.5
        if rho >= hi:
            return 0.0
        return float(np.interp(rho, self.rho_samples, self.t_samples))


def _coeffs(pot: RieszPotential):
    c = energy_coefficients(pot)
    return c.kappa_d, np.array(c.lambda_ds), np.array(pot.exponents)


def nospin_energy_T0(pot: RieszPotential, rho) -> np.ndarray | float:
    """Ground-state energy per volume of the filled Fermi ball of density rho."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be non-negative")
    kap, lams, ss = _coeffs(pot)
    d = pot.d
    e = kap * rho ** (1 + 2 / d)
    for lam, s in zip(lams, ss):
        e = e - lam * rho ** (1 + s / d)
    return e if e.ndim else float(e)


def mu_T0(pot: RieszPotential, rho) -> np.ndarray | float:
    """Chemical potential dE/drho at zero temperature."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("density must be positive")
    kap, lams, ss = _coeffs(pot)
    d = pot.d
    m = (1 + 2 / d) * kap * rho ** (2 / d)
    for lam, s in zip(lams, ss):
        m = m - (1 + s / d) * lam * rho ** (s / d)
    return m if m.ndim else float(m)


def polarization_energy(pot: RieszPotential, rho: float, t) -> np.ndarray | float:
    """P_rho(t) = E(t rho) + E((1-t) rho) on t in [0, 1/2]."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 0.5)):
        raise ValueError("polarization must lie in [0, 1/2]")
    if rho < 0:
        raise ValueError("density must be non-negative")
    return _pol_energy_unchecked(pot, rho, t)


def _pol_energy_unchecked(pot, rho, t):
    kap, lams, ss = _coeffs(pot)
    d = pot.d
    t = np.asarray(t, dtype=float)
    u = 1.0 - t
    q = 1 + 2 / d
    e = kap * rho**q * (t**q + u**q)
    for lam, s in zip(lams, ss):
        p = 1 + s / d
        e = e - lam * rho**p * (t**p + u**p)
    return e if e.ndim else float(e)


def polarization_curve(pot: RieszPotential, rho: float, n: int = 101) -> PolarizationCurve:
    t = np.linspace(0.0, 0.5, n)
    return PolarizationCurve(rho, t, polarization_energy(pot, rho, t))


def lambda_of_x(p: float, q: float, x):
    """Inverse of the critical-point map of f_lambda(x) = x^q + (1-x)^q - lambda (x^p + (1-x)^p)."""
    x = np.asarray(x, dtype=float)
    return q / p * (x ** (q - 1) - (1 - x) ** (q - 1)) / (x ** (p - 1) - (1 - x) ** (p - 1))


def wigner_seitz_radius(rho: float, d: int = 3) -> float:
    if d != 3:
        raise ValueError("Wigner-Seitz radius is defined here for d = 3")
    return (3.0 / (4.0 * math.pi * rho)) ** (1.0 / 3.0)


def classify_transition(pot: RieszPotential, n_samples: int = 201) -> TransitionReport:
    """Closed-form transition densities for a single Riesz term."""
    if len(pot.terms) != 1:
        raise ValueError("classify_transition handles single-term potentials; use scan_polarization")
    d = pot.d
    (s,) = pot.exponents
    kap, lams, _ = _coeffs(pot)
    lam = float(lams[0])
    smin = min(2.0, d)
    if math.isclose(s, 2.0) or math.isclose(s, smin):
        raise ValueError(f"s = {s} lies on a classification boundary")
    if s < smin:
        rc = (lam / kap * (1 - 2 ** (-s / d)) / (1 - 2 ** (-2 / d))) ** (d / (2 - s))
        return TransitionReport("first_order", [(rc, "rho_c")])
    if d < 3:
        raise ValueError("second-order regime requires d >= 3")
    # lambda_eff(rho) = (lam/kap) rho^((s-2)/d) increases through [lambda_min, lambda_max]
    q, p = (d + 2) / d, (d + s) / d
    lam_min = q * (q - 1) / (p * (p - 1)) * 2 ** (p - q)
    lam_max = q / p
    to_rho = lambda L: (kap / lam * L) ** (d / (s - 2))
    lo, hi = to_rho(lam_min), to_rho(lam_max)
    rhos = np.linspace(lo, hi, n_samples)
    ts = np.empty_like(rhos)
    ts[0], ts[-1] = 0.5, 0.0
    for i, r in enumerate(rhos[1:-1], start=1):
        L = lam / kap * r ** ((s - 2) / d)
        # lambda(x) decreases from lam_max (x=0) to lam_min (x=1/2)
        ts[i] = bisect_monotone(lambda x: -lambda_of_x(p, q, x), -L, 1e-15, 0.5 - 1e-15)
    return TransitionReport(
        "second_order", [(lo, "rho_c_min"), (hi, "rho_c_max")], rhos, ts
    )


def _argmin_t(pot, rho, n_grid=T_GRID_POINTS, xtol=1e-7, n_local=3):
    ts = np.linspace(0.0, 0.5, n_grid)
    e = _pol_energy_unchecked(pot, rho, ts)
    # local minima of the sampled curve, endpoints included
    interior = np.flatnonzero((e[1:-1] <= e[:-2]) & (e[1:-1] <= e[2:])) + 1
    cands = sorted(set(interior.tolist()) | {0, n_grid - 1}, key=lambda i: e[i])[:n_local + 1]
    best_t, best_e = None, np.inf
    h = ts[1] - ts[0]
    f = lambda x: _pol_energy_unchecked(pot, rho, x)
    for i in cands:
        a, b = max(0.0, ts[i] - h), min(0.5, ts[i] + h)
        x = minimize_bounded(f, a, b, xtol=xtol)
        for xx in (x, a if i == 0 else None, b if i == n_grid - 1 else None):
            if xx is None:
                continue
            fx = f(xx)
            if fx < best_e:
                best_t, best_e = xx, fx
    return float(best_t), float(best_e)


def scan_polarization(pot: RieszPotential, rho_grid) -> list[tuple[float, float]]:
    """Global minimizer of the polarization energy at each density."""
    rho_grid = np.asarray(rho_grid, dtype=float)
    if rho_grid.size == 0:
        raise ValueError("empty density grid")
    if np.any(np.diff(rho_grid) <= 0) or rho_grid[0] < 0:
        raise ValueError("density grid must be non-negative and strictly increasing")
    return [(float(r), _argmin_t(pot, r)[0]) for r in rho_grid]


def _phase(t: float, t_tol: float) -> str:
    if abs(t - 0.5) <= t_tol:
        return "para"
    if t <= t_tol:
        return "ferro"
    return "mixed"


def _refine(pot, a, b, ta, tb, rtol=1e-12):
    """Shrink [a, b] onto the point where t changes fastest."""
    while b - a > rtol * b:
        m = 0.5 * (a + b)
        tm = _argmin_t(pot, m)[0]
        if abs(tm - ta) >= abs(tb - tm):
            b, tb = m, tm
        else:
            a, ta = m, tm
    return a, b, ta, tb


def detect_transitions(scan, jump_tol: float = 0.05, t_tol: float = 1e-4,
                       pot: RieszPotential | None = None, jump_min: float = 1e-3):
    """Locate phase changes along an increasing density scan.

    A jump in t larger than ``jump_tol`` between neighbours is a first-order
    transition; a continuous departure from (or arrival at) the pure phases
    t = 1/2 or t = 0 is second order.  With ``pot`` given, each flagged
    interval is bisected toward the steepest change; a surviving jump above
    ``jump_min`` is first order, otherwise the change is continuous and only
    kept when the phase differs across it.  Returns ``[(rho, kind), ...]``.
    """
    rhos = np.array([r for r, _ in scan])
    ts = np.array([t for _, t in scan])

    events = []
    for i in range(1, len(ts)):
        a, b, ta, tb = rhos[i - 1], rhos[i], ts[i - 1], ts[i]
        jump = abs(tb - ta) > jump_tol
        changed = _phase(ta, t_tol) != _phase(tb, t_tol)
        if not (jump or changed):
            continue
        if pot is None:
            events.append((0.5 * (a + b), "first_order" if jump else "second_order"))
            continue
        a, b, ta, tb = _refine(pot, a, b, ta, tb)
        if abs(tb - ta) > jump_min:
            events.append((0.5 * (a + b), "first_order"))
        elif changed:
            events.append((0.5 * (a + b), "second_order"))
    return events
