"""Spin phase diagram of the Hartree-Fock gas from spinless free energies.

With both spin species decoupled, the free energy at density rho is
``min_{0 <= t <= 1/2} E(t rho, T) + E((1 - t) rho, T)`` where E is the spinless
free energy.  ``t = 1/2`` is the paramagnet.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, ndimage

from .kernels import RieszPotential
from .optimize import minimize_bounded
from .radial.solver import (
    ConvergenceError,
    FixedPointResult,
    SolverConfig,
    exchange_bound,
    solve_at_density,
    solve_middle,
    solve_pair,
)
from .zero_temperature import mu_T0

__all__ = [
    "PhasePoint",
    "PhaseDiagram",
    "EnergyCurve",
    "energy_curve",
    "optimal_polarization",
    "spin_energy",
    "phase_point_at",
    "sweep",
    "curie_temperature",
    "mu_curve",
    "matched_mu_check",
    "is_simply_connected",
]

log = logging.getLogger(__name__)

PARA_TOL = 1e-3
FERRO_T = 0.05
CURIE_MARGIN = 0.01
RHO_FLOOR = 1e-30


@dataclass
class PhasePoint:
    rho: float
    T: float
    t_opt: float
    energy_opt: float
    energy_para: float
    classification: str
    mu_pair: tuple[float, float] = (math.nan, math.nan)
    diagnostics: dict = field(default_factory=dict)


def _classify(t: float) -> str:
    if abs(t - 0.5) <= PARA_TOL:
        return "paramagnetic"
    if t <= FERRO_T:
        return "ferromagnetic"
    return "coexistence"


# --- energy curves ----------------------------------------------------------


@dataclass
class EnergyCurve:
    """Spinless free energy E(rho, T) on a density grid, with mu = dE/drho.

    Interpolation is cubic Hermite in ln(rho) with slope mu * rho.
    """

    T: float
    rho: np.ndarray
    energy: np.ndarray
    mu: np.ndarray
    failures: list = field(default_factory=list)
    # worst monotonicity defect and exchange-bound ratio over the tabulated solves
    audit: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.log(self.rho)
        self._spline = interpolate.CubicHermiteSpline(x, self.energy, self.mu * self.rho)
        self._dspline = self._spline.derivative()

    @property
    def rho_min(self) -> float:
        return float(self.rho[0])

    @property
    def rho_max(self) -> float:
        return float(self.rho[-1])

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        pos = rho > 0
        if np.any(rho[pos] < self.rho_min * (1 - 1e-12)) or np.any(rho > self.rho_max * (1 + 1e-12)):
            raise ValueError("density outside the tabulated energy curve")
        r = np.clip(rho[pos], self.rho_min, self.rho_max)
        out[pos] = self._spline(np.log(r))
        return out if out.ndim else float(out)

    def chemical_potential(self, rho):
        rho = np.clip(np.asarray(rho, dtype=float), self.rho_min, self.rho_max)
        return self._dspline(np.log(rho)) / rho


def _curve_grid(rho_max: float, n: int) -> np.ndarray:
    lo = np.logspace(math.log10(RHO_FLOOR), -6, 49)
    hi = np.logspace(-6, math.log10(rho_max), n)
    return np.unique(np.concatenate([lo, hi]))


def energy_curve(pot: RieszPotential, T: float, rho_max: float, cfg: SolverConfig | None = None,
                 n: int = 160) -> EnergyCurve:
    """Tabulate E(rho, T) by density-constrained solves continued upward in rho."""
    cfg = cfg or SolverConfig()
    rhos = _curve_grid(rho_max, n)
    E, MU, keep, failures = [], [], [], []
    increase, ratio = 0.0, 0.0
    warm = None
    for r in rhos:
        try:
            res = solve_at_density(pot, float(r), T, "auto", cfg, warm=warm)
        except (ConvergenceError, RuntimeError) as exc:
            failures.append((float(r), str(exc)))
            warm = None
            continue
        warm = res
        keep.append(r)
        E.append(res.free_energy)
        MU.append(res.mu)
        increase = max(increase, float(np.max(np.diff(res.g))))
        ratio = max(ratio, float(np.max(res.potential)) / exchange_bound(pot, float(r)))
    if len(keep) < 4:
        raise ConvergenceError(f"energy curve at T={T:g} failed at {len(failures)} densities")
    audit = {"solutions": len(keep), "max_increase": increase, "max_bound_ratio": ratio}
    return EnergyCurve(T, np.array(keep), np.array(E), np.array(MU), failures, audit)


def _t_candidates(t_min: float) -> np.ndarray:
    small = np.logspace(math.log10(t_min), -2, 120)
    return np.unique(np.concatenate([[0.0], small, np.linspace(0.01, 0.5, 491)]))


def optimal_polarization(energy, rho: float, t_min: float, xtol: float = 1e-7):
    """Minimize t -> E(t rho) + E((1-t) rho) over {0} and [t_min, 1/2].

    ``energy`` maps an array of densities to free energies with E(0) = 0.
    Returns (t_opt, P(t_opt), P(1/2)).
    """
    ts = _t_candidates(t_min)
    P = energy(ts * rho) + energy((1.0 - ts) * rho)
    i = int(np.argmin(P))
    best_t, best_P = float(ts[i]), float(P[i])
    if 0 < i < ts.size - 1 and ts[i - 1] > 0:
        f = lambda t: float(energy(np.array([t * rho]))[0] + energy(np.array([(1 - t) * rho]))[0])
        t = minimize_bounded(f, float(ts[i - 1]), float(ts[i + 1]), xtol=xtol)
        if f(t) < best_P:
            best_t, best_P = t, f(t)
    return best_t, best_P, float(P[-1])


def _point_from_curve(curve: EnergyCurve, rho: float) -> PhasePoint:
    t, e, e_para = optimal_polarization(curve, rho, curve.rho_min / rho)
    mus = tuple(float(m) for m in curve.chemical_potential(np.array([max(t * rho, curve.rho_min), (1 - t) * rho])))
    return PhasePoint(rho, curve.T, t, min(e, e_para), e_para, _classify(t), mus)


# --- direct evaluation at one point --------------------------------------------


def _solve(pot, rho, T, cfg, cache):
    key = float(rho)
    if key not in cache:
        warm = None
        if cache:
            near = min(cache, key=lambda r: abs(math.log(r / key)))
            warm = cache[near]
        cache[key] = solve_at_density(pot, key, T, "auto", cfg, warm=warm)
    return cache[key]


def phase_point_at(pot: RieszPotential, rho: float, T: float, t: float,
                   cfg: SolverConfig | None = None, _cache=None) -> PhasePoint:
    """The decoupled energy at a prescribed polarization t (not optimized)."""
    if not 0.0 < t <= 0.5:
        raise ValueError("polarization must lie in (0, 1/2]")
    cfg = cfg or SolverConfig()
    cache = {} if _cache is None else _cache
    a = _solve(pot, t * rho, T, cfg, cache)
    b = _solve(pot, (1 - t) * rho, T, cfg, cache)
    para = _solve(pot, 0.5 * rho, T, cfg, cache)
    return PhasePoint(rho, T, t, a.free_energy + b.free_energy, 2.0 * para.free_energy,
                      _classify(t), (a.mu, b.mu))


def spin_energy(pot: RieszPotential, rho: float, T: float, cfg: SolverConfig | None = None,
                n_coarse: int = 26, t_tol: float = 1e-4) -> PhasePoint:
    """Optimal polarization at (rho, T) from direct solves.

    A coarse t grid is refined by bounded minimization around its best point; each
    evaluation solves the two spin species at fixed density.
    """
    if not (rho > 0 and T > 0):
        raise ValueError("rho and T must be positive")
    cfg = cfg or SolverConfig()
    cache: dict[float, FixedPointResult] = {}

    def E(r):
        if r <= 0:
            return 0.0
        try:
            return _solve(pot, r, T, cfg, cache).free_energy
        except Exception as exc:
            raise ConvergenceError(f"sub-solve failed at t={r / rho:g} (rho={rho:g}, T={T:g}): {exc}") from exc

    P = lambda t: E(t * rho) + E((1.0 - t) * rho)
    # t = 0 is admissible with E(0) = 0; the grid runs from 1/2 down
    ts = np.linspace(0.0, 0.5, n_coarse)
    vals = np.array([P(t) for t in ts[::-1]])[::-1]
    i = int(np.argmin(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, n_coarse - 1)]
    lo = max(lo, 1e-6)
    t = minimize_bounded(P, lo, hi, xtol=t_tol)
    cands = [(vals[i], ts[i]), (P(t), t)]
    e_opt, t_opt = min(cands)
    if t_opt == 0.0:
        t_opt = lo
        e_opt = P(lo)
    a = _solve(pot, t_opt * rho, T, cfg, cache)
    b = _solve(pot, (1 - t_opt) * rho, T, cfg, cache)
    e_para = vals[-1]
    return PhasePoint(
        rho, T, float(t_opt), float(min(e_opt, e_para)), float(e_para), _classify(t_opt),
        (a.mu, b.mu), {"evaluations": len(cache)},
    )


def matched_mu_check(point: PhasePoint, rtol: float = 1e-3) -> bool:
    """Both spin species of an optimum must share the chemical potential."""
    m1, m2 = point.mu_pair
    if abs(point.t_opt - 0.5) <= 1e-12:
        return True
    return abs(m1 - m2) <= rtol * max(abs(m1), abs(m2))


# --- the sweep ------------------------------------------------------------------


@dataclass
class PhaseDiagram:
    rho_grid: np.ndarray
    T_grid: np.ndarray
    points: list  # points[i_rho][i_T], PhasePoint or None when failed
    curie_temperature: float
    transitions: list  # (T, rho_c1 or None, rho_c2 or None)
    contours: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    audits: list = field(default_factory=list)  # per temperature, from the energy curves

    def __post_init__(self):
        for g in (self.rho_grid, self.T_grid):
            if np.any(np.diff(g) <= 0):
                raise ValueError("grids must increase strictly")

    def t_matrix(self) -> np.ndarray:
        return np.array([[p.t_opt if p is not None else np.nan for p in row] for row in self.points])

    def ferromagnetic_mask(self) -> np.ndarray:
        t = self.t_matrix()
        return np.abs(t - 0.5) > PARA_TOL


def _polarized(t: float) -> bool:
    return t < 0.5 - CURIE_MARGIN


def _row(pot, T, rho_grid, cfg, n_curve):
    curve = energy_curve(pot, T, float(rho_grid[-1]), cfg, n_curve)
    pts = [_point_from_curve(curve, float(r)) for r in rho_grid]
    trans = _transition_densities(curve, rho_grid, pts)
    return curve, pts, trans


def _transition_densities(curve, rho_grid, pts):
    """Bracketed edges of the non-paramagnetic interval in rho, refined by bisection."""
    para = np.array([abs(p.t_opt - 0.5) <= PARA_TOL for p in pts])
    if para.all():
        return None, None
    idx = np.flatnonzero(~para)

    def is_para(r):
        return abs(_point_from_curve(curve, r).t_opt - 0.5) <= PARA_TOL

    def refine(a, b):
        # a and b straddle the boundary; keep the paramagnetic side on a
        pa = is_para(a)
        for _ in range(40):
            m = 0.5 * (a + b)
            if is_para(m) == pa:
                a = m
            else:
                b = m
            if b - a <= 1e-9 * b:
                break
        return 0.5 * (a + b)

    if idx[0] > 0:
        rc1 = refine(rho_grid[idx[0] - 1], rho_grid[idx[0]])
    else:
        # the dilute gas is paramagnetic; look below the grid on the same curve
        rc1, r = None, float(rho_grid[0])
        while r / 2 > 1e3 * curve.rho_min:
            if is_para(r / 2):
                rc1 = refine(r / 2, r)
                break
            r /= 2
    rc2 = refine(rho_grid[idx[-1]], rho_grid[idx[-1] + 1]) if idx[-1] < len(pts) - 1 else None
    return rc1, rc2


def _polarized_somewhere(pot, T, rho_scan, cfg, n_curve):
    curve = energy_curve(pot, T, float(rho_scan[-1]), cfg, n_curve)
    return any(_polarized(_point_from_curve(curve, float(r)).t_opt) for r in rho_scan)


def curie_temperature(pot: RieszPotential, T_lo: float, T_hi: float, rho_range, cfg=None,
                      n_rho: int = 40, n_curve: int = 160, T_tol: float = 2.5e-4) -> float:
    """Largest T with a polarized density, by bisection between T_lo and T_hi.

    ``T_lo`` must have a polarized density in the scan and ``T_hi`` none.
    """
    cfg = cfg or SolverConfig()
    rho_scan = np.linspace(rho_range[0], rho_range[1], n_rho)
    while T_hi - T_lo > T_tol:
        T = 0.5 * (T_lo + T_hi)
        if _polarized_somewhere(pot, T, rho_scan, cfg, n_curve):
            T_lo = T
        else:
            T_hi = T
    return 0.5 * (T_lo + T_hi)


def _contours(rho_grid, T_grid, t, levels=(0.1, 0.2, 0.3, 0.4, 0.49)):
    from skimage import measure

    out = {}
    for lev in levels:
        segs = []
        for c in measure.find_contours(np.nan_to_num(t, nan=0.5), lev):
            i, j = c[:, 0], c[:, 1]
            segs.append(np.column_stack([np.interp(i, np.arange(len(rho_grid)), rho_grid),
                                         np.interp(j, np.arange(len(T_grid)), T_grid)]))
        out[lev] = segs
    return out


def is_simply_connected(mask: np.ndarray) -> bool:
    """True when the True cells form one 4-connected blob without holes."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return False
    _, n = ndimage.label(mask)
    if n != 1:
        return False
    padded = np.pad(~mask, 1, constant_values=True)
    _, n_out = ndimage.label(padded)
    return n_out == 1


def sweep(pot: RieszPotential, rho_grid, T_grid, cfg: SolverConfig | None = None,
          workers: int = 1, n_curve: int = 160, refine_curie: bool = True) -> PhaseDiagram:
    """Optimal polarization on a (rho, T) grid, transition curves and Curie temperature.

    Each temperature is one task: it tabulates E(., T) once and evaluates every
    density of the row from that table.  Rows are reduced in grid order.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    T_grid = np.asarray(T_grid, dtype=float)
    if rho_grid.size == 0 or T_grid.size == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(rho_grid) <= 0) or np.any(np.diff(T_grid) <= 0):
        raise ValueError("grids must increase strictly")
    if rho_grid[0] <= 0 or T_grid[0] <= 0:
        raise ValueError("densities and temperatures must be positive")
    cfg = cfg or SolverConfig()
    args = [(pot, float(T), rho_grid, cfg, n_curve) for T in T_grid]
    rows = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_safe_row, *a) for a in args]
            rows = [f.result() for f in futs]
    else:
        rows = [_safe_row(*a) for a in args]
    points = [[None] * T_grid.size for _ in rho_grid]
    transitions, failures, audits = [], [], []
    for j, (T, row) in enumerate(zip(T_grid, rows)):
        if isinstance(row, str):
            failures.append((float(T), row))
            transitions.append((float(T), None, None))
            continue
        pts, (rc1, rc2), audit = row
        audits.append((float(T), audit))
        for i, p in enumerate(pts):
            points[i][j] = p
        transitions.append((float(T), rc1, rc2))
    t = np.array([[p.t_opt if p is not None else np.nan for p in row] for row in points])
    pol_T = [T_grid[j] for j in range(T_grid.size) if np.any(t[:, j] < 0.5 - CURIE_MARGIN)]
    if not pol_T:
        tc = math.nan
    else:
        T_lo = max(pol_T)
        above = T_grid[T_grid > T_lo]
        if refine_curie and above.size:
            tc = curie_temperature(pot, T_lo, float(above[0]), (rho_grid[0], rho_grid[-1]), cfg,
                                   n_curve=n_curve)
        else:
            tc = float(T_lo)
    return PhaseDiagram(rho_grid, T_grid, points, tc, transitions, _contours(rho_grid, T_grid, t), failures,
                        audits)


def _safe_row(pot, T, rho_grid, cfg, n_curve):
    try:
        curve, pts, trans = _row(pot, T, rho_grid, cfg, n_curve)
        return pts, trans, curve.audit
    except Exception as exc:  # failed rows are reported, not fatal
        log.warning("row T=%g failed: %s", T, exc)
        return f"{type(exc).__name__}: {exc}"


# --- chemical potential curves ----------------------------------------------------


def mu_curve(pot: RieszPotential, T: float, rho_grid, cfg: SolverConfig | None = None,
             n_mu: int = 40) -> list[tuple[float, float, str]]:
    """(rho, mu, branch) samples of the density/chemical-potential relation.

    At T = 0 this is the closed form.  At T > 0, mu is scanned over the range
    spanned by the grid and at each mu the minimal and maximal solutions are
    recorded, plus the middle one where they differ.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    if T == 0:
        return [(float(r), float(mu_T0(pot, r)), "min") for r in rho_grid]
    if T < 0:
        raise ValueError("temperature must be non-negative")
    cfg = cfg or SolverConfig()
    warm, mus = None, []
    for r in rho_grid:
        warm = solve_at_density(pot, float(r), T, "auto", cfg, warm=warm)
        mus.append(warm.mu)
    out = []
    for mu in np.linspace(min(mus), max(mus), n_mu):
        pair = solve_pair(pot, float(mu), T, cfg)
        lo, hi = pair["minimal"], pair["maximal"]
        out.append((lo.density, float(mu), "min"))
        out.append((hi.density, float(mu), "max"))
        if hi.density - lo.density > 1e-6 * hi.density:
            mid = solve_middle(pot, float(mu), T, lo, hi, cfg)
            if mid is not None:
                out.append((mid.density, float(mu), "middle"))
    return out
