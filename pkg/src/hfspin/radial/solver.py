"""Self-consistent Fermi-Dirac occupations of the spinless Hartree-Fock gas (d = 3).

The unknown is a radial occupation g(k) on a composite Gauss-Legendre grid that
is adapted to the Fermi edge of the solution itself: every solve starts on a
grid built from a rough edge estimate and is repeated on a grid rebuilt from
the converged occupation until the result stops changing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import linalg, optimize, special

from ..kernels import RieszPotential, surface_area, thomas_fermi_constant
from ..zero_temperature import mu_T0
from .convolution import ConvolutionOperator
from .grid import GridSpec, RadialGrid, edges_from_profiles, grid_adequate

__all__ = [
    "SolverConfig",
    "Occupation",
    "FixedPointResult",
    "ConvergenceError",
    "MonotonicityError",
    "BracketError",
    "fermi",
    "hammerstein_apply",
    "solve_extremal",
    "solve_pair",
    "solve_middle",
    "solve_at_density",
    "free_energy",
    "exchange_bound",
    "uniqueness_region",
    "contraction_norm",
    "dump_state",
    "load_state",
]

log = logging.getLogger(__name__)

G_FLOOR = 1e-300
G_CEIL = 1.0 - 1e-16
RHO_FACTOR = 1.0 / (2.0 * math.pi**2)  # (2 pi)^-3 * 4 pi


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history or [])


class MonotonicityError(AssertionError):
    """An extremal iteration stopped being monotone beyond the allowed slack."""


class BracketError(RuntimeError):
    def __init__(self, message: str, table):
        super().__init__(message)
        self.table = list(table)


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    tol: float = 1e-10
    max_iter: int = 50000
    damping: float = 1.0
    polish_damping: tuple[float, ...] = (0.5, 0.1)
    n_beads: int = 32
    reparam_every: int = 1
    string_iter: int = 3000
    # zoom passes onto the segment holding the saddle when it falls between beads
    string_levels: int = 4
    rho_rtol: float = 1e-10
    monotone_slack: float = 1e-12
    grid_passes: int = 5
    grid_rtol: float = 1e-9
    # monotone iteration stops on the residual, so its densities carry ~tol/(1-rate)
    grid_rtol_extremal: float = 1e-7
    # grid rebuilds allowed while one monotone iteration is continued
    max_transfers: int = 60

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.n_beads < 8:
            raise ValueError("the string needs at least 8 beads")
        if self.reparam_every < 1 or self.max_iter < 1 or self.string_levels < 1:
            raise ValueError("iteration counts must be positive")

    def refined(self) -> "SolverConfig":
        return replace(self, grid=self.grid.refined())


@dataclass(frozen=True)
class Occupation:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("occupation must have one value per grid node")
        if np.any(v < 0.0) or np.any(v > 1.0) or not np.all(np.isfinite(v)):
            raise ValueError("occupation values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def density(self) -> float:
        return RHO_FACTOR * self.grid.integrate_k2(self.values)

    def is_decreasing(self, slack: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.values) <= slack))


@dataclass
class FixedPointResult:
    occupation: Occupation
    potential: np.ndarray
    mu: float
    temperature: float
    density: float
    free_energy: float
    branch: str
    iterations: int
    residual: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self) -> RadialGrid:
        return self.occupation.grid

    @property
    def g(self) -> np.ndarray:
        return self.occupation.values


# --- elementary pieces -------------------------------------------------------


def fermi(h, beta: float) -> np.ndarray:
    """Fermi-Dirac factor 1/(1+exp(beta h)), clamped away from 0 and 1."""
    # expit keeps full relative precision in the exp(-x) tail
    g = special.expit(-beta * np.asarray(h, dtype=float))
    return np.clip(g, G_FLOOR, G_CEIL)


def fermi_entropy_density(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    out = np.zeros_like(g)
    for p in (g, 1.0 - g):
        m = p > G_FLOOR
        out[m] -= p[m] * np.log(p[m])
    return out


@lru_cache(maxsize=32)
def _operator_cached(pot: RieszPotential, edges: bytes, order: int) -> ConvolutionOperator:
    grid = RadialGrid(np.frombuffer(edges, dtype=float).copy(), order)
    return ConvolutionOperator(pot, grid)


def operator_for(pot: RieszPotential, grid: RadialGrid) -> ConvolutionOperator:
    """Convolution operator of ``pot`` on ``grid`` (cached, read-only)."""
    op = _operator_cached(pot, grid.edges.tobytes(), grid.order)
    return op


def _matrix(pot, grid):
    return operator_for(pot, grid).matrix


def _check_d3(pot):
    if pot.d != 3:
        raise ValueError("the radial solver is implemented for d = 3 only")


def _check_T(T):
    if not T > 0:
        raise ValueError("temperature must be positive")


def hammerstein_apply(pot: RieszPotential, g: Occupation, mu: float, T: float) -> Occupation:
    """One application of g -> 1/(1 + exp(beta (k^2/2 - w*g - mu)))."""
    _check_d3(pot)
    _check_T(T)
    k = g.grid.nodes
    V = _matrix(pot, g.grid) @ g.values
    return Occupation(g.grid, fermi(0.5 * k * k - V - mu, 1.0 / T))


def _energy_terms(grid, g, V, T):
    k = grid.nodes
    kin = 0.5 * k * k * g
    exch = -0.5 * V * g
    ent = -T * fermi_entropy_density(g) if T > 0 else 0.0
    return RHO_FACTOR * grid.integrate_k2(kin + exch + ent)


def free_energy(pot: RieszPotential, g: Occupation, T: float) -> float:
    """Free energy per volume: kinetic - exchange/2 - T * entropy."""
    _check_d3(pot)
    if T < 0:
        raise ValueError("temperature must be non-negative")
    V = _matrix(pot, g.grid) @ g.values
    return _energy_terms(g.grid, g.values, V, T)


def _result(pot, grid, g, mu, T, branch, iterations, diagnostics=None):
    M = _matrix(pot, grid)
    V = M @ g
    k = grid.nodes
    res = float(np.max(np.abs(g - fermi(0.5 * k * k - V - mu, 1.0 / T))))
    return FixedPointResult(
        occupation=Occupation(grid, g),
        potential=V,
        mu=float(mu),
        temperature=float(T),
        density=RHO_FACTOR * grid.integrate_k2(g),
        free_energy=_energy_terms(grid, g, V, T),
        branch=branch,
        iterations=int(iterations),
        residual=res,
        diagnostics=dict(diagnostics or {}),
    )


def exchange_bound(pot: RieszPotential, rho: float) -> float:
    """sum_i C_i rho^(s_i/d) with C_i = kappa_i |S^{d-1}| c_TF^(s_i/2) / s_i."""
    if rho < 0:
        raise ValueError("density must be non-negative")
    d = pot.d
    ctf = thomas_fermi_constant(d)
    return float(
        sum(kap * surface_area(d) / s * ctf ** (s / 2) * rho ** (s / d) for kap, s in pot.terms)
    )


def uniqueness_region(pot: RieszPotential, rho: float, T: float, constants) -> str:
    """Classify (rho, T) against the two explicit uniqueness regions.

    ``constants = (C, rho_C, alpha)`` parametrize the low-temperature region
    ``T exp(alpha rho^(1/d)) > C`` for rho < rho_C, which is not explicit.
    """
    C, rho_C, alpha = constants
    if exchange_bound(pot, rho) < T:
        return "inside_Omega1"
    if rho < rho_C and T * math.exp(alpha * rho ** (1.0 / pot.d)) > C:
        return "inside_Omega2"
    return "outside"


def contraction_norm(pot: RieszPotential, result: FixedPointResult) -> float:
    """beta * max_k (w * g(1-g))(k), the sup-norm of the linearized map."""
    g = result.g
    v = _matrix(pot, result.grid) @ (g * (1.0 - g))
    return float(np.max(v) / result.temperature)


# --- grids adapted to the Fermi edge ------------------------------------------


def _profile(grid, V, mu, T):
    k = grid.nodes
    return k, (0.5 * k * k - V - mu) / T


def _free_profile(mu, T, k_hi):
    k = np.linspace(0.0, k_hi, 4001)
    return k, (0.5 * k * k - mu) / T


def _k_floor(T, k_star):
    return 4.0 * max(k_star, math.sqrt(80.0 * T))


def _zero_T_roots(pot, mu):
    """Densities of the T = 0 Fermi balls with chemical potential mu."""
    rho = np.logspace(-14, 4, 721)
    f = mu_T0(pot, rho) - mu
    roots = []
    for i in np.flatnonzero(np.sign(f[:-1]) != np.sign(f[1:])):
        roots.append(optimize.brentq(lambda r: mu_T0(pot, r) - mu, rho[i], rho[i + 1], xtol=1e-300, rtol=1e-12))
    return roots


def _pilot_profiles(pot, mu, T):
    kfs = [(6.0 * math.pi**2 * r) ** (1.0 / 3.0) for r in _zero_T_roots(pot, mu)]
    k_hi = 8.0 * max(kfs + [math.sqrt(2.0 * max(mu, 0.0) + 100.0 * T)])
    profiles = [_free_profile(mu, T, k_hi)]
    for kf in kfs:
        profiles.append(_free_profile(0.5 * kf * kf, T, k_hi))
    return profiles


def _edge_radius(k, u):
    return float(np.interp(0.0, np.maximum.accumulate(u), k)) if u[0] < 0 < u[-1] else 0.0


def _grid_from(profiles, cfg: SolverConfig, T):
    k_star = 0.0
    for k, u in profiles:
        k_star = max(k_star, _edge_radius(k, u))
    edges = edges_from_profiles(profiles, cfg.grid, k_floor=_k_floor(T, k_star))
    return RadialGrid(edges, cfg.grid.order)


# --- extremal solutions -------------------------------------------------------


def _iterate_extremal(pot, grid, mu, T, branch, cfg: SolverConfig, g=None, others=(), adapt=True):
    """Monotone iteration, continued onto rebuilt grids while the edge is under-resolved.

    A converged state whose Fermi edge falls inside coarse panels is carried to
    a grid built around its own profile (and ``others``) by interpolating V.
    Interpolation does not preserve the ordering, so monotonicity is asserted
    only while iterating from 0 or 1; later reversals are reported as ``drift``.
    Returns ``(grid, g, iterations, history, worst, drift, transfers)``.
    """
    beta = 1.0 / T
    sign = 1.0 if branch == "minimal" else -1.0
    carried = g is not None
    if g is None:
        g = np.zeros(len(grid)) if branch == "minimal" else np.ones(len(grid))
    history = []
    worst = drift = 0.0
    total = 0
    transfers = 0
    while True:
        M = _matrix(pot, grid)
        k = grid.nodes
        half_k2 = 0.5 * k * k
        for it in range(1, cfg.max_iter + 1):
            new = fermi(half_k2 - M @ g - mu, beta)
            if cfg.damping < 1.0:
                new = (1.0 - cfg.damping) * g + cfg.damping * new
            step = new - g
            viol = float(np.max(-sign * step))
            if carried:
                drift = max(drift, viol)
            else:
                worst = max(worst, viol)
                if viol > cfg.monotone_slack:
                    raise MonotonicityError(
                        f"{branch} iteration lost monotonicity by {viol:.3e} at step {total + it}"
                    )
            res = float(np.max(np.abs(step)))
            history.append(res)
            g = new
            if res <= cfg.tol:
                break
        else:
            raise ConvergenceError(
                f"{branch} iteration did not converge in {cfg.max_iter} steps (residual {res:.3e})",
                history,
            )
        total += it
        if not adapt:
            return grid, g, total, history, worst, drift, transfers
        V = M @ g
        prof = (k, (half_k2 - V - mu) * beta)
        if grid_adequate(grid.edges, *prof, cfg.grid, k_floor=_k_floor(T, _edge_radius(*prof))):
            return grid, g, total, history, worst, drift, transfers
        if transfers >= cfg.max_transfers:
            log.warning("%s iteration at mu=%g T=%g kept outgrowing its grid", branch, mu, T)
            return grid, g, total, history, worst, drift, transfers
        new_grid = _grid_from([prof, *others], cfg, T)
        kn = new_grid.nodes
        g = fermi(0.5 * kn * kn - grid.interpolate(V, kn) - mu, beta)
        grid = new_grid
        transfers += 1
        carried = True


def _carry(result: FixedPointResult, grid, T):
    """Occupation of ``result`` moved onto ``grid`` through its potential."""
    k = grid.nodes
    return fermi(0.5 * k * k - result.grid.interpolate(result.potential, k) - result.mu, 1.0 / T)


def solve_pair(pot: RieszPotential, mu: float, T: float, cfg: SolverConfig | None = None,
               branches=("minimal", "maximal")) -> dict[str, FixedPointResult]:
    """Extremal solutions at (mu, T) on one shared grid adapted to all of them."""
    _check_d3(pot)
    _check_T(T)
    cfg = cfg or SolverConfig()
    grid = _grid_from(_pilot_profiles(pot, mu, T), cfg, T)
    out: dict[str, FixedPointResult] = {}
    prev = None
    for npass in range(1, cfg.grid_passes + 1):
        # sweep the branches until none of them moves the shared grid
        for _ in range(cfg.max_transfers):
            moved = False
            for b in branches:
                others = [_profile(r.grid, r.potential, mu, T) for name, r in out.items() if name != b]
                start = _carry(out[b], grid, T) if b in out else None
                grid_b, g, it, hist, worst, drift, tr = _iterate_extremal(pot, grid, mu, T, b, cfg, start, others)
                moved = moved or grid_b is not grid
                grid = grid_b
                out[b] = _result(pot, grid, g, mu, T, b, it, {
                    "grid_passes": npass, "history_tail": hist[-5:], "monotone_defect": worst,
                    "transfer_drift": drift, "transfers": tr})
            if not moved and all(r.grid is grid for r in out.values()):
                break
        dens = np.array([out[b].density for b in branches])
        if prev is not None and np.all(np.abs(dens - prev) <= cfg.grid_rtol_extremal * np.maximum(dens, 1e-300)):
            return out
        prev = dens
        grid = _grid_from([_profile(r.grid, r.potential, mu, T) for r in out.values()], cfg, T)
    log.warning("grid refinement at mu=%g T=%g stopped after %d passes", mu, T, cfg.grid_passes)
    return out


def solve_extremal(pot: RieszPotential, mu: float, T: float, branch: str,
                   cfg: SolverConfig | None = None, grid: RadialGrid | None = None) -> FixedPointResult:
    """Minimal (from g = 0) or maximal (from g = 1) fixed point by monotone iteration.

    With ``grid`` given the iteration runs on that grid only; otherwise the grid
    is adapted to the solution.
    """
    if branch not in ("minimal", "maximal"):
        raise ValueError("branch must be 'minimal' or 'maximal'")
    _check_d3(pot)
    _check_T(T)
    cfg = cfg or SolverConfig()
    if grid is None:
        return solve_pair(pot, mu, T, cfg, branches=(branch,))[branch]
    _, g, it, hist, worst, _, _ = _iterate_extremal(pot, grid, mu, T, branch, cfg, adapt=False)
    return _result(pot, grid, g, mu, T, branch, it, {"history_tail": hist[-5:], "monotone_defect": worst})


# --- Newton polishing ---------------------------------------------------------


def _newton_fixed_mu(M, k, g, mu, T, tol, max_iter=60):
    beta = 1.0 / T
    half_k2 = 0.5 * k * k
    n = k.size
    for it in range(max_iter):
        F = fermi(half_k2 - M @ g - mu, beta)
        r = g - F
        res = float(np.max(np.abs(r)))
        if res <= tol:
            return g, it, res
        D = beta * F * (1.0 - F)
        J = np.eye(n) - D[:, None] * M
        step = linalg.solve(J, -r)
        lam = 1.0
        for _ in range(30):
            trial = np.clip(g + lam * step, 0.0, 1.0)
            rt = float(np.max(np.abs(trial - fermi(half_k2 - M @ trial - mu, beta))))
            if rt < res:
                break
            lam *= 0.5
        g = trial
    F = fermi(half_k2 - M @ g - mu, beta)
    return g, max_iter, float(np.max(np.abs(g - F)))


def _damped_polish(M, k, g, mu, T, tol, theta, max_iter=2000):
    beta = 1.0 / T
    half_k2 = 0.5 * k * k
    for it in range(max_iter):
        F = fermi(half_k2 - M @ g - mu, beta)
        res = float(np.max(np.abs(g - F)))
        if res <= tol:
            return g, it, res
        g = (1.0 - theta) * g + theta * F
    return g, max_iter, res


# --- middle solution ----------------------------------------------------------


def _reparametrize(beads, W):
    seg = np.sqrt(((np.diff(beads, axis=0) ** 2) * W).sum(axis=1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        return beads
    target = np.linspace(0.0, s[-1], beads.shape[0])
    idx = np.clip(np.searchsorted(s, target, side="right") - 1, 0, len(s) - 2)
    span = np.where(seg[idx] > 0, seg[idx], 1.0)
    frac = ((target - s[idx]) / span)[:, None]
    return beads[idx] + frac * (beads[idx + 1] - beads[idx])


def _relax_string(M, half_k2, W, mu, beta, left, right, cfg):
    """Evolve a straight string between fixed ends under the map until it settles."""
    s = np.linspace(0.0, 1.0, cfg.n_beads)[:, None]
    beads = (1.0 - s) * left + s * right
    it = 0
    for it in range(1, cfg.string_iter + 1):
        pushed = fermi(half_k2 - beads @ M.T - mu, beta)
        pushed[0], pushed[-1] = left, right
        if it % cfg.reparam_every == 0:
            pushed = _reparametrize(pushed, W)
        change = float(np.max(np.abs(pushed - beads)))
        beads = pushed
        if change <= 1e-3 * cfg.tol:
            break
    return beads, it


def solve_middle(pot: RieszPotential, mu: float, T: float, gmin: FixedPointResult,
                 gmax: FixedPointResult, cfg: SolverConfig | None = None) -> FixedPointResult | None:
    """Middle fixed point between the extremal ones, by a string method.

    The string joining g_min and g_max is pushed by the fixed-point map and
    re-sampled to uniform arc length; the interior bead with the smallest
    residual seeds a Newton polish at fixed mu.  Returns None when the string
    carries no interior fixed point.
    """
    _check_d3(pot)
    _check_T(T)
    cfg = cfg or SolverConfig()
    grid = gmin.grid
    if gmax.grid is not grid and not np.array_equal(gmax.grid.edges, grid.edges):
        raise ValueError("extremal solutions must live on the same grid")
    gap = float(np.max(np.abs(gmax.g - gmin.g)))
    if gap <= 10.0 * cfg.tol:
        raise ValueError("g_min and g_max coincide; there is no middle solution to find")
    M = _matrix(pot, grid)
    k = grid.nodes
    beta = 1.0 / T
    half_k2 = 0.5 * k * k
    W = grid.weights
    rho_lo, rho_hi = gmin.density, gmax.density
    margin = 1e-6 * (rho_hi - rho_lo)
    left, right = gmin.g, gmax.g
    total_it = 0
    for level in range(cfg.string_levels):
        beads, it = _relax_string(M, half_k2, W, mu, beta, left, right, cfg)
        total_it += it
        pushed = fermi(half_k2 - beads @ M.T - mu, beta)
        resid = np.max(np.abs(beads - pushed), axis=1)
        # density drift under the map: negative toward g_min, positive toward g_max
        flow = (pushed - beads) @ W
        if level == 0:
            flow[0], flow[-1] = -1.0, 1.0
        interior = np.arange(1, cfg.n_beads - 1)
        stationary = [i for i in interior if resid[i] <= resid[i - 1] and resid[i] <= resid[i + 1]]
        crossing = [j for j in range(cfg.n_beads - 1) if flow[j] <= 0.0 < flow[j + 1]]
        near_cross = [i for j in crossing for i in (j, j + 1) if 0 < i < cfg.n_beads - 1]
        order = sorted(set(stationary) | set(near_cross), key=lambda i: resid[i])
        for i in order:
            g, nit, res = _newton_fixed_mu(M, k, beads[i].copy(), mu, T, cfg.tol)
            method = "newton"
            if res > cfg.tol:
                for theta in cfg.polish_damping:
                    g, nit, res = _damped_polish(M, k, beads[i].copy(), mu, T, cfg.tol, theta)
                    method = f"damped({theta})"
                    if res <= cfg.tol:
                        break
            if res > cfg.tol:
                continue
            rho = RHO_FACTOR * grid.integrate_k2(g)
            if rho_lo + margin < rho < rho_hi - margin:
                diag = {
                    "string_iterations": total_it,
                    "string_level": level,
                    "seed_bead": int(i),
                    "stationary_beads": [int(j) for j in stationary],
                    "multiple_candidates": len(stationary) > 1 or len(crossing) > 1,
                    "polish": method,
                }
                return _result(pot, grid, g, mu, T, "middle", total_it + nit, diag)
        if not crossing:
            break
        # the saddle sits inside one segment: zoom the string onto it
        j = crossing[0]
        left, right = beads[j].copy(), beads[j + 1].copy()
    log.info("no middle solution at mu=%g T=%g", mu, T)
    return None


# --- fixed density --------------------------------------------------------------


def _mu_for_density(half_k2, V, W, rho, T):
    beta = 1.0 / T

    def dens(m):
        return RHO_FACTOR * float(np.dot(W, fermi(half_k2 - V - m, beta)))

    lo = float(np.min(half_k2 - V)) - T
    step = max(T, 1e-3)
    while dens(lo) > rho:
        lo -= step
        step *= 2
    hi = lo + step
    while dens(hi) < rho:
        hi += step
        step *= 2
    return optimize.brentq(lambda m: dens(m) - rho, lo, hi, xtol=1e-15 * max(1.0, abs(hi)), rtol=1e-15, maxiter=400)


def _newton_fixed_rho(M, k, W, V, rho, T, tol, max_iter=60):
    """Newton on the potential V; mu is re-solved from the density at every step.

    With mu(V) eliminated the linearization is ``I - M D (I - 1 w^T)`` where D is
    the Fermi derivative and w = W D / sum(W D), which stays well scaled from the
    degenerate to the classical regime.
    """
    beta = 1.0 / T
    half_k2 = 0.5 * k * k
    n = k.size

    def state(V):
        mu = _mu_for_density(half_k2, V, W, rho, T)
        g = fermi(half_k2 - V - mu, beta)
        return mu, g, M @ g

    mu, g, Vn = state(V)
    for it in range(max_iter):
        res = float(np.max(np.abs(g - fermi(half_k2 - Vn - mu, beta))))
        if res <= tol:
            return g, mu, it, True
        R = V - Vn
        D = beta * g * (1.0 - g)
        wd = W * D
        w = wd / wd.sum()
        J = np.eye(n) - M * D[None, :] + (M @ D)[:, None] * w[None, :]
        dV = linalg.solve(J, -R, check_finite=False)
        merit = float(np.max(np.abs(R)))
        lam = 1.0
        for _ in range(30):
            V_t = V + lam * dV
            mu_t, g_t, Vn_t = state(V_t)
            if float(np.max(np.abs(V_t - Vn_t))) < merit:
                break
            lam *= 0.5
        V, mu, g, Vn = V_t, mu_t, g_t, Vn_t
    res = float(np.max(np.abs(g - fermi(half_k2 - Vn - mu, beta))))
    return g, mu, max_iter, res <= tol


def _canonical(pot, rho, T, cfg, warm: FixedPointResult | None = None):
    """Solution at fixed density, continued from ``warm`` when given."""
    if warm is not None:
        profiles = [_profile(warm.grid, warm.potential, warm.mu, T)]
    else:
        kf = (6.0 * math.pi**2 * rho) ** (1.0 / 3.0)
        mu_free = _free_mu(rho, T)
        k_hi = 8.0 * max(kf, math.sqrt(2.0 * max(mu_free, 0.0) + 100.0 * T))
        profiles = [_free_profile(mu_free, T, k_hi)]
    prev_mu = None
    total = 0
    if warm is not None:
        # the previous grid is often still fine for a nearby density
        grid = warm.grid
        g, mu, nit, ok = _newton_fixed_rho(_matrix(pot, grid), grid.nodes, grid.weights,
                                           warm.potential, rho, T, cfg.tol)
        total += nit
        if ok:
            res = _result(pot, grid, g, mu, T, "canonical", total, {"grid_passes": 0})
            k, u = _profile(grid, res.potential, mu, T)
            if grid_adequate(grid.edges, k, u, cfg.grid, k_floor=_k_floor(T, _edge_radius(k, u))):
                return res
            prev_mu = mu
            warm = res
            profiles = [(k, u)]
    for npass in range(1, cfg.grid_passes + 1):
        grid = _grid_from(profiles, cfg, T)
        M = _matrix(pot, grid)
        if warm is not None:
            V0 = warm.grid.interpolate(warm.potential, grid.nodes)
            # beyond the old cutoff the potential decays; keep it non-negative
            V0 = np.maximum(V0, 0.0)
        else:
            g_free = fermi(0.5 * grid.nodes**2 - mu_free, 1.0 / T)
            V0 = M @ g_free
        g, mu, nit, ok = _newton_fixed_rho(M, grid.nodes, grid.weights, V0, rho, T, cfg.tol)
        total += nit
        if not ok:
            raise ConvergenceError(f"fixed-density Newton failed at rho={rho:g}, T={T:g}")
        res = _result(pot, grid, g, mu, T, "canonical", total, {"grid_passes": npass})
        if prev_mu is not None and abs(mu - prev_mu) <= cfg.grid_rtol * (abs(mu) + T):
            return res
        prev_mu = mu
        warm = res
        profiles = [_profile(grid, res.potential, mu, T)]
    log.warning("grid refinement at rho=%g T=%g stopped after %d passes", rho, T, cfg.grid_passes)
    return res


def _free_mu(rho, T):
    """Chemical potential of the free Fermi gas, solved on a fine line grid."""
    kf = (6.0 * math.pi**2 * rho) ** (1.0 / 3.0)
    k_hi = 2.0 * kf + 12.0 * math.sqrt(T)
    k, w = np.polynomial.legendre.leggauss(400)
    k = 0.5 * k_hi * (k + 1.0)
    W = 0.5 * k_hi * w * k * k
    return _mu_for_density(0.5 * k * k, np.zeros_like(k), W, rho, T)


def solve_at_density(pot: RieszPotential, rho: float, T: float, branch: str = "auto",
                     cfg: SolverConfig | None = None, warm: FixedPointResult | None = None
                     ) -> FixedPointResult:
    """Self-consistent occupation with density rho at temperature T.

    ``branch="minimal"`` or ``"maximal"`` root-finds mu so that the chosen
    extremal solution has density rho; if that branch jumps over rho a
    :class:`BracketError` carries the scanned (mu, density) table.
    ``branch="auto"`` solves the density-constrained equations directly by
    Newton's method, which also reaches solutions that are not extremal.
    """
    _check_d3(pot)
    _check_T(T)
    if not rho > 0:
        raise ValueError("density must be positive")
    cfg = cfg or SolverConfig()
    if branch == "auto":
        return _canonical(pot, rho, T, cfg, warm)
    if branch not in ("minimal", "maximal"):
        raise ValueError("branch must be 'auto', 'minimal' or 'maximal'")
    table = []

    def dens(m):
        r = solve_extremal(pot, m, T, branch, cfg)
        table.append((m, r.density))
        return r

    mu0 = _free_mu(rho, T) if rho < 1e-12 else mu_T0(pot, rho)
    step = max(T, 0.01 * abs(mu0), 1e-4)
    lo = hi = mu0
    r_lo = r_hi = dens(mu0)
    while r_lo.density > rho:
        hi, r_hi = lo, r_lo
        lo -= step
        step *= 2
        r_lo = dens(lo)
    while r_hi.density < rho:
        lo, r_lo = hi, r_hi
        hi += step
        step *= 2
        r_hi = dens(hi)
    best = {}

    def f(m):
        r = dens(m)
        best[m] = r
        return r.density - rho

    try:
        m_star = optimize.brentq(f, lo, hi, xtol=1e-15 * max(1.0, abs(hi)), rtol=1e-15, maxiter=200)
    except ValueError as exc:
        raise BracketError(str(exc), table) from exc
    r = best.get(m_star) or dens(m_star)
    if abs(r.density - rho) > cfg.rho_rtol * rho:
        raise BracketError(
            f"{branch} branch density jumps over rho={rho:g} near mu={m_star:.12g}", sorted(table)
        )
    return r


# --- text dump ----------------------------------------------------------------


def dump_state(result: FixedPointResult, path) -> None:
    """Write a plain-text record: header lines then ``k g V`` per node."""
    g = result.g
    with open(path, "w") as fh:
        fh.write(f"# mu = {result.mu:.17e}\n")
        fh.write(f"# T = {result.temperature:.17e}\n")
        fh.write(f"# rho = {result.density:.17e}\n")
        fh.write(f"# branch = {result.branch}\n")
        fh.write(f"# residual = {result.residual:.17e}\n")
        fh.write(f"# order = {result.grid.order}\n")
        fh.write("# edges = " + " ".join(f"{e:.17e}" for e in result.grid.edges) + "\n")
        for k, gi, v in zip(result.grid.nodes, g, result.potential):
            fh.write(f"{k:.17e} {gi:.17e} {v:.17e}\n")


def load_state(path) -> dict:
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                header[key.strip()] = val.strip()
            elif line.strip():
                rows.append([float(x) for x in line.split()])
    data = np.array(rows)
    return {
        "mu": float(header["mu"]),
        "T": float(header["T"]),
        "rho": float(header["rho"]),
        "branch": header["branch"],
        "residual": float(header["residual"]),
        "k": data[:, 0],
        "g": data[:, 1],
        "V": data[:, 2],
    }
