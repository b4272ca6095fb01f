"""Composite Gauss-Legendre grids for radial momentum integrals in d = 3."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

__all__ = ["GridSpec", "RadialGrid", "gauss_legendre", "edges_from_profiles", "grid_adequate"]


@lru_cache(maxsize=64)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def _inverse_vandermonde(n: int):
    """Maps Legendre coefficients to nodal values; its inverse gives the Lagrange basis."""
    x, _ = gauss_legendre(n)
    inv = np.linalg.inv(np.polynomial.legendre.legvander(x, n - 1))
    inv.setflags(write=False)
    return inv


@dataclass(frozen=True)
class GridSpec:
    """Panel placement rule.

    Panels near the Fermi edge span at most ``du`` units of the Fermi exponent
    ``beta (k^2/2 - V - mu)``; the edge zone extends to ``|exponent| <= u_edge``.
    Elsewhere panels are at most ``h_bulk`` times the edge radius wide and grow
    geometrically by ``growth`` beyond the edge.  ``u_tail`` fixes the cutoff.
    """

    order: int = 10
    du: float = 2.5
    u_edge: float = 30.0
    u_tail: float = 46.0
    h_bulk: float = 0.12
    growth: float = 1.35
    max_panels: int = 400

    def refined(self) -> "GridSpec":
        return replace(self, du=self.du / 2, h_bulk=self.h_bulk / 2, growth=self.growth ** 0.5)


@dataclass(frozen=True)
class RadialGrid:
    edges: np.ndarray
    order: int

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e[0] != 0.0 or np.any(np.diff(e) <= 0):
            raise ValueError("panel edges must start at 0 and increase strictly")
        object.__setattr__(self, "edges", e)
        x, w = gauss_legendre(self.order)
        a, b = e[:-1, None], e[1:, None]
        nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
        gw = (0.5 * (b - a) * w).ravel()
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "line_weights", gw)
        # weights for int f(k) k^2 dk
        object.__setattr__(self, "weights", gw * nodes**2)

    @property
    def k_max(self) -> float:
        return float(self.edges[-1])

    @property
    def n_panels(self) -> int:
        return len(self.edges) - 1

    def __len__(self) -> int:
        return self.nodes.size

    def panel_slice(self, p: int) -> slice:
        return slice(p * self.order, (p + 1) * self.order)

    def lagrange(self, p: int, y: np.ndarray) -> np.ndarray:
        """Values of the panel-p Lagrange basis at points y, shape (order, len(y))."""
        a, b = self.edges[p], self.edges[p + 1]
        t = (2.0 * np.asarray(y, float) - (a + b)) / (b - a)
        return (np.polynomial.legendre.legvander(t, self.order - 1) @ _inverse_vandermonde(self.order)).T

    def interpolate(self, values: np.ndarray, y) -> np.ndarray:
        """Evaluate the piecewise-polynomial interpolant of nodal values at y."""
        y = np.atleast_1d(np.asarray(y, float))
        out = np.zeros_like(y)
        p_idx = np.clip(np.searchsorted(self.edges, y, side="right") - 1, 0, self.n_panels - 1)
        beyond = y > self.k_max
        for p in np.unique(p_idx):
            sel = (p_idx == p) & ~beyond
            if sel.any():
                out[sel] = values[self.panel_slice(p)] @ self.lagrange(p, y[sel])
        return out

    def integrate_k2(self, f: np.ndarray) -> float:
        """int_0^kmax f(k) k^2 dk."""
        return float(np.dot(self.weights, f))

    def density(self, g: np.ndarray) -> float:
        """(2 pi)^-3 * 4 pi int g k^2 dk for a radial occupation in d = 3."""
        return self.integrate_k2(g) / (2.0 * np.pi**2)


def _march(a: float, b: float, h_of_k, max_panels: int) -> list[float]:
    edges = [a]
    while edges[-1] < b:
        k = edges[-1]
        h = h_of_k(k)
        if k + 1.3 * h >= b:
            edges.append(b)
            break
        edges.append(k + h)
        if len(edges) > max_panels:
            raise RuntimeError("panel budget exceeded while building radial grid")
    return edges


def edges_from_profiles(profiles, spec: GridSpec, k_floor: float = 0.0) -> np.ndarray:
    """Panel edges adapted to one or more Fermi-exponent profiles.

    Each profile is a pair ``(k, u)`` of increasing sample momenta and the
    exponent ``u(k) = beta (k^2/2 - V(k) - mu)`` there (assumed increasing).
    """
    marks = []  # edges forced by the u-level equidistribution
    k_stars, k_ends = [], []
    for k, u in profiles:
        k = np.asarray(k, float)
        u = np.maximum.accumulate(np.asarray(u, float))
        # without an edge (u > 0 everywhere) g ~ exp(-u); resolve relative to u[0]
        shift = max(u[0], 0.0)
        lo = max(u[0], -spec.u_edge)
        hi = min(u[-1], shift + spec.u_edge)
        if hi > lo:
            levels = np.arange(lo, hi + spec.du, spec.du)
            levels = levels[levels <= hi]
            marks.extend(np.interp(levels, u, k).tolist())
            marks.append(float(np.interp(hi, u, k)))
        # outer end of the edge zone sets the bulk panel scale
        k_stars.append(float(np.interp(min(shift + spec.u_edge, u[-1]), u, k)))
        u_cut = shift + spec.u_tail
        if u[-1] >= u_cut:
            k_ends.append(float(np.interp(u_cut, u, k)))
        else:
            # extrapolate with the free-particle slope
            slope = max((u[-1] - u[-2]) / (k[-1] - k[-2]), 1e-12)
            k_ends.append(k[-1] + (u_cut - u[-1]) / slope)
    k_star = max(max(k_stars), 1e-3)
    k_max = max(max(k_ends), 4.0 * k_star, k_floor)
    h_bulk = spec.h_bulk * k_star

    marks = np.unique(np.clip(np.asarray(marks), 0.0, k_max))
    zone_lo = marks[0] if marks.size else k_star
    zone_hi = marks[-1] if marks.size else k_star

    def h_of_k(k):
        if k < zone_lo:
            return min(h_bulk, zone_lo - k) if zone_lo - k > 1e-14 else h_bulk
        dist = max(0.0, k - zone_hi)
        return h_bulk * spec.growth ** (dist / h_bulk) if dist > 0 else h_bulk

    pieces = [0.0]
    anchors = [0.0] + [m for m in marks if m > 0.0] + [k_max]
    for a, b in zip(anchors[:-1], anchors[1:]):
        if b - a <= 0:
            continue
        seg = _march(a, b, h_of_k, spec.max_panels)
        pieces.extend(seg[1:])
    edges = np.unique(np.asarray(pieces))
    # drop slivers left by merging profiles
    min_gap = 1e-3 * np.min(np.diff(edges)) if edges.size > 2 else 0.0
    keep = np.concatenate([[True], np.diff(edges) > max(min_gap, 1e-13)])
    edges = edges[keep]
    if edges.size - 1 > spec.max_panels:
        raise RuntimeError("panel budget exceeded while building radial grid")
    return edges


def grid_adequate(edges, k, u, spec: GridSpec, slack: float = 1.5, k_floor: float = 0.0) -> bool:
    """Whether existing panels still satisfy the edge rule for the profile (k, u)."""
    u = np.maximum.accumulate(np.asarray(u, float))
    shift = max(u[0], 0.0)
    ue = np.interp(edges, k, u)
    lo = np.maximum(ue[:-1], -spec.u_edge)
    hi = np.minimum(ue[1:], shift + spec.u_edge)
    if np.any((hi > lo) & (hi - lo > slack * spec.du)):
        return False
    if edges[-1] < k_floor:
        return False
    # the last node must already sit beyond the tail level
    return bool(u[-1] >= shift + spec.u_tail)
