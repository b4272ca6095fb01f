"""Discretized exchange convolution ``V = w * g`` for radial occupations in d = 3."""

from __future__ import annotations

import math

import numpy as np

from ..kernels import RieszPotential, angular_kernel, angular_kernel_offset
from .grid import RadialGrid, gauss_legendre

__all__ = ["ConvolutionOperator", "graded_rule"]

GRADING_RATIO = 0.15
LEVEL_ORDER = 12


def graded_rule(length: float, min_exponent: float, tol: float = 1e-15):
    """Offsets and weights on [0, length] graded geometrically toward 0.

    The innermost piece of size ``eps`` is dropped; it is chosen so that
    ``eps ** min(min_exponent, 1) <= tol * length ** min(min_exponent, 1)``.
    """
    a = min(min_exponent, 1.0)
    n_lev = int(math.ceil(math.log(tol) / (a * math.log(GRADING_RATIO))))
    x, w = gauss_legendre(LEVEL_ORDER)
    hi = length * GRADING_RATIO ** np.arange(n_lev)
    lo = hi * GRADING_RATIO
    half = 0.5 * (hi - lo)
    pts = (half[:, None] * x + (0.5 * (hi + lo))[:, None]).ravel()
    wts = (half[:, None] * w).ravel()
    return pts, wts


class ConvolutionOperator:
    """Matrix M with ``(M g)_i ~ int K(k_i, k') g(k') k'^2 dk'``.

    Panels close to a target node are integrated against the panel's Lagrange
    basis with rules graded toward the kernel singularity; distant panels use
    the grid's own quadrature.  ``symmetrize`` averages M with its adjoint in
    the quadrature inner product; that makes M g the exact gradient of the
    discrete exchange energy but costs accuracy next to sharp edges, so it is
    off by default.
    """

    def __init__(self, pot: RieszPotential, grid: RadialGrid, near: float = 1.0,
                 symmetrize: bool = False):
        if pot.d != 3:
            raise ValueError("the radial solver is implemented for d = 3 only")
        self.pot = pot
        self.grid = grid
        k = grid.nodes
        W = grid.weights
        kk, yy = np.meshgrid(k, k, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            M = angular_kernel(pot, kk, yy) * W[None, :]
        # the graded rule scales linearly with the piece length
        off, wt = graded_rule(1.0, min(pot.exponents))
        e = grid.edges
        for p in range(grid.n_panels):
            a, b = e[p], e[p + 1]
            h = b - a
            targets = np.flatnonzero((k >= a - near * h) & (k <= b + near * h))
            x0 = k[targets][:, None]
            # piece below the target (or the whole panel when the target is above it)
            end_l = np.minimum(x0, b)
            len_l = np.maximum(end_l - a, 0.0)
            # piece above the target
            start_r = np.maximum(x0, a)
            len_r = np.maximum(b - start_r, 0.0)
            dy = np.concatenate([(end_l - x0) - len_l * off, (start_r - x0) + len_r * off], axis=1)
            wq = np.concatenate([len_l * wt, len_r * wt], axis=1)
            y = x0 + dy
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = angular_kernel_offset(pot, np.broadcast_to(x0, dy.shape), dy)
                f = np.where(wq > 0, kern * wq * y * y, 0.0)
            L = grid.lagrange(p, y.ravel()).reshape(grid.order, *y.shape)
            M[targets, grid.panel_slice(p)] = np.einsum("jtq,tq->tj", L, f)
        if symmetrize:
            M = 0.5 * (M + M.T * W[None, :] / W[:, None])
        self.matrix = M

    def __call__(self, g: np.ndarray) -> np.ndarray:
        return self.matrix @ g

    def min_entry(self) -> float:
        return float(self.matrix.min())

