from __future__ import annotations

import math

import numpy as np
import pytest

from hfspin.kernels import RieszPotential, coulomb
from hfspin.radial import ConvolutionOperator, GridSpec, RadialGrid
from hfspin.radial.grid import edges_from_profiles, grid_adequate


def _ball_grid(kf, order=10):
    inner = np.linspace(0.0, kf, 13)
    outer = kf * np.geomspace(1.0, 6.0, 16)[1:]
    return RadialGrid(np.concatenate([inner, outer]), order)


def test_grid_integrates_polynomials():
    grid = RadialGrid(np.array([0.0, 0.3, 1.0, 2.5]), 8)
    assert grid.integrate_k2(np.ones(len(grid))) == pytest.approx(2.5**3 / 3, rel=1e-14)
    assert grid.integrate_k2(grid.nodes**4) == pytest.approx(2.5**7 / 7, rel=1e-14)
    # filled ball of radius kF has density kF^3 / (6 pi^2)
    assert grid.density(np.ones(len(grid))) == pytest.approx(2.5**3 / (6 * math.pi**2), rel=1e-14)


def test_grid_rejects_bad_edges():
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.1, 1.0]), 4)
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.0, 1.0, 1.0]), 4)


def test_interpolation_is_exact_for_panel_polynomials():
    grid = RadialGrid(np.array([0.0, 0.5, 1.2, 2.0]), 6)
    f = lambda k: 1 - 2 * k + 0.5 * k**5
    y = np.linspace(0, 2, 37)
    np.testing.assert_allclose(grid.interpolate(f(grid.nodes), y), f(y), rtol=1e-12, atol=1e-12)


def test_ball_potential_oracle():
    # w * 1_{|k|<kF} = (2 kF / pi) F(k / kF) for Coulomb
    kf = 0.4
    grid = _ball_grid(kf)
    k = grid.nodes
    g = (k < kf).astype(float)
    V = ConvolutionOperator(coulomb(3), grid)(g)
    x = k / kf
    F = 0.5 + (1 - x * x) / (4 * x) * np.log(np.abs((1 + x) / (1 - x)))
    np.testing.assert_allclose(V, 2 * kf / math.pi * F, rtol=1e-10)


def test_potential_positive_for_decreasing_occupations(rng):
    # near-diagonal Lagrange weights can be negative, the potential is not
    grid = _ball_grid(1.0)
    M = ConvolutionOperator(RieszPotential(((1.0, 1.0), (0.2, 2.5)), 3), grid).matrix
    for _ in range(20):
        g = np.sort(rng.random(len(grid)))[::-1]
        assert np.all(M @ g > 0)


def test_operator_rejects_other_dimensions():
    with pytest.raises(ValueError):
        ConvolutionOperator(coulomb(2), _ball_grid(1.0))


def test_edges_follow_profile():
    T, mu = 1e-3, 0.05
    k = np.linspace(0, 2, 4001)
    u = (0.5 * k * k - mu) / T
    spec = GridSpec()
    edges = edges_from_profiles([(k, u)], spec)
    assert edges[0] == 0 and np.all(np.diff(edges) > 0)
    assert grid_adequate(edges, k, u, spec)
    # a grid for a colder edge is not fine enough
    assert not grid_adequate(edges, k, u * 50, spec)
