from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, optimize

from hfspin.kernels import coulomb
from hfspin.radial import (
    Occupation,
    SolverConfig,
    free_energy,
    solve_at_density,
    solve_extremal,
    solve_middle,
    solve_pair,
)
from hfspin.radial.solver import (
    contraction_norm,
    dump_state,
    exchange_bound,
    fermi,
    hammerstein_apply,
    load_state,
    uniqueness_region,
)
from hfspin.zero_temperature import nospin_energy_T0


@pytest.fixture(scope="module")
def three_solutions():
    pot = coulomb(3)
    mu, T = -0.045, 0.01
    pair = solve_pair(pot, mu, T)
    mid = solve_middle(pot, mu, T, pair["minimal"], pair["maximal"])
    return pair["minimal"], mid, pair["maximal"]


def _free_density(mu, T):
    f = lambda k: k * k / (1 + math.exp(min((0.5 * k * k - mu) / T, 700)))
    k_hi = math.sqrt(2 * max(mu, 0) + 80 * T)
    edge = math.sqrt(2 * mu) if mu > 0 else None
    return integrate.quad(f, 0, k_hi, points=[edge] if edge else None, epsabs=0, epsrel=1e-13, limit=200)[0] / (
        2 * math.pi**2)


@pytest.mark.parametrize("rho, T", [(1e-3, 0.01), (1e-5, 0.05), (2e-2, 1e-3)])
def test_free_gas_chemical_potential(rho, T):
    weak = coulomb(3, 1e-12)
    res = solve_at_density(weak, rho, T)
    mu = optimize.brentq(lambda m: _free_density(m, T) - rho, -2.0, 2.0, xtol=1e-15, rtol=1e-14)
    assert res.mu == pytest.approx(mu, rel=1e-8, abs=1e-12)
    assert res.density == pytest.approx(rho, rel=1e-8)


def test_fermi_is_stable_in_tails():
    g = fermi(np.array([-1e4, 0.0, 1e4]), 1.0)
    assert g[1] == 0.5 and 0 < g[2] < 1e-200 and g[0] < 1


def test_hammerstein_map_preserves_order(pot, rng):
    res = solve_extremal(pot, -0.045, 0.01, "maximal")
    grid = res.grid
    for _ in range(5):
        lo = np.sort(rng.random(len(grid)))[::-1] * 0.5
        hi = np.minimum(lo + rng.random(len(grid)) * 0.5, 1.0)
        Glo = hammerstein_apply(pot, Occupation(grid, lo), -0.045, 0.01).values
        Ghi = hammerstein_apply(pot, Occupation(grid, hi), -0.045, 0.01).values
        assert np.all(Glo <= Ghi + 1e-15)


def test_low_temperature_matches_ground_state(pot):
    res = solve_at_density(pot, 1e-3, 1e-3)
    assert abs(res.density - 1e-3) <= 1e-8 * 1e-3
    e0 = nospin_energy_T0(pot, 1e-3)
    assert abs(res.free_energy - e0) <= 0.01 * abs(e0)


def test_unique_solution_far_below_the_band(pot):
    pair = solve_pair(pot, -10.0, 0.05)
    lo, hi = pair["minimal"], pair["maximal"]
    assert np.max(np.abs(lo.g - hi.g)) <= 1e-9
    assert contraction_norm(pot, hi) < 1
    with pytest.raises(ValueError):
        solve_middle(pot, -10.0, 0.05, lo, hi)


def test_random_starts_converge_when_contractive(pot, rng):
    mu, T = -0.04, 0.05
    ref = solve_extremal(pot, mu, T, "minimal")
    assert contraction_norm(pot, ref) < 1
    grid = ref.grid
    for _ in range(3):
        g = Occupation(grid, rng.random(len(grid)))
        for _ in range(400):
            g = hammerstein_apply(pot, g, mu, T)
        assert np.max(np.abs(g.values - ref.g)) <= 1e-8


def test_three_fixed_points_at_low_temperature(three_solutions):
    lo, mid, hi = three_solutions
    assert mid is not None
    assert lo.density < mid.density < hi.density
    assert hi.density > 1.05 * lo.density
    assert mid.residual <= 1e-8
    assert np.all(lo.g <= mid.g + 1e-10) and np.all(mid.g <= hi.g + 1e-10)


def test_extremal_iterations_are_monotone(three_solutions):
    lo, _, hi = three_solutions
    for r in (lo, hi):
        assert r.diagnostics["monotone_defect"] <= 1e-12
        assert r.residual <= 1e-9


def test_occupations_decrease(three_solutions):
    for r in three_solutions:
        assert r.occupation.is_decreasing(1e-9)


def test_three_fixed_points_at_T003(pot):
    pair = solve_pair(pot, -0.0557, 0.03)
    mid = solve_middle(pot, -0.0557, 0.03, pair["minimal"], pair["maximal"])
    assert mid is not None
    dens = [pair["minimal"].density, mid.density, pair["maximal"].density]
    assert dens == pytest.approx([1.114e-4, 2.338e-4, 5.794e-4], rel=2e-3)


def test_exchange_bound(pot, three_solutions):
    # for Coulomb the bound is the ball value 2 kF / pi at k = 0
    rho = 1e-3
    kf = (6 * math.pi**2 * rho) ** (1 / 3)
    assert exchange_bound(pot, rho) == pytest.approx(2 * kf / math.pi, rel=1e-13)
    for r in three_solutions:
        assert np.max(r.potential) <= exchange_bound(pot, r.density) * (1 + 1e-6)


def test_uniqueness_regions(pot):
    consts = (1.0, 1e-3, 5.0)
    assert uniqueness_region(pot, 1e-6, 1.0, consts) == "inside_Omega1"
    assert uniqueness_region(pot, 1e-4, 0.05, (0.01, 1e-3, 5.0)) == "inside_Omega2"
    assert uniqueness_region(pot, 1e-3, 1e-3, consts) == "outside"


def test_free_energy_of_empty_state(pot, three_solutions):
    grid = three_solutions[0].grid
    assert free_energy(pot, Occupation(grid, np.zeros(len(grid))), 0.01) == 0.0
    with pytest.raises(ValueError):
        free_energy(pot, Occupation(grid, np.zeros(len(grid))), -1.0)


def test_zero_temperature_ball_energy(pot):
    # the filled ball on a grid with an edge at kF reproduces the closed form
    from hfspin.radial import RadialGrid

    rho = 2e-3
    kf = (6 * math.pi**2 * rho) ** (1 / 3)
    grid = RadialGrid(np.concatenate([np.linspace(0, kf, 13), kf * np.geomspace(1, 4, 12)[1:]]), 10)
    g = (grid.nodes < kf).astype(float)
    assert free_energy(pot, Occupation(grid, g), 0.0) == pytest.approx(nospin_energy_T0(pot, rho), rel=1e-5)


def test_density_constrained_solution_is_a_local_minimum(pot):
    res = solve_at_density(pot, 5e-4, 0.02)
    grid, g = res.grid, res.g
    k = grid.nodes
    # density-neutral bump pair near the Fermi edge
    kf = k[np.argmin(np.abs(g - 0.5))]
    b1 = np.exp(-((k - 0.8 * kf) / (0.1 * kf)) ** 2)
    b2 = np.exp(-((k - 1.2 * kf) / (0.1 * kf)) ** 2)
    phi = b1 - grid.integrate_k2(b1) / grid.integrate_k2(b2) * b2
    F0 = res.free_energy
    for eps in (-1e-3, 1e-3):
        h = np.clip(g + eps * phi, 0, 1)
        assert free_energy(pot, Occupation(grid, h), 0.02) > F0


def test_refined_grid_changes_density_little(pot):
    mu, T = -0.045, 0.01
    a = solve_pair(pot, mu, T)
    b = solve_pair(pot, mu, T, SolverConfig().refined())
    for br in ("minimal", "maximal"):
        assert b[br].density == pytest.approx(a[br].density, rel=1e-6)


def test_extremal_on_cold_sharp_edge(pot):
    # the edge starts inside coarse panels; continuation must reach the ball
    from hfspin.zero_temperature import mu_T0

    res = solve_extremal(pot, mu_T0(pot, 1e-3), 1e-4, "maximal")
    assert res.density == pytest.approx(1e-3, rel=1e-4)


def test_branch_root_finding(pot):
    res = solve_at_density(pot, 2e-3, 0.05, branch="maximal")
    assert res.density == pytest.approx(2e-3, rel=1e-10)
    auto = solve_at_density(pot, 2e-3, 0.05)
    assert auto.mu == pytest.approx(res.mu, rel=1e-7)


def test_input_validation(pot):
    with pytest.raises(ValueError):
        solve_at_density(pot, -1.0, 0.01)
    with pytest.raises(ValueError):
        solve_pair(pot, 0.0, 0.0)
    with pytest.raises(ValueError):
        solve_extremal(pot, 0.0, 0.01, "middle")
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        solve_pair(coulomb(2), 0.0, 0.01)


def test_dump_roundtrip(tmp_path, three_solutions):
    r = three_solutions[2]
    path = tmp_path / "state.txt"
    dump_state(r, path)
    back = load_state(path)
    assert back["mu"] == r.mu and back["rho"] == r.density and back["branch"] == "maximal"
    np.testing.assert_array_equal(back["g"], r.g)
    np.testing.assert_array_equal(back["k"], r.grid.nodes)
