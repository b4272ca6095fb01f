from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from hfspin.kernels import RieszPotential, coulomb, energy_coefficients
from hfspin.zero_temperature import (
    PolarizationCurve,
    classify_transition,
    detect_transitions,
    lambda_of_x,
    mu_T0,
    nospin_energy_T0,
    polarization_curve,
    polarization_energy,
    scan_polarization,
    wigner_seitz_radius,
)

RHO_C = 125 / (24 * math.pi**5) * (1 + 2 ** (1 / 3)) ** -3


def test_energy_against_direct_integration(pot):
    # kinetic: int_{|k|<kF} k^2/2 dk / (2 pi)^3; exchange from the ball potential
    rho = 2e-3
    kf = (6 * math.pi**2 * rho) ** (1 / 3)
    kin = integrate.quad(lambda k: 0.5 * k**4, 0, kf)[0] / (2 * math.pi**2)

    def F(x):
        return 0.5 + (1 - x * x) / (4 * x) * math.log(abs((1 + x) / (1 - x)))

    ex = 0.5 / (2 * math.pi**2) * integrate.quad(lambda k: 2 * kf / math.pi * F(k / kf) * k * k, 0, kf,
                                                 points=[kf])[0]
    assert nospin_energy_T0(pot, rho) == pytest.approx(kin - ex, rel=1e-9)


def test_mu_is_energy_derivative(pot):
    for rho in (1e-5, 1e-3, 0.2):
        h = 1e-5 * rho
        fd = (nospin_energy_T0(pot, rho + h) - nospin_energy_T0(pot, rho - h)) / (2 * h)
        assert mu_T0(pot, rho) == pytest.approx(fd, rel=1e-8)


def test_mu_closed_form(pot):
    mc = energy_coefficients(pot)
    rho = 3e-3
    assert mu_T0(pot, rho) == pytest.approx(
        5 / 3 * mc.kappa_d * rho ** (2 / 3) - 4 / 3 * mc.lambda_ds[0] * rho ** (1 / 3), rel=1e-13)


def test_energy_rejects_negative_density(pot):
    with pytest.raises(ValueError):
        nospin_energy_T0(pot, -1.0)
    with pytest.raises(ValueError):
        mu_T0(pot, 0.0)
    assert nospin_energy_T0(pot, 0.0) == 0.0


def test_energy_minimum_location(pot):
    # E = kap r^(5/3) - lam r^(4/3) has dE/dr = 0 at r^(1/3) = 4 lam / (5 kap)
    mc = energy_coefficients(pot)
    r_star = (0.8 * mc.lambda_ds[0] / mc.kappa_d) ** 3
    assert mu_T0(pot, r_star) == pytest.approx(0.0, abs=1e-15)


def test_polarization_energy_endpoints_and_symmetry(pot):
    rho = 1e-3
    assert polarization_energy(pot, rho, 0.0) == pytest.approx(nospin_energy_T0(pot, rho), rel=1e-14)
    assert polarization_energy(pot, rho, 0.5) == pytest.approx(2 * nospin_energy_T0(pot, rho / 2), rel=1e-14)
    from hfspin.zero_temperature import _pol_energy_unchecked

    t = np.linspace(0, 0.5, 11)
    np.testing.assert_allclose(_pol_energy_unchecked(pot, rho, t), _pol_energy_unchecked(pot, rho, 1 - t),
                               rtol=1e-14)
    with pytest.raises(ValueError):
        polarization_energy(pot, rho, 0.6)


def test_polarization_curve_validation(pot):
    c = polarization_curve(pot, 1e-3, n=21)
    assert c.t[0] == 0 and c.t[-1] == 0.5 and c.energy.shape == (21,)
    with pytest.raises(ValueError):
        PolarizationCurve(1e-3, np.array([0.0, 0.3]), np.zeros(2))


def test_coulomb_transition(pot):
    rep = classify_transition(pot)
    assert rep.kind == "first_order"
    (rc, label), = rep.critical_densities
    assert label == "rho_c"
    assert rc == pytest.approx(RHO_C, rel=1e-12)
    assert 5.40 <= wigner_seitz_radius(rc) <= 5.50


def test_coexistence_at_rho_c(pot):
    rc = classify_transition(pot).critical_densities[0][0]
    p0, p_half = polarization_energy(pot, rc, 0.0), polarization_energy(pot, rc, 0.5)
    assert abs(p0 - p_half) <= 1e-10 * abs(p0)


def test_transition_scales_with_coupling():
    # rho_c ~ alpha^(d/(2-s)); doubling the Coulomb charge gives 2^3
    r1 = classify_transition(coulomb(3)).critical_densities[0][0]
    r2 = classify_transition(coulomb(3, 2.0)).critical_densities[0][0]
    assert r2 / r1 == pytest.approx(8.0, rel=1e-12)
    s = 1.5
    a = classify_transition(RieszPotential.from_real_space(3, [(1.0, s)])).critical_densities[0][0]
    b = classify_transition(RieszPotential.from_real_space(3, [(3.0, s)])).critical_densities[0][0]
    assert b / a == pytest.approx(3.0 ** (3 / (2 - s)), rel=1e-10)


def test_scan_agrees_with_closed_form(pot):
    rhos = np.linspace(0.2 * RHO_C, 3 * RHO_C, 40)
    for r, t in scan_polarization(pot, rhos):
        assert t == (0.0 if r < RHO_C else 0.5)


def test_second_order_regime():
    pot = RieszPotential.from_real_space(3, [(1.0, 2.5)])
    rep = classify_transition(pot)
    assert rep.kind == "second_order"
    (lo, _), (hi, _) = rep.critical_densities
    assert lo < hi
    # polarized phase sits at high density for s > 2
    scan = dict(scan_polarization(pot, [0.5 * lo, 0.5 * (lo + hi), 2 * hi]))
    assert scan[0.5 * lo] == pytest.approx(0.5, abs=1e-6)
    assert scan[2 * hi] == pytest.approx(0.0, abs=1e-6)
    mid = 0.5 * (lo + hi)
    assert scan[mid] == pytest.approx(rep.polarization_at(mid), abs=1e-5)
    assert 0 < scan[mid] < 0.5


def test_lambda_of_x_endpoints():
    p, q = 7 / 6, 5 / 3
    # the correction decays like x^(p-1)
    assert lambda_of_x(p, q, 1e-60) == pytest.approx(q / p, rel=1e-8)
    lam_half = q * (q - 1) / (p * (p - 1)) * 2 ** (p - q)
    assert lambda_of_x(p, q, 0.5 - 1e-6) == pytest.approx(lam_half, rel=1e-6)


def test_weak_exchange_stays_paramagnetic():
    pot = coulomb(3, 1e-4)
    for _, t in scan_polarization(pot, np.geomspace(1e-6, 1.0, 15)):
        assert t == 0.5


def test_scan_rejects_bad_grid(pot):
    with pytest.raises(ValueError):
        scan_polarization(pot, [])
    with pytest.raises(ValueError):
        scan_polarization(pot, [2e-3, 1e-3])


def test_detect_transitions_coulomb(pot):
    scan = scan_polarization(pot, np.linspace(1e-4, 4e-3, 60))
    (r, kind), = detect_transitions(scan, pot=pot)
    assert kind == "first_order"
    assert r == pytest.approx(RHO_C, rel=1e-9)


def test_mixed_potential_three_transitions():
    pot = RieszPotential.from_reduced(3, [(0.5, 1 / 5), (1.0, 14 / 5)])
    events = detect_transitions(scan_polarization(pot, np.linspace(0.005, 0.25, 100)), pot=pot)
    kinds = [k for _, k in events]
    assert kinds == ["first_order", "second_order", "first_order"]
    rhos = [r for r, _ in events]
    assert rhos == pytest.approx([0.031055, 0.192153, 0.205875], rel=1e-4)


def test_single_term_classifier_rejects_mixtures():
    with pytest.raises(ValueError):
        classify_transition(RieszPotential(((1.0, 1.0), (1.0, 2.5)), 3))
