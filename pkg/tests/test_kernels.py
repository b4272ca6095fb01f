from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from hfspin.kernels import (
    RieszPotential,
    angular_kernel,
    angular_kernel_offset,
    ball_volume,
    coulomb,
    dirac_constant,
    energy_coefficients,
    exchange_coefficient,
    kinetic_coefficient,
    riesz_normalization,
    surface_area,
    thomas_fermi_constant,
)


@pytest.mark.parametrize("d, area", [(1, 2.0), (2, 2 * math.pi), (3, 4 * math.pi), (4, 2 * math.pi**2)])
def test_surface_area(d, area):
    assert surface_area(d) == pytest.approx(area, rel=1e-14)


def test_surface_area_rejects_bad_dimension():
    with pytest.raises(ValueError):
        surface_area(0)
    with pytest.raises(ValueError):
        surface_area(2.5)


def test_thomas_fermi_constant():
    assert thomas_fermi_constant(3) == pytest.approx((6 * math.pi**2) ** (2 / 3), rel=1e-14)
    # kF^2 = c_TF rho^(2/d) for a ball of radius kF with rho = |B| kF^d / (2 pi)^d
    kf = 1.7
    for d in (1, 2, 3, 4):
        rho = ball_volume(d) * kf**d / (2 * math.pi) ** d
        assert thomas_fermi_constant(d) * rho ** (2 / d) == pytest.approx(kf**2, rel=1e-13)


def test_coulomb_normalization():
    # 1/|x| in 3D has Fourier kernel 4 pi / k^2, i.e. 1/(2 pi^2 k^2) per (2 pi)^-3
    assert riesz_normalization(3, 1.0) == pytest.approx(1 / (2 * math.pi**2), rel=1e-14)
    pot = coulomb(3)
    assert pot(2.0) == pytest.approx(1 / (8 * math.pi**2), rel=1e-14)


def test_riesz_rejects_exponent_outside_range():
    for s in (0.0, 3.0, -1.0):
        with pytest.raises(ValueError):
            RieszPotential(((1.0, s),), 3)
    with pytest.raises(ValueError):
        RieszPotential(((-1.0, 1.0),), 3)


def test_dirac_constant_coulomb():
    assert dirac_constant(3, 1.0) == pytest.approx(4 * math.pi**2, rel=1e-8)


def test_dirac_constant_limit_s_to_d():
    # |k - k'|^(s-d) -> 1, leaving |B|^2
    assert dirac_constant(3, 3 - 1e-6) == pytest.approx((4 * math.pi / 3) ** 2, rel=1e-5)


def test_dirac_constant_monte_carlo():
    # k uniform in the ball, k' = k + r w with r ~ r^(2-a) on [0, 2]
    rng = np.random.default_rng(7)
    s, d = 2.5, 3
    a = d - s
    n = 400_000
    k = rng.normal(size=(n, 3))
    k *= (rng.random(n) ** (1 / 3) / np.linalg.norm(k, axis=1))[:, None]
    w = rng.normal(size=(n, 3))
    w /= np.linalg.norm(w, axis=1)[:, None]
    r = 2.0 * rng.random(n) ** (1 / (3 - a))
    inside = np.linalg.norm(k + r[:, None] * w, axis=1) < 1.0
    f = (4 * math.pi / 3) * 4 * math.pi * 2 ** (3 - a) / (3 - a) * inside
    est, err = f.mean(), f.std() / math.sqrt(n)
    assert abs(dirac_constant(d, s) - est) < 3 * err


def test_energy_coefficients_closed_forms():
    mc = energy_coefficients(coulomb(3))
    assert mc.kappa_d == pytest.approx(0.3 * (6 * math.pi**2) ** (2 / 3), rel=1e-12)
    assert mc.lambda_ds[0] == pytest.approx((6 * math.pi**2) ** (4 / 3) / (8 * math.pi**3), rel=1e-12)
    assert kinetic_coefficient(3) == mc.kappa_d


def test_exchange_coefficient_matches_ball_integral():
    # exchange energy of a filled ball: (1/2) int V g with V = (2 kF/pi) F(k/kF)
    def F(x):
        return 0.5 + (1 - x * x) / (4 * x) * math.log(abs((1 + x) / (1 - x)))

    kf = 1.3
    inner, _ = integrate.quad(lambda x: F(x) * x * x, 0, 1, points=[1.0])
    e_x = 0.5 / (2 * math.pi**2) * (2 * kf / math.pi) * kf**3 * inner
    rho = kf**3 / (6 * math.pi**2)
    assert exchange_coefficient(3, 1.0) * rho ** (4 / 3) == pytest.approx(e_x, rel=1e-9)


def test_reduced_couplings_roundtrip():
    pot = RieszPotential.from_reduced(3, [(0.5, 0.2), (1.0, 2.8)])
    mc = energy_coefficients(pot)
    assert np.asarray(mc.lambda_ds) / mc.kappa_d == pytest.approx([0.5, 1.0], rel=1e-12)


def test_angular_kernel_coulomb_value():
    assert angular_kernel(coulomb(3), 1.0, 2.0) == pytest.approx(math.log(3) / (2 * math.pi), rel=1e-14)


@pytest.mark.parametrize("s", [0.2, 1.0, 1.7, 2.8])
def test_angular_kernel_against_quadrature(s):
    pot = RieszPotential(((0.9, s),), 3)
    k, kp = 0.8, 1.45

    def f(th):
        r2 = k * k + kp * kp - 2 * k * kp * math.cos(th)
        return 0.9 * r2 ** ((s - 3) / 2) * math.sin(th)

    ref = 2 * math.pi * integrate.quad(f, 0, math.pi, epsabs=0, epsrel=1e-13)[0]
    assert angular_kernel(pot, k, kp) == pytest.approx(ref, rel=1e-10)


def test_angular_kernel_generic_dimension_matches_3d():
    # the generic path on d = 3 must agree with the closed form
    from hfspin.kernels import _shell_kernel_3d, _shell_kernel_generic

    for s in (0.5, 1.0, 2.2):
        assert _shell_kernel_generic(3, s, 1.0, 1.3, n=40) == pytest.approx(
            float(_shell_kernel_3d(s, 1.0, 1.3)), rel=1e-9)


def test_angular_kernel_positive_and_symmetric(rng):
    pot = RieszPotential(((1.0, 1.0), (0.3, 2.5)), 3)
    k = rng.uniform(1e-3, 5, 200)
    kp = rng.uniform(1e-3, 5, 200)
    K = angular_kernel(pot, k, kp)
    assert np.all(K > 0)
    np.testing.assert_allclose(K, angular_kernel(pot, kp, k), rtol=1e-13)
    assert np.isinf(angular_kernel(pot, 1.0, 1.0))


def test_offset_kernel_matches_direct():
    pot = coulomb(3)
    k = np.array([0.5, 1.0, 2.0])
    off = np.array([1e-3, -0.2, 0.7])
    np.testing.assert_allclose(angular_kernel_offset(pot, k, off), angular_kernel(pot, k, k + off), rtol=1e-11)
