"""Riesz interaction constants and radially reduced kernels.

Conventions
-----------
A :class:`RieszPotential` stores Fourier-side couplings, i.e. the exchange
kernel is ``w(k) = sum_i kappa_i |k|^(s_i - d)``.  The real-space potential
``alpha/|x|^s`` corresponds to ``kappa = alpha * riesz_normalization(d, s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

__all__ = [
    "RieszPotential",
    "ModelConstants",
    "QuadratureError",
    "surface_area",
    "ball_volume",
    "thomas_fermi_constant",
    "riesz_normalization",
    "dirac_constant",
    "kinetic_coefficient",
    "exchange_coefficient",
    "energy_coefficients",
    "angular_kernel",
    "angular_kernel_offset",
    "coulomb",
]


class QuadratureError(RuntimeError):
    """Raised when an adaptive rule fails to reach its target accuracy."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


def surface_area(d: int) -> float:
    """Area of the unit sphere S^{d-1} in R^d."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d!r}")
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int) -> float:
    return surface_area(d) / d


def thomas_fermi_constant(d: int) -> float:
    """c_TF such that the Fermi ball of density rho has radius^2 = c_TF rho^(2/d)."""
    return 4.0 * math.pi**2 * (d / surface_area(d)) ** (2.0 / d)


def _check_exponent(d: int, s: float) -> None:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d!r}")
    if not 0.0 < s < d:
        raise ValueError(f"Riesz exponent must satisfy 0 < s < d={d}, got s={s!r}")


def riesz_normalization(d: int, s: float) -> float:
    """Fourier normalization c_{d,s} of the real-space kernel |x|^{-s}."""
    _check_exponent(d, s)
    return (
        (2.0 * math.pi) ** (-d / 2)
        * 2.0 ** ((d - s) / 2)
        / 2.0 ** (s / 2)
        * math.gamma((d - s) / 2)
        / math.gamma(s / 2)
    )


@dataclass(frozen=True)
class RieszPotential:
    """Finite sum of Riesz terms ``kappa_i |k|^(s_i - d)`` in Fourier variables."""

    terms: tuple[tuple[float, float], ...]
    dimension: int = 3

    def __post_init__(self):
        terms = tuple((float(k), float(s)) for k, s in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("a Riesz potential needs at least one term")
        for kappa, s in terms:
            _check_exponent(self.dimension, s)
            if not kappa > 0.0:
                raise ValueError(f"couplings must be positive, got {kappa!r}")

    @classmethod
    def from_real_space(cls, d: int, terms) -> "RieszPotential":
        """Build from real-space couplings, ``sum alpha_i / |x|^{s_i}``."""
        return cls(tuple((a * riesz_normalization(d, s), s) for a, s in terms), d)

    @classmethod
    def from_reduced(cls, d: int, terms) -> "RieszPotential":
        """Build from reduced couplings ``lambda_i = alpha_i lambda(d,s_i) / kappa(d)``.

        This is the parametrization of the mixed-potential energy curves, where
        the kinetic coefficient is scaled to one.
        """
        kap = kinetic_coefficient(d)
        return cls.from_real_space(
            d, [(lam * kap / exchange_coefficient(d, s), s) for lam, s in terms]
        )

    @property
    def d(self) -> int:
        return self.dimension

    @property
    def exponents(self) -> tuple[float, ...]:
        return tuple(s for _, s in self.terms)

    @property
    def couplings(self) -> tuple[float, ...]:
        return tuple(k for k, _ in self.terms)

    def real_space_couplings(self) -> tuple[float, ...]:
        return tuple(k / riesz_normalization(self.d, s) for k, s in self.terms)

    def scaled(self, factor: float) -> "RieszPotential":
        return RieszPotential(tuple((factor * k, s) for k, s in self.terms), self.d)

    def __call__(self, k):
        """Evaluate w(k) for |k| > 0."""
        k = np.asarray(k, dtype=float)
        return sum(kappa * k ** (s - self.d) for kappa, s in self.terms)


def coulomb(d: int = 3, charge: float = 1.0) -> RieszPotential:
    """``charge/|x|`` in dimension d; for d=3, w(k) = charge / (2 pi^2 k^2)."""
    return RieszPotential.from_real_space(d, [(charge, 1.0)])


@dataclass(frozen=True)
class ModelConstants:
    c_TF: float
    kappa_d: float
    lambda_ds: tuple[float, ...]
    c_D: tuple[float, ...]
    exponents: tuple[float, ...] = field(default=())


def _lens_volume(d: int, u: np.ndarray) -> np.ndarray:
    """Volume of the intersection of two unit balls whose centres are u apart."""
    x = np.clip(1.0 - 0.25 * u * u, 0.0, 1.0)
    return ball_volume(d) * special.betainc((d + 1) / 2, 0.5, x)


@lru_cache(maxsize=256)
def dirac_constant(d: int, s: float, rtol: float = 1e-9, max_nodes: int = 4096) -> float:
    """Double integral of |k - k'|^(s-d) over two unit balls.

    Writing the integral in the difference variable u = |k - k'| reduces it to
    ``|S^{d-1}| * int_0^2 u^(s-1) V(u) du`` with V the lens volume.  The factor
    ``u^(s-1) (2-u)^((d+1)/2)`` is absorbed into a Gauss-Jacobi weight and the
    node count is doubled until two successive rules agree to ``rtol``.
    """
    _check_exponent(d, s)
    a = (d + 1) / 2  # vanishing order of the lens volume at u = 2
    b = s - 1.0  # algebraic singularity at u = 0

    def rule(n):
        x, w = special.roots_jacobi(n, a, b)
        u = 1.0 + x  # [-1, 1] -> [0, 2]
        smooth = _lens_volume(d, u) / np.power(2.0 - u, a)
        return surface_area(d) * float(np.dot(w, smooth))

    n = 8
    prev = rule(n)
    while True:
        n *= 2
        cur = rule(n)
        err = abs(cur - prev)
        if err <= rtol * abs(cur):
            return cur
        if n >= max_nodes:
            raise QuadratureError(f"c_D({d}, {s}) did not converge", err / abs(cur))
        prev = cur


def kinetic_coefficient(d: int) -> float:
    """kappa(d): T=0 kinetic energy per volume is kappa(d) rho^(1+2/d)."""
    return 2.0 * math.pi**2 * d / (d + 2) * (d / surface_area(d)) ** (2.0 / d)


def exchange_coefficient(d: int, s: float, c_D: float | None = None) -> float:
    """lambda(d, s) for the unit real-space coupling |x|^{-s}."""
    _check_exponent(d, s)
    if c_D is None:
        c_D = dirac_constant(d, s)
    return (
        0.5
        / math.pi ** (d / 2 - s)
        * (d / surface_area(d)) ** ((d + s) / d)
        * math.gamma((d - s) / 2)
        / math.gamma(s / 2)
        * c_D
    )


def energy_coefficients(pot: RieszPotential) -> ModelConstants:
    """Kinetic and per-term exchange coefficients of the T=0 energy.

    Each ``lambda_ds[i]`` already includes the term's real-space coupling, so
    ``E(rho) = kappa_d rho^(1+2/d) - sum_i lambda_ds[i] rho^(1+s_i/d)``.
    """
    d = pot.d
    cds = tuple(dirac_constant(d, s) for s in pot.exponents)
    lams = tuple(
        alpha * exchange_coefficient(d, s, c)
        for alpha, s, c in zip(pot.real_space_couplings(), pot.exponents, cds)
    )
    return ModelConstants(
        c_TF=thomas_fermi_constant(d),
        kappa_d=kinetic_coefficient(d),
        lambda_ds=lams,
        c_D=cds,
        exponents=pot.exponents,
    )


# --- angular kernels -------------------------------------------------------


def _shell_kernel_3d(s: float, k, kp, diff=None):
    """Integral over the unit sphere of |k e1 - kp w|^(s-3), vectorized.

    ``diff`` may supply |k - kp| when it is known more accurately than the
    rounded difference.
    """
    k = np.asarray(k, dtype=float)
    kp = np.asarray(kp, dtype=float)
    diff = np.abs(k - kp) if diff is None else np.asarray(diff, dtype=float)
    small = np.minimum(k, kp)
    with np.errstate(divide="ignore", invalid="ignore"):
        # log((k+kp)/|k-kp|) without cancellation when one momentum is tiny
        lr = np.log1p(2.0 * small / diff)
        if abs(s - 1.0) < 1e-12:
            val = 2.0 * np.pi * lr / (k * kp)
        else:
            # ((k+kp)^(s-1) - |k-kp|^(s-1)) / (s-1)
            val = (
                2.0
                * np.pi
                * diff ** (s - 1.0)
                * np.expm1((s - 1.0) * lr)
                / ((s - 1.0) * k * kp)
            )
    return np.where(diff == 0.0, np.inf, val)


def _shell_kernel_generic(d: int, s: float, k: float, kp: float, n: int = 24) -> float:
    """Same quantity for general d by graded Gauss-Legendre in the polar angle."""
    if d == 1:
        return abs(k - kp) ** (s - 1.0) + (k + kp) ** (s - 1.0)
    x, w = np.polynomial.legendre.leggauss(n)
    # geometric panels toward theta = 0 where the integrand peaks
    scale = max(abs(k - kp) / max(k, kp), 1e-14)
    edges = [0.0]
    h = min(scale, math.pi / 4)
    while edges[-1] + h < math.pi:
        edges.append(edges[-1] + h)
        h *= 2.0
    edges.append(math.pi)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        th = 0.5 * (b - a) * x + 0.5 * (b + a)
        r2 = k * k + kp * kp - 2.0 * k * kp * np.cos(th)
        f = r2 ** ((s - d) / 2) * np.sin(th) ** (d - 2)
        total += 0.5 * (b - a) * float(np.dot(w, f))
    return surface_area(d - 1) * total


def angular_kernel(pot: RieszPotential, k, kp):
    """K(k, k') = integral of w(k e1 - k' w) over the unit sphere.

    Then ``(w * g)(k) = int_0^inf K(k, k') g(k') k'^(d-1) dk'`` for radial g.
    The diagonal k = k' is singular and evaluates to +inf.
    """
    if pot.d == 3:
        return sum(kappa * _shell_kernel_3d(s, k, kp) for kappa, s in pot.terms)
    return _generic_kernel(pot, k, kp)


def angular_kernel_offset(pot: RieszPotential, k, offset):
    """K(k, k + offset) with the offset kept exact near the diagonal (d = 3)."""
    if pot.d != 3:
        raise ValueError("offset evaluation is available for d = 3")
    k = np.asarray(k, dtype=float)
    offset = np.asarray(offset, dtype=float)
    kp = k + offset
    return sum(kappa * _shell_kernel_3d(s, k, kp, np.abs(offset)) for kappa, s in pot.terms)


def _generic_kernel(pot, k, kp):
    kk, kkp = np.broadcast_arrays(np.asarray(k, float), np.asarray(kp, float))
    out = np.empty(kk.shape)
    for idx in np.ndindex(kk.shape):
        a, b = float(kk[idx]), float(kkp[idx])
        if a == b:
            out[idx] = np.inf
            continue
        out[idx] = sum(
            kappa * _shell_kernel_generic(pot.d, s, a, b) for kappa, s in pot.terms
        )
    return out if out.shape else float(out)
