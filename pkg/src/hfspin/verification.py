"""Property oracles that do not depend on the self-consistent solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .optimize import minimize_bounded

__all__ = [
    "SpinMatrix",
    "haar_su2",
    "rearrangement_gap",
    "rearrangement_closed_form",
    "rearrangement_suite",
    "flambda",
    "flambda_regime",
    "flambda_thresholds",
    "flambda_minimizer",
    "flambda_interior_point",
    "flambda_predicted",
    "flambda_suite",
    "fermi_entropy",
    "entropy_suite",
    "SuiteResult",
]

UNITARY_TOL = 1e-12
# rounding floor for gaps that vanish analytically but pass through a random U
GAP_FLOOR = 1e-14
ENTROPY_FLOOR = 1e-300


@dataclass(frozen=True)
class SpinMatrix:
    """A 2x2 complex matrix acting on spin."""

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=complex)
        if a.shape != (2, 2):
            raise ValueError("spin matrices are 2x2")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @classmethod
    def diagonal(cls, top: float, bottom: float) -> "SpinMatrix":
        return cls(np.diag([top, bottom]))

    @property
    def hermitian(self) -> bool:
        return bool(np.allclose(self.data, self.data.conj().T, rtol=0.0, atol=UNITARY_TOL))

    @property
    def unitary(self) -> bool:
        return bool(np.allclose(self.data @ self.data.conj().T, np.eye(2), rtol=0.0, atol=UNITARY_TOL))

    @property
    def is_diagonal(self) -> bool:
        return self.data[0, 1] == 0 and self.data[1, 0] == 0

    @property
    def adjoint(self) -> "SpinMatrix":
        return SpinMatrix(self.data.conj().T)


def haar_su2(rng: np.random.Generator) -> SpinMatrix:
    """Haar-distributed SU(2) element from a uniformly random unit quaternion."""
    q = rng.standard_normal(4)
    a, b, c, d = q / np.linalg.norm(q)
    return SpinMatrix([[a + 1j * b, c + 1j * d], [-c + 1j * d, a - 1j * b]])


def _ordered_diagonal(D: SpinMatrix, name: str) -> tuple[float, float]:
    if not D.is_diagonal or not D.hermitian:
        raise ValueError(f"{name} must be a real diagonal matrix")
    top, bottom = D.data[0, 0].real, D.data[1, 1].real
    if top < bottom:
        raise ValueError(f"{name} must have its larger eigenvalue first")
    return top, bottom


def rearrangement_gap(D1: SpinMatrix, D2: SpinMatrix, U: SpinMatrix) -> float:
    """tr(D1 D2) - tr(D1 U D2 U*), non-negative for ordered diagonals."""
    _ordered_diagonal(D1, "D1")
    _ordered_diagonal(D2, "D2")
    if not U.unitary:
        raise ValueError("U must be unitary")
    d1, d2, u = D1.data, D2.data, U.data
    return float(np.trace(d1 @ d2).real - np.trace(d1 @ u @ d2 @ u.conj().T).real)


def rearrangement_closed_form(D1: SpinMatrix, D2: SpinMatrix, U: SpinMatrix) -> float:
    l1, m1 = _ordered_diagonal(D1, "D1")
    l2, m2 = _ordered_diagonal(D2, "D2")
    return (l1 - m1) * (l2 - m2) * (1.0 - abs(U.data[0, 0]) ** 2)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    samples: int
    worst: float = 0.0
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        msg = f"{tag} {self.name}: {self.samples} samples, worst {self.worst:.3e}"
        return msg + (f" ({self.detail})" if self.detail else "")


def rearrangement_suite(n: int = 10_000, seed: int = 0, tol: float = 1e-12) -> list[SuiteResult]:
    """Haar samples of the gap: non-negativity, closed form, and equality cases."""
    rng = np.random.default_rng(seed)
    neg_worst, form_worst = 0.0, 0.0
    neg_bad = form_bad = None
    for i in range(n):
        a, b = np.sort(rng.uniform(-2.0, 2.0, 2))[::-1]
        c, e = np.sort(rng.uniform(-2.0, 2.0, 2))[::-1]
        D1, D2, U = SpinMatrix.diagonal(a, b), SpinMatrix.diagonal(c, e), haar_su2(rng)
        gap = rearrangement_gap(D1, D2, U)
        err = abs(gap - rearrangement_closed_form(D1, D2, U))
        if -gap > neg_worst:
            neg_worst, neg_bad = -gap, (i, a, b, c, e, U.data.tolist())
        if err > form_worst:
            form_worst, form_bad = err, (i, a, b, c, e, U.data.tolist())
    eye = SpinMatrix(np.eye(2))
    identity_case, scalar_case = [], []
    for _ in range(100):
        U = haar_su2(rng)
        identity_case.append(abs(rearrangement_gap(SpinMatrix.diagonal(1.5, -0.5), SpinMatrix.diagonal(2.0, 1.0), eye)))
        scalar_case.append(abs(rearrangement_gap(SpinMatrix.diagonal(0.7, 0.7), SpinMatrix.diagonal(2.0, 1.0), U)))
    eq = identity_case + scalar_case
    eq_worst = max(eq)
    return [
        SuiteResult("rearrangement gap >= 0", neg_worst <= GAP_FLOOR, n, neg_worst,
                    "" if neg_worst <= GAP_FLOOR else f"violating sample {neg_bad}"),
        SuiteResult("rearrangement closed form", form_worst <= tol, n, form_worst,
                    "" if form_worst <= tol else f"violating sample {form_bad}"),
        SuiteResult("rearrangement equality cases", max(identity_case) == 0.0 and max(scalar_case) <= GAP_FLOOR,
                    len(eq), eq_worst),
    ]


# --- f_lambda ---------------------------------------------------------------------


def flambda(p: float, q: float, lam: float, x):
    x = np.asarray(x, dtype=float)
    return x**q + (1 - x) ** q - lam * (x**p + (1 - x) ** p)


def flambda_regime(p: float, q: float) -> str:
    """'jump' for 1 < p < q, 'smooth' for 1 < q < p < 2."""
    if 1.0 < p < q:
        return "jump"
    if 1.0 < q < p < 2.0:
        return "smooth"
    raise ValueError(f"(p, q) = ({p}, {q}) lies outside both regimes")


def flambda_thresholds(p: float, q: float) -> tuple[float, float]:
    """(lambda_c, lambda_c) in the jump regime, (lambda_min, lambda_max) in the smooth one."""
    if flambda_regime(p, q) == "jump":
        lc = (1 - 2 ** (1 - q)) / (1 - 2 ** (1 - p))
        return lc, lc
    return q * (q - 1) / (p * (p - 1)) * 2 ** (p - q), q / p


def _dflambda(p, q, lam, x):
    return q * (x ** (q - 1) - (1 - x) ** (q - 1)) - lam * p * (x ** (p - 1) - (1 - x) ** (p - 1))


def flambda_minimizer(p: float, q: float, lam: float, n_grid: int = 2001) -> float:
    """Global minimizer of f_lambda on [0, 1/2] by a dense scan plus local refinement.

    Endpoints are returned exactly when they win.  Interior candidates are
    refined by a bounded Brent search and then by a root of f' inside the bracket,
    since f is too flat near its minimum to pin x below ~1e-8 from values alone.
    """
    flambda_regime(p, q)
    xs = np.linspace(0.0, 0.5, n_grid)
    fx = flambda(p, q, lam, xs)
    h = xs[1] - xs[0]
    best_x, best_f = 0.0, float(fx[0])
    if fx[-1] < best_f:
        best_x, best_f = 0.5, float(fx[-1])
    interior = np.flatnonzero((fx[1:-1] <= fx[:-2]) & (fx[1:-1] <= fx[2:])) + 1
    # the end cells are always refined: an interior minimum may hide inside them
    for i in [0, n_grid - 1] + sorted(interior, key=lambda j: fx[j])[:3]:
        a, b = max(xs[i] - h, 0.0), min(xs[i] + h, 0.5)
        x = minimize_bounded(lambda y: float(flambda(p, q, lam, y)), a, b, xtol=1e-12)
        lo, hi = max(a, 1e-300), min(b, 0.5)
        if x < 0.5 - 2 * h and _dflambda(p, q, lam, lo) < 0 < _dflambda(p, q, lam, hi):
            x = optimize.brentq(lambda y: _dflambda(p, q, lam, y), lo, hi, xtol=1e-15, rtol=1e-15)
        f = float(flambda(p, q, lam, x))
        # a refined point must beat the incumbent by more than rounding
        if f < best_f - 8 * np.finfo(float).eps * max(abs(best_f), 1.0):
            best_x, best_f = float(x), f
    return best_x


def flambda_interior_point(p: float, q: float, lam: float) -> float:
    """The critical point solving lambda(x) = lam, for lambda_min < lam < lambda_max."""
    from .zero_temperature import lambda_of_x

    lmin, lmax = flambda_thresholds(p, q)
    if flambda_regime(p, q) != "smooth" or not lmin < lam < lmax:
        raise ValueError("no interior critical point for these parameters")
    # lambda(x) decreases from lambda_max at 0 to lambda_min at 1/2
    f = lambda x: float(lambda_of_x(p, q, x)) - lam
    hi = 0.5 - 1e-12
    if f(hi) > 0:
        return 0.5
    return optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=1e-15)


def flambda_predicted(p: float, q: float, lam: float) -> float:
    """Minimizer predicted by the threshold classification."""
    lo, hi = flambda_thresholds(p, q)
    if flambda_regime(p, q) == "jump":
        if lam == lo:
            raise ValueError("at lambda_c both endpoints minimize")
        return 0.5 if lam < lo else 0.0
    if lam <= lo:
        return 0.5
    if lam >= hi:
        return 0.0
    return flambda_interior_point(p, q, lam)


def flambda_suite(pairs=((4 / 3, 5 / 3), (7 / 6, 4 / 3), (4 / 3, 7 / 6)), n: int = 50,
                  seed: int = 0, tol: float = 1e-6) -> list[SuiteResult]:
    """Random lambda on both sides of each threshold; compare scan and classification."""
    rng = np.random.default_rng(seed)
    out = []
    for p, q in pairs:
        lo, hi = flambda_thresholds(p, q)
        lams = rng.uniform(0.5 * lo, 1.5 * hi, n)
        worst, bad = 0.0, None
        for lam in lams:
            got, want = flambda_minimizer(p, q, lam), flambda_predicted(p, q, lam)
            exact = want in (0.0, 0.5)
            err = abs(got - want)
            if (exact and err != 0.0) or err > tol:
                bad = (lam, got, want)
            worst = max(worst, err)
        out.append(SuiteResult(f"f_lambda minimizer (p={p:.4g}, q={q:.4g}, {flambda_regime(p, q)})",
                               bad is None, n, worst,
                               "" if bad is None else f"violating sample lambda={bad[0]!r} got {bad[1]!r} want {bad[2]!r}"))
    return out


# --- entropy ----------------------------------------------------------------------


def fermi_entropy(t):
    """S(t) = -t log t - (1 - t) log(1 - t), with S(0) = S(1) = 0."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("entropy argument must lie in [0, 1]")
    out = np.zeros_like(t)
    for p in (t, 1.0 - t):
        m = p >= ENTROPY_FLOOR
        out[m] -= p[m] * np.log(p[m])
    return out if out.ndim else float(out)


def entropy_suite(n: int = 1000) -> list[SuiteResult]:
    t = np.linspace(0.0, 1.0, n)
    s = fermi_entropy(t)
    second = s[:-2] - 2 * s[1:-1] + s[2:]
    ends = max(abs(fermi_entropy(0.0)), abs(fermi_entropy(1.0)))
    mid = abs(fermi_entropy(0.5) - np.log(2.0))
    return [
        SuiteResult("entropy endpoints and S(1/2) = log 2", ends == 0.0 and mid <= 1e-15, 3, max(ends, mid)),
        SuiteResult("entropy concavity", bool(np.all(second <= 0.0)), n, float(max(second.max(), 0.0))),
    ]
