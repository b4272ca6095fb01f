"""Command-line entry point: ``hfspin <command> [options]``.

Every option can also be given in a flat ``key = value`` config file passed
with ``--config``; flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .kernels import QuadratureError, RieszPotential, energy_coefficients, riesz_normalization
from .phase_diagram import is_simply_connected, mu_curve, sweep
from .radial.grid import GridSpec
from .radial.solver import (
    BracketError,
    ConvergenceError,
    MonotonicityError,
    SolverConfig,
    dump_state,
    exchange_bound,
    solve_middle,
    solve_pair,
)
from .verification import SuiteResult, entropy_suite, flambda_suite, rearrangement_suite
from .zero_temperature import (
    classify_transition,
    detect_transitions,
    polarization_energy,
    scan_polarization,
    wigner_seitz_radius,
)

log = logging.getLogger("hfspin")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2
FAILED_CELL_LIMIT = 0.10
# (mu, T) cases for the solver invariant suite; the first has three fixed points
SOLVER_CASES = ((-0.0557, 0.03), (-0.045, 0.01), (-0.04, 0.05))


class UsageError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _terms(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.replace(";", ",").split(","):
        if not item.strip():
            continue
        try:
            a, s = item.split(":")
            out.append((float(a), float(s)))
        except ValueError:
            raise UsageError(f"terms are written coupling:exponent, got {item.strip()!r}") from None
    return tuple(out)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    dimension: int = 3
    terms: tuple = ((1.0, 1.0),)  # (coupling, exponent) pairs; Coulomb by default
    couplings: str = "real"  # "real": alpha/|x|^s, "reduced": lambda_i with kappa scaled to one
    rho_min: float = 1e-4
    rho_max: float = 1.6e-3
    n_rho: int = 20
    rho_spacing: str = "linear"
    rho: tuple = ()  # explicit densities, override the range
    T_min: float = 0.003
    T_max: float = 0.035
    n_T: int = 20
    temperatures: tuple = (0.0, 0.01, 0.03)
    n_mu: int = 40
    curve_rho: tuple = ()
    n_t: int = 101
    n_curve: int = 160
    tol: float = 1e-10
    order: int = 10
    out: str = "."
    workers: int = 1
    seed: int = 0
    quick: bool = False
    machine: bool = False
    dump: bool = False

    def potential(self) -> RieszPotential:
        if not self.terms:
            raise UsageError("the potential needs at least one term")
        try:
            if self.couplings == "real":
                return RieszPotential.from_real_space(self.dimension, self.terms)
            if self.couplings == "reduced":
                return RieszPotential.from_reduced(self.dimension, [(lam, s) for lam, s in self.terms])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        raise UsageError(f"couplings must be 'real' or 'reduced', got {self.couplings!r}")

    def solver(self) -> SolverConfig:
        return SolverConfig(grid=GridSpec(order=self.order), tol=self.tol)

    def rho_grid(self) -> np.ndarray:
        if self.rho:
            grid = np.asarray(self.rho, dtype=float)
        else:
            if self.n_rho < 1 or not 0 < self.rho_min <= self.rho_max:
                raise UsageError("empty density range")
            if self.rho_spacing == "log":
                grid = np.geomspace(self.rho_min, self.rho_max, self.n_rho)
            elif self.rho_spacing == "linear":
                grid = np.linspace(self.rho_min, self.rho_max, self.n_rho)
            else:
                raise UsageError("rho_spacing must be 'linear' or 'log'")
        if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
            raise UsageError("densities must be positive and strictly increasing")
        return grid

    def T_grid(self) -> np.ndarray:
        if self.n_T < 1 or not 0 < self.T_min <= self.T_max:
            raise UsageError("empty temperature range")
        return np.linspace(self.T_min, self.T_max, self.n_T)

    def header(self, command: str) -> list[str]:
        lines = [f"# artifact {__version__}", f"# command = {command}"]
        for f in dataclasses.fields(self):
            lines.append(f"# {f.name} = {_format_value(getattr(self, f.name))}")
        return lines


_PARSERS = {
    "dimension": int, "n_rho": int, "n_T": int, "n_mu": int, "n_t": int, "n_curve": int,
    "order": int, "workers": int, "seed": int,
    "rho_min": float, "rho_max": float, "T_min": float, "T_max": float, "tol": float,
    "couplings": str, "rho_spacing": str, "out": str,
    "rho": _floats, "temperatures": _floats, "curve_rho": _floats,
    "terms": _terms,
    "quick": _bool, "machine": _bool, "dump": _bool,
}


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(":".join(repr(float(x)) for x in item) if isinstance(item, tuple) else repr(float(item))
                        for item in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key: str, text: str):
    try:
        return _PARSERS[key](text.strip())
    except UsageError:
        raise
    except ValueError:
        raise UsageError(f"bad value for {key}: {text!r}") from None


def read_config_file(path) -> dict:
    """Flat ``key = value`` pairs; '#' starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # n_T and n_t are different keys
    try:
        parser.read_string("[run]\n" + Path(path).read_text(), source=str(path))
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    values = {}
    for key, val in parser["run"].items():
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise UsageError(f"{path}: unknown key {key!r}")
        values[key] = _parse_value(key, val)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _PARSERS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return RunConfig(**values)


# --- output -------------------------------------------------------------------------


def _num(x) -> str:
    if x is None:
        return "nan"
    return f"{float(x):.16e}"


def write_csv(path: Path, header: list[str], columns: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for line in header:
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")


def _emit(cfg: RunConfig, pairs: list[tuple[str, object]]) -> None:
    if cfg.machine:
        for k, v in pairs:
            print(f"{k}={repr(float(v)) if isinstance(v, (float, np.floating)) else v}")
    else:
        width = max(len(k) for k, _ in pairs)
        for k, v in pairs:
            text = f"{float(v):.10g}" if isinstance(v, (float, np.floating)) else str(v)
            print(f"{k:<{width}}  {text}")


# --- commands -----------------------------------------------------------------------


def cmd_constants(cfg: RunConfig) -> int:
    pot = cfg.potential()
    d = pot.d
    status = EXIT_OK
    pairs: list[tuple[str, object]] = [("dimension", d)]
    try:
        mc = energy_coefficients(pot)
    except (ValueError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    pairs += [("c_TF", mc.c_TF), ("kappa", mc.kappa_d)]
    for i, ((alpha, s), lam, cd) in enumerate(zip(zip(pot.real_space_couplings(), pot.exponents),
                                                  mc.lambda_ds, mc.c_D)):
        pairs += [(f"term{i}.s", s), (f"term{i}.alpha", alpha), (f"term{i}.c_ds", riesz_normalization(d, s)),
                  (f"term{i}.c_D", cd), (f"term{i}.lambda", lam)]
    if len(pot.terms) == 1:
        try:
            rep = classify_transition(pot)
            pairs.append(("transition", rep.kind))
            for rho, label in rep.critical_densities:
                pairs.append((label, rho))
                if label == "rho_c" and d == 3:
                    pairs.append(("r_s", wigner_seitz_radius(rho)))
        except ValueError as exc:
            pairs.append(("transition", f"unclassified ({exc})"))
    else:
        pairs.append(("transition", "multi-term potential, see the t0 command"))
    _emit(cfg, pairs)
    return status


def cmd_t0(cfg: RunConfig) -> int:
    pot = cfg.potential()
    rhos = cfg.rho_grid()
    out = Path(cfg.out)
    header = cfg.header("t0")
    scan, failures = [], []
    for r in rhos:
        try:
            scan.extend(scan_polarization(pot, [r]))
        except (ValueError, ArithmeticError) as exc:
            failures.append((float(r), str(exc)))
            scan.append((float(r), math.nan))
    write_csv(out / "t0_scan.csv", header, ["rho", "t_opt", "status"],
              [(r, t, "ok" if np.isfinite(t) else "failed") for r, t in scan])
    curve_rho = cfg.curve_rho or tuple(rhos[np.linspace(0, rhos.size - 1, min(5, rhos.size)).astype(int)])
    ts = np.linspace(0.0, 0.5, cfg.n_t)
    write_csv(out / "t0_curves.csv", header, ["rho", "t", "energy"],
              [(r, t, e) for r in curve_rho for t, e in zip(ts, polarization_energy(pot, r, ts))])
    ok = [(r, t) for r, t in scan if np.isfinite(t)]
    events = detect_transitions(ok, pot=pot) if len(ok) > 1 else []
    for r, why in failures:
        print(f"failed at rho={r:.6g}: {why}")
    if not events:
        print("no transition on this density range")
    for r, kind in events:
        print(f"{kind} transition at rho = {r:.6g}")
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_phase_diagram(cfg: RunConfig) -> int:
    pot = cfg.potential()
    rhos, Ts = cfg.rho_grid(), cfg.T_grid()
    out = Path(cfg.out)
    header = cfg.header("phase-diagram")
    out.mkdir(parents=True, exist_ok=True)
    pd = sweep(pot, rhos, Ts, cfg.solver(), workers=cfg.workers, n_curve=cfg.n_curve)
    rows = []
    for i, r in enumerate(rhos):
        for j, T in enumerate(Ts):
            p = pd.points[i][j]
            if p is None:
                rows.append((r, T, math.nan, math.nan, math.nan, "failed"))
            else:
                rows.append((r, T, p.t_opt, p.energy_opt, p.energy_para, p.classification))
    write_csv(out / "phase_t.csv", header, ["rho", "T", "t_opt", "energy_opt", "energy_para", "classification"], rows)
    t = pd.t_matrix()
    write_csv(out / "phase_matrix.csv", header, ["rho"] + [_num(T) for T in Ts],
              [(r, *t[i]) for i, r in enumerate(rhos)])
    write_csv(out / "transitions.csv", header, ["T", "rho_c1", "rho_c2"], pd.transitions)
    write_csv(out / "contours.csv", header, ["level", "segment", "rho", "T"],
              [(lev, str(k), r, T) for lev, segs in pd.contours.items()
               for k, seg in enumerate(segs) for r, T in seg])
    n_cells = rhos.size * Ts.size
    n_failed = sum(p is None for row in pd.points for p in row)
    mask = pd.ferromagnetic_mask()
    report = [
        f"T_c = {pd.curie_temperature:.6g}",
        f"cells = {n_cells}",
        f"failed_cells = {n_failed}",
        f"polarized_cells = {int(mask.sum())}",
        f"polarized_region_simply_connected = {is_simply_connected(mask)}",
    ] + [f"failed_row T={T:.6g}: {why}" for T, why in pd.failures]
    (out / "report.txt").write_text("\n".join(header + report) + "\n")
    print("\n".join(report))
    return EXIT_NUMERICAL if n_failed > FAILED_CELL_LIMIT * n_cells else EXIT_OK


def cmd_mu_curve(cfg: RunConfig) -> int:
    pot = cfg.potential()
    rhos = cfg.rho_grid()
    out = Path(cfg.out)
    header = cfg.header("mu-curve")
    for T in cfg.temperatures:
        if T < 0:
            raise UsageError("temperatures must be non-negative")
        samples = mu_curve(pot, float(T), rhos, cfg.solver(), n_mu=cfg.n_mu)
        write_csv(out / f"mu_curve_T{T:g}.csv", header, ["mu", "rho", "branch"],
                  [(m, r, b) for r, m, b in samples])
        if T == 0:
            mus = np.array([m for _, m, _ in samples])
            shape = "monotone" if np.all(np.diff(mus) > 0) else "non-monotone"
        else:
            split = {m for r, m, b in samples if b == "middle"}
            shape = "monotone" if not split else f"non-monotone ({len(split)} mu values with three solutions)"
        print(f"T = {T:g}: {shape}")
    return EXIT_OK


def _solver_suite(cfg: RunConfig) -> list[SuiteResult]:
    pot = cfg.potential()
    scfg = cfg.solver()
    if cfg.dump:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
    out = []
    for mu, T in SOLVER_CASES:
        name = f"solver invariants at mu={mu:g}, T={T:g}"
        try:
            pair = solve_pair(pot, mu, T, scfg)
            lo, hi = pair["minimal"], pair["maximal"]
            found = [lo, hi]
            if hi.density - lo.density > 1e-6 * hi.density:
                mid = solve_middle(pot, mu, T, lo, hi, scfg)
                if mid is None:
                    out.append(SuiteResult(name, False, 2, detail="no middle fixed point found"))
                    continue
                found.append(mid)
        except (MonotonicityError, ConvergenceError, BracketError) as exc:
            out.append(SuiteResult(name, False, 0, detail=f"{type(exc).__name__}: {exc}"))
            continue
        problems = []
        # the iterations stop at residual tol, so the ordering holds to that accuracy
        if np.any(lo.g > hi.g + 10.0 * scfg.tol):
            problems.append("g_min exceeds g_max")
        for res in found:
            if not res.occupation.is_decreasing(1e-9):
                problems.append(f"{res.branch} occupation not decreasing")
            if res.residual > 1e-8:
                problems.append(f"{res.branch} residual {res.residual:.2e}")
            if float(np.max(res.potential)) > exchange_bound(pot, res.density) * (1 + 1e-6):
                problems.append(f"{res.branch} violates the exchange bound")
            if cfg.dump:
                dump_state(res, Path(cfg.out) / f"state_mu{mu:g}_T{T:g}_{res.branch}.txt")
        worst = max(r.residual for r in found)
        out.append(SuiteResult(name, not problems, len(found), worst, "; ".join(problems)))
    return out


def cmd_verify(cfg: RunConfig) -> int:
    n_haar = 1000 if cfg.quick else 10_000
    n_lambda = 10 if cfg.quick else 50
    results = rearrangement_suite(n_haar, cfg.seed) + flambda_suite(n=n_lambda, seed=cfg.seed) + entropy_suite()
    if not cfg.quick:
        results += _solver_suite(cfg)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


COMMANDS = {
    "constants": (cmd_constants, "closed-form constants and zero-temperature transition densities"),
    "t0": (cmd_t0, "zero-temperature polarization curves, argmin scan and transitions"),
    "phase-diagram": (cmd_phase_diagram, "optimal polarization on a (rho, T) grid and the Curie temperature"),
    "mu-curve": (cmd_mu_curve, "chemical potential against density, with all fixed-point branches"),
    "verify": (cmd_verify, "run the property suites"),
}


def build_parser() -> argparse.ArgumentParser:
    # flags shared by every subcommand, accepted before or after its name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value config file")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)
    for key in _PARSERS:
        flag = "--" + key.replace("_", "-")
        if _PARSERS[key] is _bool:
            common.add_argument(flag, dest=key, action="store_const", const=True, default=argparse.SUPPRESS)
        else:
            common.add_argument(flag, dest=key, type=lambda s, k=key: _parse_value(k, s),
                                default=argparse.SUPPRESS, metavar=key.upper())
    parser = argparse.ArgumentParser(prog="hfspin", parents=[common],
                                     description="Spin phase diagram of the Hartree-Fock gas.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command][0](cfg)
    except (UsageError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, BracketError, MonotonicityError, QuadratureError, RuntimeError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
