"""End-to-end assembly of the quenched-roll solution and the self-verification suite.

``build`` runs rolls -> envelope -> background -> reduced + far corrector ->
wavenumber selection, and returns the full solution

    U(z) = v(omega z) + chi(eps omega z) u_rolls(omega z)

on the fast grid (x = omega z) together with every diagnostic along the way.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .corrector import (CorrectorState, QuenchConfig, bifurcation_residual, decay_check,
                        far_fixed_point, make_background)
from .envelope import (EnvelopeProfile, energy_identity_rhs, logistic_front, logistic_speed,
                       shift_envelope, solve_envelope)
from .errors import StageError
from .reduced import ReducedSystem, coercivity_constant, find_envelope_shift, reduced_fixed_point
from .rolls import PeriodicProfile, eps_of, hamiltonian_of_rolls, hamiltonian_right, solve_rolls
from .selection import SelectionResult, evaluate_constraint, select_omega
from .simulator import new_state, run
from .spectral import (CONVENTION, FrequencyBand, SpectralField, UniformGrid, forward_transform,
                       inverse_transform, multiplier_floor, project_far, project_near,
                       save_field, sobolev_norm)

__all__ = ["SolutionBundle", "build", "continuity_probe", "verify", "write_bundle",
           "write_json"]

log = logging.getLogger(__name__)


@dataclass
class SolutionBundle:
    cfg: QuenchConfig
    rolls: PeriodicProfile
    envelope: EnvelopeProfile | None
    corrector: CorrectorState | None
    selection: SelectionResult | None
    U: SpectralField
    diagnostics: dict = field(default_factory=dict)

    @property
    def omega(self) -> float:
        return self.cfg.omega

    @property
    def z(self) -> np.ndarray:
        """Physical coordinate z = x / omega of the grid samples."""
        return self.cfg.grid.x / self.omega

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """U at arbitrary physical points z.

        The corrector is interpolated (periodic cubic spline) inside the box
        and taken as zero outside it; the rolls and the envelope are analytic
        everywhere, so windows longer than the box are allowed.
        """
        z = np.asarray(z, dtype=float)
        x = self.omega * z
        out = np.zeros_like(x)
        if self.corrector is not None:
            grid = self.cfg.grid
            L = grid.half_length
            v = self.corrector.v.real
            spline = CubicSpline(np.append(grid.x, L), np.append(v, v[0]), bc_type="periodic")
            inside = (x >= -L) & (x < L)
            out[inside] = spline(x[inside])
        if self.envelope is not None and self.rolls.eps > 0:
            out += self.envelope(self.rolls.eps * x) * self.rolls.evaluate(x)
        return out


def _zero_bundle(cfg: QuenchConfig) -> SolutionBundle:
    rolls = solve_rolls(0.0, cfg.Omega, cfg.gamma)
    U = SpectralField.zeros(cfg.grid)
    return SolutionBundle(cfg, rolls, None, None, None, U,
                          {"delta": 0.0, "note": "delta = 0: the trivial solution U = 0"})


def build(cfg: QuenchConfig, select: bool = True, select_tol: float = 1e-8,
          hstar_target: float | None = None) -> SolutionBundle:
    """Full solution for cfg.delta, cfg.gamma.

    With ``select=True`` Omega is chosen by Hamiltonian matching; otherwise
    cfg.Omega is used as given (pinned).  With ``hstar_target`` the envelope
    is first shifted until ||h_*|| reaches the target (failure is reported).
    """
    t0 = time.perf_counter()
    if cfg.delta == 0.0:
        return _zero_bundle(cfg)
    diag: dict[str, Any] = {}
    if hstar_target is not None:
        tx, norm = find_envelope_shift(cfg, hstar_target)
        cfg = cfg.with_(envelope_shift=tx)
        diag["hstar_shift"] = {"target": hstar_target, "shift": tx, "norm": norm}
    if select:
        sel = select_omega(cfg.delta, cfg.gamma, cfg, tol=select_tol)
        cfg = cfg.with_(Omega=sel.Omega_star)
        state = sel.state
        U0 = sel.U_at_0
        S = sel.constraint_residual
    else:
        S, U0, state = evaluate_constraint(cfg)
        sel = None
    bg = make_background(cfg)
    grid = cfg.grid
    v = state.v
    U_samples = v.real + bg.chi_u
    U = SpectralField.from_samples(grid, U_samples, is_real=True)
    assembly = float(np.max(np.abs(U.real - (state.v_near.real + state.v_far.real + bg.chi_u))))
    n = grid.n_points
    g = max(1, int(round(cfg.guard * n)))
    eps = bg.eps
    left = float(np.max(np.abs(U.real[:g] - bg.rolls.evaluate(grid.x[:g]))))
    right = float(np.max(np.abs(U.real[n - g:])))
    tails = decay_check(v)
    diag.update({
        "delta": cfg.delta, "gamma": cfg.gamma, "Omega": cfg.Omega, "omega": cfg.omega,
        "eps": eps, "selected": select, "constraint_residual": S, "U_at_0": U0,
        "U_at_0_over_eps": U0 / eps,
        "assembly_identity": assembly,
        "left_far_field_sup": left, "left_far_field_ok": left < 0.05 * eps,
        "right_tail_sup": right, "right_tail_ok": right < 0.05 * eps,
        "v_near_H4": h4_norm(state.v_near), "v_far_H4": h4_norm(state.v_far),
        "v_sup": float(np.max(np.abs(v.real))),
        "decay_left": tails[0], "decay_right": tails[1],
        "bifurcation_residual": bifurcation_residual(v, cfg, bg, cfg.guard),
        "multiplier_floor": bg.floor[0], "multiplier_floor_ok": bool(bg.floor[1]),
        "reduced": {k: val for k, val in state.diagnostics.items() if k != "residual_history"},
        "reduced_history": state.diagnostics.get("residual_history", []),
        "grid": {"L": grid.half_length, "N": n, "dx": grid.dx},
        "elapsed_s": time.perf_counter() - t0,
    })
    if sel is not None:
        diag["selection"] = {"Omega_star": sel.Omega_star, "omega_star": sel.omega_star,
                             "H_left": sel.H_left, "H_right": sel.H_right,
                             "iterations": sel.iterations, "history": sel.history}
    return SolutionBundle(cfg, bg.rolls, bg.envelope, state, sel, U, diag)


def h4_norm(f: SpectralField) -> float:
    return sobolev_norm(f, 4)


def continuity_probe(a: SolutionBundle, b: SolutionBundle, periods: float = 10.0,
                     points_per_period: int = 64) -> float:
    """sup |U_a - U_b| over the window |z| <= periods * 2 pi (may exceed either box)."""
    half = periods * 2 * math.pi
    z = np.linspace(-half, half, int(2 * periods * points_per_period) + 1)
    return float(np.max(np.abs(a.evaluate(z) - b.evaluate(z))))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_json(path: str | Path, data: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True))


def config_manifest(cfg: QuenchConfig, **extra) -> dict:
    d = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__ if k != "grid"}
    d["grid"] = {"L": cfg.grid.half_length, "N": cfg.grid.n_points}
    d["convention"] = CONVENTION
    d.update(extra)
    return d


def write_bundle(bundle: SolutionBundle, outdir: str | Path) -> Path:
    """U.csv (z, x, U), the corrector pieces, and manifest.json with all settings."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    grid = bundle.cfg.grid
    np.savetxt(out / "U.csv", np.column_stack([bundle.z, grid.x, bundle.U.real]),
               delimiter=",", header="z,x,U", comments="")
    if bundle.corrector is not None:
        eps, tau = bundle.rolls.eps, bundle.cfg.tau
        save_field(bundle.corrector.v_near, out / "v_near.csv", eps, tau)
        save_field(bundle.corrector.v_far, out / "v_far.csv", eps, tau)
    write_json(out / "manifest.json", {"config": config_manifest(bundle.cfg),
                                       "diagnostics": bundle.diagnostics})
    return out


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------

def _check(report: list, name: str, value: float, threshold: float, passed: bool | None = None,
           **info) -> None:
    ok = bool(value <= threshold) if passed is None else bool(passed)
    report.append({"name": name, "value": float(value), "threshold": float(threshold),
                   "passed": ok, **info})


def _quadrature_checks(report: list) -> None:
    # uniform trapezoid over one period is exact for trigonometric polynomials
    n = 64
    t = 2 * np.pi * np.arange(n) / n
    mean = lambda f: float(np.mean(f))  # noqa: E731
    _check(report, "quadrature: mean cos^4 = 3/8", abs(mean(np.cos(t) ** 4) - 3 / 8), 1e-14)
    _check(report, "quadrature: mean cos^2 = 1/2", abs(mean(np.cos(t) ** 2) - 1 / 2), 1e-14)
    _check(report, "quadrature: mean cos^2(t) cos(2t) = 1/4",
           abs(mean(np.cos(t) ** 2 * np.cos(2 * t)) - 1 / 4), 1e-14)


def _spectral_checks(report: list, rng: np.random.Generator, corrupt: bool) -> None:
    grid = UniformGrid(16 * math.pi, 1024)
    x = grid.x
    f = np.exp(-x ** 2 / 20) * (rng.standard_normal() + np.cos(3 * x))
    c = forward_transform(SpectralField.from_samples(grid, f))
    if corrupt:
        c = c / grid.dx  # drop the continuum dx factor: Plancherel must fail
    back = inverse_transform(grid, c) if not corrupt else inverse_transform(grid, c * grid.dx)
    _check(report, "spectral: round trip", float(np.max(np.abs(back - f))), 1e-12)
    lhs = grid.dx * np.sum(np.abs(f) ** 2)
    rhs = grid.dxi * np.sum(np.abs(c) ** 2) / (2 * math.pi)
    _check(report, "spectral: Plancherel", abs(lhs - rhs) / lhs, 1e-12,
           negative_control=corrupt)
    band = FrequencyBand.carriers(0.1, 0.25)
    worst = 0.0
    for _ in range(10):
        field_ = SpectralField.from_samples(grid, rng.standard_normal(grid.n_points)
                                            * np.exp(-x ** 2 / 200))
        near, far = project_near(field_, band), project_far(field_, band)
        pyth = abs(field_.l2_norm() ** 2 - near.l2_norm() ** 2 - far.l2_norm() ** 2)
        worst = max(worst, pyth / field_.l2_norm() ** 2)
    _check(report, "spectral: near/far Pythagoras", worst, 1e-12)
    g = SpectralField.from_samples(grid, np.exp(-x ** 2 / 8))
    d1 = g.derivative(1).real
    exact = -x / 4 * np.exp(-x ** 2 / 8)
    _check(report, "spectral: derivative of a Gaussian", float(np.max(np.abs(d1 - exact))), 1e-10)


def _rolls_checks(report: list) -> None:
    r = solve_rolls(0.05, 0.1, 0.3)
    _check(report, "rolls: ODE residual", r.residual, 1e-12)
    r0 = solve_rolls(0.05, 0.1, 0.0)
    shift = 0.3
    xs = np.linspace(0, 2 * math.pi, 50)
    eq = float(np.max(np.abs(r.evaluate(xs) - r0.evaluate(xs + shift))))
    _check(report, "rolls: phase equivariance", eq, 1e-10)
    H, dev = hamiltonian_of_rolls(r)
    _check(report, "rolls: Hamiltonian constant along the profile", dev, 1e-12)
    _check(report, "rolls: eps/delta -> sqrt(4/3)",
           abs(solve_rolls(0.01, 0.0, 0.0).eps / 0.01 - math.sqrt(4 / 3)), 1e-3)
    _check(report, "rolls: H on the zero state", abs(hamiltonian_right(0.1) - 1.0201 / 4), 1e-15)


def _envelope_checks(report: list) -> None:
    prof = solve_envelope(logistic_speed(), 60.0, 4096)
    X = np.linspace(-20, 20, 401)
    err = float(np.max(np.abs(prof(X) - logistic_front(X))))
    _check(report, "envelope: logistic front at c = 3 pi sqrt(3/2)", err, 1e-5)
    XX = prof.X
    chi = prof.values
    dchi = np.gradient(chi, XX)
    lhs = prof.c * trapezoid(dchi ** 2, XX)
    _check(report, "envelope: energy identity", abs(lhs - energy_identity_rhs())
           / energy_identity_rhs(), 1e-4)
    moved = shift_envelope(prof, 2.0)
    _check(report, "envelope: translation equivariance",
           float(np.max(np.abs(moved(X) - prof(X + 2.0)))), 1e-10)


def _corrector_checks(report: list, cfg: QuenchConfig) -> dict:
    bg = make_background(cfg)
    state = reduced_fixed_point(cfg, bg)
    v = state.v
    _check(report, "corrector: reality of v", float(np.max(np.abs(v.samples.imag))), 1e-10)
    _check(report, "corrector: near-dominance ||v_far||_H4 <= ||v_near||_H4",
           h4_norm(state.v_far), h4_norm(state.v_near))
    st = far_fixed_point(state.v_near, cfg, bg)
    est = max(st.contraction_estimates) if st.contraction_estimates else 0.0
    _check(report, "corrector: far map contracts", est, 0.999)
    d = state.diagnostics
    _check(report, "reduced: conjugation symmetry", d["conjugation_defect"], 1e-8)
    _check(report, "reduced: exact bookkeeping of Q", d["self_consistency"], 1e-10)
    _check(report, "reduced: Neumann ratio < 1", d["neumann_ratio"], 1.0)
    _check(report, "reduced: band leakage", d["leakage_before_truncation"], 1e-6)
    res = bifurcation_residual(v, cfg, bg, cfg.guard)
    _check(report, "corrector: bifurcation residual", res, 1e-8)
    sys_ = ReducedSystem(cfg, bg)
    lam = coercivity_constant(sys_.sgrid)
    report.append({"name": "reduced: -R0 coercivity constant (informational)",
                   "value": lam, "threshold": 0.0, "passed": bool(lam > 0),
                   "reference": 3 * math.pi ** 2 - 1.5 * math.pi - 1})
    return {"state": state, "bg": bg}


def _simulator_checks(report: list) -> None:
    grid = UniformGrid(16 * math.pi, 512)
    x = grid.x
    u0 = 1e-3 * np.cos(0.5 * x)
    st = run(new_state(grid, u0, 0.0, 1.0, mu=np.zeros_like(x), nonlinear=False), 1.0, 0.1)
    factor = (1.0 / (1.0 + 0.1 * (1 - 0.25) ** 2)) ** 10
    _check(report, "simulator: linear step is exact per mode",
           float(np.max(np.abs(st.u - factor * u0))), 1e-15)


def floor_exponent(tau: float, eps_values, omega: float = 1.0,
                   periods: int = 512) -> tuple[float, list[float]]:
    """Least-squares slope of log(min far |m|) against log(eps)."""
    eps_values = np.asarray(eps_values, dtype=float)
    grid = UniformGrid(2 * math.pi * periods, 64 * periods)
    floors = [multiplier_floor(FrequencyBand.carriers(e, tau), omega, tau, e, grid)[0]
              for e in eps_values]
    slope = np.polyfit(np.log(eps_values), np.log(floors), 1)[0]
    return float(slope), [float(f) for f in floors]


def _validation_checks(report: list, tau: float, delta: float) -> None:
    eps = eps_of(delta)
    sweep = eps * np.array([0.25, 0.5, 1.0, 2.0])
    slope, floors = floor_exponent(tau, sweep)
    report.append({"name": f"validation: multiplier-floor exponent at tau = {tau:g}",
                   "value": slope, "threshold": 2 * tau,
                   "passed": bool(abs(slope - 2 * tau) <= 0.2),
                   "eps": sweep.tolist(), "floors": floors})


def verify(cfg: QuenchConfig | None = None, corrupt_transform: bool = False,
           seed: int = 0, include_corrector: bool = True,
           validation_tau: float | None = None, validation_delta: float = 1e-3) -> dict:
    """Run the invariant checks of every stage; returns a JSON-ready report.

    ``corrupt_transform=True`` is a negative control: the transform loses its
    dx normalisation and the Plancherel check is expected to fail.
    ``validation_tau`` adds the multiplier-floor exponent check for that tau
    at ``validation_delta``.
    """
    rng = np.random.default_rng(seed)
    report: list[dict] = []
    _quadrature_checks(report)
    _spectral_checks(report, rng, corrupt_transform)
    _rolls_checks(report)
    _envelope_checks(report)
    if include_corrector:
        cfg = cfg or QuenchConfig(delta=0.05)
        _corrector_checks(report, cfg)
    _simulator_checks(report)
    if validation_tau is not None:
        _validation_checks(report, validation_tau, validation_delta)
    passed = all(r["passed"] for r in report)
    return {"passed": passed, "n_checks": len(report),
            "n_failed": sum(not r["passed"] for r in report), "checks": report,
            "negative_control": corrupt_transform}


def run_stage_safely(fn, *args, **kwargs):
    """Call fn; convert :class:`StageError` into (None, error-dict)."""
    try:
        return fn(*args, **kwargs), None
    except StageError as exc:
        return None, {"stage": exc.stage, "message": str(exc), "diagnostics": exc.diagnostics}
