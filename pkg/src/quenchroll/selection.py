"""Hamiltonian matching at the quench point and the selected wavenumber.

A stationary solution conserves the Hamiltonian on each side of x = 0; the
jump of mu there changes it by -delta^2 U(0)^2 - delta^2.  Matching the rolls
on the left to the zero state on the right gives the scalar constraint

    S(Omega) = ( -delta^2 U(0)^2 - delta^2 - H_left[rolls] + H_right[0] ) / delta^2 = 0,

which is solved for Omega with the corrector recomputed at every trial value.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from scipy.optimize import brentq

from .corrector import CorrectorState, QuenchConfig, make_background
from .errors import SelectionError
from .reduced import ReducedSystem, reduced_fixed_point
from .rolls import (PeriodicProfile, hamiltonian_of_rolls, hamiltonian_right, omega_of,
                    solve_rolls)

__all__ = [
    "SelectionResult",
    "hamiltonian_jump",
    "constraint_residual",
    "scaled_constraint",
    "evaluate_constraint",
    "select_omega",
    "hamiltonian_expansion_check",
]

log = logging.getLogger(__name__)


@dataclass
class SelectionResult:
    delta: float
    gamma: float
    Omega_star: float
    omega_star: float
    constraint_residual: float
    H_left: float
    H_right: float
    iterations: int
    U_at_0: float
    history: list = field(default_factory=list)
    state: CorrectorState | None = field(default=None, repr=False)


def hamiltonian_jump(rolls: PeriodicProfile) -> tuple[float, float]:
    """(H_left[rolls] with eta = delta^2, H_right[0] = (1 + delta^2)^2 / 4)."""
    H_l, _ = hamiltonian_of_rolls(rolls)
    return H_l, hamiltonian_right(rolls.delta)


def constraint_residual(delta: float, Omega: float, gamma: float, U_at_0: float,
                        rolls: PeriodicProfile | None = None) -> float:
    """[-delta^2 U(0)^2 - delta^2] - [H_left - H_right]."""
    if delta == 0.0:
        return 0.0
    rolls = rolls if rolls is not None else solve_rolls(delta, Omega, gamma)
    H_l, H_r = hamiltonian_jump(rolls)
    return (-delta ** 2 * U_at_0 ** 2 - delta ** 2) - (H_l - H_r)


def scaled_constraint(delta, Omega, gamma, U_at_0, rolls=None) -> float:
    return constraint_residual(delta, Omega, gamma, U_at_0, rolls) / delta ** 2


def evaluate_constraint(cfg: QuenchConfig, g0=None) -> tuple[float, float, CorrectorState]:
    """Run rolls -> reduced -> far corrector at cfg.Omega; return (S, U(0), state)."""
    bg = make_background(cfg)
    state = reduced_fixed_point(cfg, bg, ReducedSystem(cfg, bg), g0=g0)
    i0 = cfg.grid.origin_index
    U0 = float(state.v.samples[i0].real + bg.chi_u[i0])
    return scaled_constraint(cfg.delta, cfg.Omega, cfg.gamma, U0, bg.rolls), U0, state


def select_omega(delta: float, gamma: float, cfg: QuenchConfig | None = None,
                 tol: float = 1e-8, bracket: tuple[float, float] | None = None) -> SelectionResult:
    """Root of the scaled constraint in Omega by a bracketed Brent iteration.

    The bracket starts at +-delta/4 and widens (to at most +-0.33) until the
    constraint changes sign; otherwise :class:`SelectionError` is raised.
    """
    cfg = (cfg or QuenchConfig(delta=delta)).with_(delta=delta, gamma=gamma)
    history: list[tuple[float, float]] = []
    warm = {}

    def S(Om: float) -> float:
        c = cfg.with_(Omega=float(Om))
        # warm start from the nearest evaluated Omega (deterministic given the sequence)
        g0 = None
        if warm:
            key = min(warm, key=lambda k: abs(k - Om))
            g0 = warm[key]
        val, U0, st = evaluate_constraint(c, g0)
        warm[float(Om)] = (st.g_minus.coeffs, st.g_plus.coeffs)
        history.append((float(Om), float(val)))
        log.info("delta=%g gamma=%g Omega=%.8g S=%.3e", delta, gamma, Om, val)
        return val

    if bracket is None:
        half = [0.25 * delta, 0.5 * delta, 2.0 * delta, 0.33]
        lo = hi = None
        for w in half:
            w = min(w, 0.33)
            a, b = -w, w
            Sa, Sb = S(a), S(b)
            if Sa * Sb <= 0:
                lo, hi = a, b
                break
        if lo is None:
            raise SelectionError("constraint does not change sign on the admissible window",
                                 stage="select", diagnostics={"history": history})
    else:
        lo, hi = bracket
        if S(lo) * S(hi) > 0:
            raise SelectionError("constraint does not change sign on the bracket",
                                 stage="select", diagnostics={"history": history})
    root = brentq(S, lo, hi, xtol=tol * max(delta, 1e-300), rtol=1e-14, maxiter=100)
    c = cfg.with_(Omega=float(root))
    key = min(warm, key=lambda k: abs(k - root))
    val, U0, st = evaluate_constraint(c, warm[key])
    history.append((float(root), float(val)))
    rolls = c.rolls()
    H_l, H_r = hamiltonian_jump(rolls)
    return SelectionResult(delta, gamma, float(root), omega_of(delta, root),
                           val, H_l, H_r, len(history), U0, history, st)


def hamiltonian_expansion_check(delta: float, Omega: float, gamma: float = 0.0
                                ) -> tuple[float, float, float]:
    """(lhs, rhs, rel_err) for H_left - H_right against -delta^2 + (4/3) delta^3 (Omega + Omega^3)."""
    if delta == 0.0:
        return 0.0, 0.0, 0.0
    rolls = solve_rolls(delta, Omega, gamma)
    H_l, H_r = hamiltonian_jump(rolls)
    lhs = H_l - H_r
    rhs = -delta ** 2 + 4.0 / 3.0 * delta ** 3 * (Omega + Omega ** 3)
    return lhs, rhs, abs(lhs - rhs) / abs(rhs)


def jump_expansion(delta: float, Omega: float) -> float:
    """Expansion of H_left - H_right that the computed rolls follow:
    -delta^2 - (4/3) delta^3 Omega (1 - Omega^2) - delta^4/6, fitted to the computed rolls."""
    return -delta ** 2 - 4.0 / 3.0 * delta ** 3 * Omega * (1 - Omega ** 2) - delta ** 4 / 6.0


def omega_law(delta: float, gamma: float, denominator: float = 16.0) -> float:
    """delta cos(2 gamma) / denominator."""
    return delta * math.cos(2 * gamma) / denominator

