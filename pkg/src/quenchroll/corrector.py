"""Corrector equation for U = v + chi(eps x) u_rolls(x).

With L = -(1 + w^2 d^2)^2 the corrector v satisfies  L v = N1 + N2 + N3 + N4,

    N1 = -(delta^2 mu - 3 (chi u)^2) v
    N2 = 3 chi u v^2
    N3 = v^3
    N4 = chi (chi^2 - 1) u^3 - delta^2 chi (mu - 1) u + [(1 + w^2 d^2)^2, chi] u

where mu = +1 for x <= 0 and -1 for x > 0.  The commutator is expanded by the
product rule using exact derivatives of the rolls and of the envelope, so the
background never has to be differentiated across the periodic seam of the box.

The far component (frequencies away from +-1) is obtained from the near one by
the Picard map  v_far <- F^{-1}[(1/m) P_far F[sum N(v_near + v_far)]].
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .envelope import EnvelopeProfile, logistic_speed, shift_envelope, solve_envelope
from .errors import ConfigError, NonContractionError
from .rolls import OMEGA_WINDOW, PeriodicProfile, solve_rolls
from .spectral import (FrequencyBand, GridSpec, SpectralField, multiplier_floor, she_multiplier,
                       sobolev_norm)

__all__ = [
    "QuenchConfig",
    "Background",
    "CorrectorState",
    "make_background",
    "quench_profile",
    "default_grid",
    "nonlinearity",
    "total_nonlinearity",
    "far_fixed_point",
    "bifurcation_residual",
    "decay_check",
    "interior_mask",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuenchConfig:
    """Physical parameters, discretisation and tolerances of one build."""

    delta: float
    Omega: float = 0.0
    gamma: float = 0.0
    tau: float = 0.25
    beta: float = 1.0
    grid: GridSpec = field(default_factory=lambda: GridSpec.from_periods(32, 8192))
    fixed_point_tol: float = 1e-10
    newton_tol: float = 1e-10
    envelope_c: float = field(default_factory=logistic_speed)
    envelope_S: float = 60.0
    envelope_n: int = 4096
    envelope_shift: float = 0.0
    C_multiplier: float = 0.5
    R_ball: float = 2.0
    modes: int = 16
    rolls_tol: float = 1e-12
    guard: float = 0.05
    max_far_iter: int = 200
    max_reduced_iter: int = 200
    method: str = "newton-krylov"
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta <= 0.2:
            raise ConfigError(f"delta must lie in [0, 0.2], got {self.delta}")
        if not abs(self.Omega) < OMEGA_WINDOW:
            raise ConfigError(f"|Omega| must be below 1/3, got {self.Omega}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.beta != 1.0:
            raise ConfigError("only beta = 1 is supported")
        if not 0.0 <= self.guard < 0.5:
            raise ConfigError("guard fraction must lie in [0, 0.5)")
        if self.method not in ("newton-krylov", "picard"):
            raise ConfigError(f"unknown reduced solver {self.method!r}")
        if self.tau >= 1.0 / 16.0:
            log.debug("tau = %g is outside the asymptotic range tau < 1/16", self.tau)

    @property
    def omega(self) -> float:
        return math.sqrt(1.0 + self.delta * self.Omega)

    def with_(self, **changes) -> "QuenchConfig":
        return replace(self, **changes)

    def rolls(self) -> PeriodicProfile:
        return solve_rolls(self.delta, self.Omega, self.gamma, self.modes, self.rolls_tol)

    def envelope(self) -> EnvelopeProfile:
        return _envelope(self.envelope_c, self.envelope_S, self.envelope_n, self.envelope_shift)


@lru_cache(maxsize=32)
def _envelope(c: float, S: float, n: int, shift: float) -> EnvelopeProfile:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        prof = solve_envelope(c, S, n)
    return shift_envelope(prof, shift) if shift else prof


def default_grid(delta: float, slow_box: float = 40.0, min_periods: int = 32) -> GridSpec:
    """Box whose slow half-length eps*L is about ``slow_box``, with dx <= pi/10.

    The envelope and the amplitude healing length both scale like 1/delta in
    x, so the box has to grow accordingly.
    """
    if delta <= 0:
        return GridSpec.from_periods(min_periods, 1024)
    eps0 = delta * math.sqrt(4.0 / 3.0)
    periods = max(min_periods, math.ceil(slow_box / eps0 / (2 * math.pi)))
    n = 1 << math.ceil(math.log2(40 * periods))
    return GridSpec.from_periods(periods, n)


def quench_profile(x: np.ndarray) -> np.ndarray:
    """mu(x) = +1 for x <= 0, -1 for x > 0."""
    return np.where(np.asarray(x) <= 0.0, 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class Background:
    """Everything about chi(eps x) u_rolls(x) the corrector needs, sampled on the fast grid."""

    cfg: QuenchConfig
    rolls: PeriodicProfile
    envelope: EnvelopeProfile
    eps: float
    band: FrequencyBand | None
    mu: np.ndarray
    chi: np.ndarray
    u: np.ndarray
    chi_u: np.ndarray
    forcing: np.ndarray           # N4
    linear_coeff: np.ndarray      # -(delta^2 mu - 3 (chi u)^2)
    multiplier: np.ndarray        # m(xi) on the fast grid
    far: np.ndarray               # boolean mask of far bins
    floor: tuple[float, bool] = (np.nan, False)

    @property
    def grid(self) -> GridSpec:
        return self.cfg.grid


def make_background(cfg: QuenchConfig, rolls: PeriodicProfile | None = None,
                    envelope: EnvelopeProfile | None = None) -> Background:
    rolls = rolls if rolls is not None else cfg.rolls()
    envelope = envelope if envelope is not None else cfg.envelope()
    grid = cfg.grid
    x = grid.x
    eps = rolls.eps
    w2 = cfg.omega ** 2
    mu = quench_profile(x)
    u = [rolls.evaluate(x, k) for k in range(5)]
    if eps > 0:
        X = eps * x
        chi = [envelope(X, k) * eps ** k for k in range(5)]
    else:
        chi = [np.ones_like(x)] + [np.zeros_like(x)] * 4
    chi_u = chi[0] * u[0]
    commutator = (2 * w2 * (chi[2] * u[0] + 2 * chi[1] * u[1])
                  + w2 ** 2 * (4 * chi[1] * u[3] + 6 * chi[2] * u[2] + 4 * chi[3] * u[1]
                               + chi[4] * u[0]))
    d2 = cfg.delta ** 2
    forcing = chi[0] * (chi[0] ** 2 - 1) * u[0] ** 3 - d2 * chi[0] * (mu - 1) * u[0] + commutator
    lin = -(d2 * mu - 3 * chi_u ** 2)
    m = she_multiplier(grid.xi, cfg.omega)
    if eps > 0:
        band = FrequencyBand.carriers(eps, cfg.tau)
        far = ~band.mask(grid.xi)
        floor = multiplier_floor(band, cfg.omega, cfg.tau, eps, grid, cfg.C_multiplier)
        if not floor[1]:
            log.warning("multiplier floor %.3g below C eps^(2 tau)", floor[0])
    else:
        band, far, floor = None, np.ones(grid.n_points, dtype=bool), (1.0, True)
    return Background(cfg, rolls, envelope, eps, band, mu, chi[0], u[0], chi_u, forcing, lin, m,
                      far, floor)


def nonlinearity(j: int, v: SpectralField, cfg: QuenchConfig,
                 bg: Background | None = None) -> SpectralField:
    """The j-th nonlinear term (j = 1..4) evaluated pointwise on the fast grid."""
    bg = bg if bg is not None else make_background(cfg)
    s = v.samples
    if j == 1:
        out = bg.linear_coeff * s
    elif j == 2:
        out = 3 * bg.chi_u * s ** 2
    elif j == 3:
        out = s ** 3
    elif j == 4:
        out = bg.forcing.astype(complex)
    else:
        raise ValueError("j must be 1, 2, 3 or 4")
    return SpectralField.from_samples(v.grid, out, is_real=v.is_real)


def total_nonlinearity(samples: np.ndarray, bg: Background) -> np.ndarray:
    """N1 + N2 + N3 + N4 at the grid samples of v."""
    return bg.forcing + samples * (bg.linear_coeff + samples * (3 * bg.chi_u + samples))


@dataclass
class CorrectorState:
    """Near/far decomposition of a corrector and its iteration record."""

    g_minus: SpectralField | None
    g_plus: SpectralField | None
    v_near: SpectralField
    v_far: SpectralField
    iterations: int = 0
    contraction_estimates: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def v(self) -> SpectralField:
        return self.v_near + self.v_far


def _dft_coeffs(grid, samples):
    return SpectralField.from_samples(grid, samples).coeffs


def far_fixed_point(v_near: SpectralField, cfg: QuenchConfig, bg: Background | None = None,
                    v_far0: SpectralField | None = None, tol: float | None = None,
                    max_iter: int | None = None, log_steps: list | None = None) -> CorrectorState:
    """Picard iteration for the far component at fixed near component.

    Stops when the H^4 norm of the update drops below ``tol``.  Raises
    :class:`NonContractionError` after three consecutive update ratios >= 1.
    """
    bg = bg if bg is not None else make_background(cfg)
    tol = cfg.fixed_point_tol if tol is None else tol
    max_iter = cfg.max_far_iter if max_iter is None else max_iter
    grid = cfg.grid
    if bg.eps > 0:
        ball = sobolev_norm(v_near, 4)
        if ball > cfg.R_ball * math.sqrt(bg.eps):
            log.info("near component outside the ball: |v_near|_H4 = %.3g > R sqrt(eps) = %.3g",
                     ball, cfg.R_ball * math.sqrt(bg.eps))
    weight = (1.0 + grid.xi ** 2) ** 4 * grid.dxi
    inv_m = np.zeros(grid.n_points)
    inv_m[bg.far] = 1.0 / bg.multiplier[bg.far]
    vn = v_near.samples
    far_c = np.zeros(grid.n_points, dtype=complex) if v_far0 is None else v_far0.coeffs.copy()
    far_s = SpectralField.from_coeffs(grid, far_c, is_real=False).samples
    ratios: list[float] = []
    prev = None
    bad = 0
    for k in range(1, max_iter + 1):
        N = total_nonlinearity(vn + far_s, bg)
        new_c = inv_m * _dft_coeffs(grid, N)
        d = float(np.sqrt(np.sum(weight * np.abs(new_c - far_c) ** 2)))
        far_c = new_c
        far_s = SpectralField.from_coeffs(grid, far_c, is_real=False).samples
        if prev is not None and prev > 0:
            ratios.append(d / prev)
            bad = bad + 1 if ratios[-1] >= 1.0 else 0
        if log_steps is not None:
            log_steps.append({"k": k, "delta_norm": d,
                              "contraction": ratios[-1] if ratios and prev else None})
        if bad >= 3:
            raise NonContractionError("far-field map does not contract", stage="corrector",
                                      diagnostics={"ratios": ratios, "k": k})
        prev = d
        if d < tol:
            break
    else:
        raise NonContractionError("far-field map did not reach tolerance", stage="corrector",
                                  diagnostics={"ratios": ratios, "last": prev})
    real = v_near.is_real
    v_far = SpectralField.from_coeffs(grid, far_c, is_real=real if real else None)
    return CorrectorState(None, None, v_near, v_far, k, ratios)


def interior_mask(grid, guard: float) -> np.ndarray:
    x = grid.x
    return np.abs(x) <= (1.0 - guard) * grid.half_length


def bifurcation_residual(v: SpectralField, cfg: QuenchConfig, bg: Background | None = None,
                         guard: float | None = None) -> float:
    """L2 norm of L[v] - sum_j N_j(v) over the box minus the seam guard bands."""
    bg = bg if bg is not None else make_background(cfg)
    guard = cfg.guard if guard is None else guard
    Lv = SpectralField.from_coeffs(v.grid, bg.multiplier * v.coeffs, is_real=False).samples
    r = Lv - total_nonlinearity(v.samples, bg)
    mask = interior_mask(v.grid, guard)
    return float(np.sqrt(v.grid.dx * np.sum(np.abs(r[mask]) ** 2)))


def decay_check(v: SpectralField, fraction: float = 0.1) -> tuple[float, float]:
    """max_{j<=3} sup |d^j v| over the outer ``fraction`` of the box on each side."""
    x = v.grid.x
    L = v.grid.half_length
    left = x < -(1 - fraction) * L
    right = x > (1 - fraction) * L
    lt = rt = 0.0
    d = v
    for j in range(4):
        if j:
            d = d.derivative(1)
        a = np.abs(d.samples)
        lt = max(lt, float(np.max(a[left], initial=0.0)))
        rt = max(rt, float(np.max(a[right], initial=0.0)))
    return lt, rt
