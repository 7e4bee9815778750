"""Periodic roll solutions of  -(1 + w^2 d^2)^2 u + delta^2 u - u^3 = 0  on [0, 2 pi].

The rolls are computed by Newton's method on the Fourier-Galerkin system for
the harmonics ``c_m``, ``|m| <= M``, with the phase of ``c_1`` pinned to
``gamma``.  Parameters follow ``omega^2 = 1 + delta*Omega``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError

__all__ = [
    "PeriodicProfile",
    "omega_of",
    "leading_amplitude",
    "solve_rolls",
    "eps_of",
    "delta_of",
    "hamiltonian_density",
    "hamiltonian_of_rolls",
    "hamiltonian_right",
]

OMEGA_WINDOW = 1.0 / 3.0
DELTA_MAX = 0.2


def omega_of(delta: float, Omega: float) -> float:
    return float(np.sqrt(1.0 + delta * Omega))


def leading_amplitude(delta: float, Omega: float) -> float:
    """eps_0 = delta * sqrt(4/3 (1 - Omega^2))."""
    return float(delta * np.sqrt(4.0 / 3.0 * (1.0 - Omega ** 2)))


@dataclass(frozen=True)
class PeriodicProfile:
    """A 2*pi-periodic roll u(x) = sum_{|m|<=M} c_m e^{imx}.

    ``modes`` holds c_0..c_M; negative harmonics are the conjugates.
    """

    modes: np.ndarray
    delta: float
    Omega: float
    gamma: float
    residual: float = 0.0
    iterations: int = 0

    @property
    def M(self) -> int:
        return len(self.modes) - 1

    @property
    def omega(self) -> float:
        return omega_of(self.delta, self.Omega)

    @property
    def eps(self) -> float:
        return float(2.0 * abs(self.modes[1]))

    def full_modes(self) -> tuple[np.ndarray, np.ndarray]:
        """(m, c_m) for m = -M..M."""
        m = np.arange(-self.M, self.M + 1)
        c = np.concatenate([np.conj(self.modes[:0:-1]), self.modes])
        return m, c

    def evaluate(self, x, derivative: int = 0) -> np.ndarray:
        """d^k u / dx^k at the points x (Fourier summation)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m in range(1, self.M + 1):
            c = self.modes[m]
            if c == 0:
                continue
            out += 2.0 * np.real(c * (1j * m) ** derivative * np.exp(1j * m * x))
        if derivative == 0:
            out += self.modes[0].real
        return out

    def ode_residual(self, n: int = 256) -> float:
        """Sup norm of -(1+w^2 d^2)^2 u + delta^2 u - u^3 on n points of one period."""
        x = 2 * np.pi * np.arange(n) / n
        u = self.evaluate(x)
        w2 = self.omega ** 2
        lin = -(u + 2 * w2 * self.evaluate(x, 2) + w2 ** 2 * self.evaluate(x, 4))
        return float(np.max(np.abs(lin + self.delta ** 2 * u - u ** 3)))


def _cube_modes(c: np.ndarray, M: int, n_grid: int) -> np.ndarray:
    """Harmonics 0..M of u^3 (exact for n_grid >= 4M+1)."""
    full = np.zeros(n_grid, dtype=complex)
    full[: M + 1] = c
    full[n_grid - M:] = np.conj(c[:0:-1])
    u = np.fft.ifft(full).real * n_grid
    return np.fft.fft(u ** 3)[: M + 1] / n_grid


def _galerkin(c: np.ndarray, delta: float, w2: float, n_grid: int) -> np.ndarray:
    M = len(c) - 1
    m = np.arange(M + 1)
    return -(1 - w2 * m ** 2) ** 2 * c + delta ** 2 * c - _cube_modes(c, M, n_grid)


def solve_rolls(delta: float, Omega: float, gamma: float, M: int = 16,
                tol: float = 1e-12, max_iter: int = 50) -> PeriodicProfile:
    """Newton-Galerkin solve for the roll with arg(c_1) = gamma."""
    if not 0.0 <= delta <= DELTA_MAX:
        raise DomainError(f"delta must lie in [0, {DELTA_MAX}], got {delta}")
    if not abs(Omega) < OMEGA_WINDOW:
        raise DomainError(f"|Omega| must be below 1/3, got {Omega}")
    if M < 8:
        raise DomainError("at least 8 harmonics are required")
    w2 = 1.0 + delta * Omega
    if delta == 0.0:
        return PeriodicProfile(np.zeros(M + 1, dtype=complex), 0.0, Omega, gamma, 0.0, 0)
    return _solve_rolls_cached(float(delta), float(Omega), float(gamma), int(M), float(tol),
                               int(max_iter), w2)


@lru_cache(maxsize=256)
def _solve_rolls_cached(delta, Omega, gamma, M, tol, max_iter, w2) -> PeriodicProfile:
    n_grid = 4 * M + 4
    phase = np.exp(1j * gamma)
    # unknowns: Re/Im of c_0 (Im c_0 = 0), the real amplitude a of c_1 = a e^{i gamma},
    # and Re/Im of c_2..c_M.  Equations: all Re/Im parts; solved in least squares,
    # which absorbs the translation direction removed by the phase pin.
    c = np.zeros(M + 1, dtype=complex)
    c[1] = 0.5 * leading_amplitude(delta, Omega) * phase

    def unpack(p):
        cc = np.zeros(M + 1, dtype=complex)
        cc[0] = p[0]
        cc[1] = p[1] * phase
        cc[2:] = p[2:M + 1] + 1j * p[M + 1:]
        return cc

    def pack(cc):
        return np.concatenate([[cc[0].real, (cc[1] * np.conj(phase)).real], cc[2:].real, cc[2:].imag])

    def equations(p):
        r = _galerkin(unpack(p), delta, w2, n_grid)
        return np.concatenate([r.real, r.imag[1:]])

    p = pack(c)
    history = []
    for it in range(max_iter + 1):
        F = equations(p)
        res = float(np.max(np.abs(F)))
        history.append(res)
        if res < tol:
            prof = PeriodicProfile(unpack(p), delta, Omega, gamma, res, it)
            return prof
        if it == max_iter:
            break
        # Jacobian by complex-step free finite differences is unnecessary: the system
        # is a cubic polynomial, so use an exact directional derivative per column.
        J = _jacobian(p, unpack, delta, w2, n_grid)
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        p = p + step
    raise ConvergenceError("roll Newton iteration did not converge", stage="rolls",
                           diagnostics={"last_residual": history[-1], "history": history})


def _jacobian(p, unpack, delta, w2, n_grid):
    c = unpack(p)
    M = len(c) - 1
    m = np.arange(M + 1)
    lin = -(1 - w2 * m ** 2) ** 2 + delta ** 2
    full = np.zeros(n_grid, dtype=complex)
    full[: M + 1] = c
    full[n_grid - M:] = np.conj(c[:0:-1])
    u = np.fft.ifft(full).real * n_grid
    three_u2 = 3 * u ** 2
    cols = []
    for j in range(len(p)):
        e = np.zeros(len(p))
        e[j] = 1.0
        dc = unpack(e)
        s = np.zeros(n_grid, dtype=complex)
        s[: M + 1] = dc
        s[n_grid - M:] = np.conj(dc[:0:-1])
        du = np.fft.ifft(s).real * n_grid
        dr = lin * dc - np.fft.fft(three_u2 * du)[: M + 1] / n_grid
        cols.append(np.concatenate([dr.real, dr.imag[1:]]))
    return np.column_stack(cols)


def eps_of(delta: float, Omega: float = 0.0, gamma: float = 0.0, M: int = 16) -> float:
    return solve_rolls(delta, Omega, gamma, M).eps


def delta_of(eps: float, Omega: float = 0.0, gamma: float = 0.0, M: int = 16,
             xtol: float = 1e-14) -> float:
    """Invert eps(delta) at fixed Omega by a bracketed Brent root find."""
    if eps == 0.0:
        return 0.0
    if eps < 0 or not abs(Omega) < OMEGA_WINDOW:
        raise DomainError("need eps >= 0 and |Omega| < 1/3")
    # leading order with w^2 = 1 + delta*Omega: delta^2 = 3 eps^2 / 4 + delta^2 Omega^2
    guess = eps * np.sqrt(0.75 / (1.0 - Omega ** 2))
    lo, hi = 0.5 * guess, min(1.5 * guess, DELTA_MAX)

    def f(d):
        return eps_of(d, Omega, gamma, M) - eps

    if hi <= lo or f(lo) * f(hi) > 0:
        raise DomainError(f"eps = {eps} is outside the bracketable range")
    return float(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


def hamiltonian_density(V: np.ndarray, V1: np.ndarray, V2: np.ndarray, V3: np.ndarray,
                        omega: float, eta: float) -> np.ndarray:
    """-(w^4/2) V''^2 + w^2 V'^2 + w^4 V' V''' + (1/4)(1 - eta + V^2)^2."""
    w2 = omega ** 2
    return (-0.5 * w2 ** 2 * V2 ** 2 + w2 * V1 ** 2 + w2 ** 2 * V1 * V3
            + 0.25 * (1.0 - eta + V ** 2) ** 2)


def hamiltonian_of_rolls(profile: PeriodicProfile, eta: float | None = None,
                         n: int = 256) -> tuple[float, float]:
    """(mean, max deviation) of the conserved quantity over one period; eta defaults to delta^2."""
    if eta is None:
        eta = profile.delta ** 2
    x = 2 * np.pi * np.arange(n) / n
    H = hamiltonian_density(profile.evaluate(x), profile.evaluate(x, 1), profile.evaluate(x, 2),
                            profile.evaluate(x, 3), profile.omega, eta)
    mean = float(np.mean(H))
    return mean, float(np.max(np.abs(H - mean)))


def hamiltonian_right(delta: float) -> float:
    """Conserved quantity of the zero state in the damped medium, (1 + delta^2)^2 / 4."""
    return 0.25 * (1.0 + delta ** 2) ** 2
