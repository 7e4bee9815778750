"""Front profiles chi solving  4 pi chi'' + c chi' + (3 pi / 4)(chi - chi^3) = 0.

chi connects 1 (X -> -inf) to 0 (X -> +inf).  The truncated boundary value
problem on [-S, S] is solved by damped Newton on second-order central
differences; the result is translated so that chi(0) = 1/2.  Off the sampled
window the profile is continued by exponential tails.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.interpolate import make_interp_spline
from scipy.sparse.linalg import spsolve

from .errors import ConvergenceError, DomainError

__all__ = [
    "EnvelopeProfile",
    "solve_envelope",
    "shift_envelope",
    "gamma3_norm",
    "front_rates",
    "logistic_speed",
    "logistic_front",
    "energy_identity_rhs",
]

log = logging.getLogger(__name__)

A2 = 4.0 * np.pi          # coefficient of chi''
A0 = 0.75 * np.pi         # coefficient of chi - chi^3


def logistic_speed() -> float:
    """Speed at which 1/(1 + exp(k X)) is an exact front: c = 3 pi sqrt(3/2)."""
    return 3.0 * np.pi * np.sqrt(1.5)


def logistic_front(X) -> np.ndarray:
    """The exact front at :func:`logistic_speed`, pinned at chi(0) = 1/2."""
    k = np.sqrt(3.0) / (4.0 * np.sqrt(2.0))
    return 0.5 * (1.0 - np.tanh(0.5 * k * np.asarray(X, dtype=float)))


def energy_identity_rhs() -> float:
    """c * int chi'^2 for any front: (3 pi/4) * (1/2 - 1/4) = 3 pi / 16."""
    return 3.0 * np.pi / 16.0


def front_rates(c: float) -> tuple[float, complex]:
    """Linear decay rates (left, right) of the tails.

    Left: chi = 1 - A e^{lam X}; right: chi ~ e^{-nu X} with nu possibly complex
    (oscillating tail) when c < 2 pi sqrt(3).
    """
    lam = (-c + np.sqrt(c * c + 24 * np.pi ** 2)) / (8 * np.pi)
    disc = complex(c * c - 12 * np.pi ** 2)
    nu = (c - np.sqrt(disc)) / (8 * np.pi)
    return float(lam), complex(nu)


@dataclass(frozen=True, eq=False)
class EnvelopeProfile:
    """Sampled front chi on the nodes ``X_i = x0 + i*h`` (pinned so chi(0 - shift) = 1/2)."""

    c: float
    values: np.ndarray
    x0: float
    h: float
    shift: float = 0.0
    residual: float = 0.0
    rate_left: float = 0.0
    rate_right: float = 0.0
    r2_left: float = 0.0
    r2_right: float = 0.0
    iterations: int = 0
    _spline: object = field(default=None, repr=False)

    @property
    def X(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(len(self.values))

    @property
    def S(self) -> float:
        return 0.5 * self.h * (len(self.values) - 1)

    @property
    def window(self) -> tuple[float, float]:
        return self.x0, self.x0 + self.h * (len(self.values) - 1)

    def spline(self):
        if self._spline is None:
            object.__setattr__(self, "_spline", make_interp_spline(self.X, self.values, k=5))
        return self._spline

    def __call__(self, X, derivative: int = 0) -> np.ndarray:
        """chi^{(k)}(X), k <= 4, with exponential continuation off the window."""
        X = np.asarray(X, dtype=float)
        a, b = self.window
        out = np.empty_like(X)
        inside = (X >= a) & (X <= b)
        out[inside] = self.spline()(X[inside], nu=derivative) if np.any(inside) else 0.0
        left = X < a
        if np.any(left):
            # 1 - A e^{lam (X - a)}
            A = 1.0 - self.values[0]
            lam = self.rate_left
            val = -A * lam ** derivative * np.exp(lam * (X[left] - a))
            out[left] = val + (1.0 if derivative == 0 else 0.0)
        right = X > b
        if np.any(right):
            B = self.values[-1]
            nu = self.rate_right
            out[right] = B * (-nu) ** derivative * np.exp(-nu * (X[right] - b))
        return out

    def min_value(self) -> float:
        return float(np.min(self.values))


def _residual(chi: np.ndarray, c: float, h: float) -> np.ndarray:
    d2 = (chi[2:] - 2 * chi[1:-1] + chi[:-2]) / h ** 2
    d1 = (chi[2:] - chi[:-2]) / (2 * h)
    u = chi[1:-1]
    return A2 * d2 + c * d1 + A0 * (u - u ** 3)


def _jacobian(chi: np.ndarray, c: float, h: float) -> sp.csc_matrix:
    n = len(chi) - 2
    u = chi[1:-1]
    main = -2 * A2 / h ** 2 + A0 * (1 - 3 * u ** 2)
    up = np.full(n - 1, A2 / h ** 2 + c / (2 * h))
    lo = np.full(n - 1, A2 / h ** 2 - c / (2 * h))
    return sp.diags([lo, main, up], [-1, 0, 1], format="csc")


def _fit_tail(X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope of log|y| against X and the R^2 of that linear fit."""
    ly = np.log(np.abs(y) + 1e-300)
    slope, icpt = np.polyfit(X, ly, 1)
    pred = slope * X + icpt
    ss_res = np.sum((ly - pred) ** 2)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    return float(slope), float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def _pinned_newton(chi0: np.ndarray, c: float, X: np.ndarray, tol: float,
                   max_iter: int) -> tuple[np.ndarray, list[float]]:
    # The truncated problem is translation invariant up to exponentially small
    # boundary effects, so Newton is run with the pin chi(0) = 1/2 imposed and the
    # right boundary value b left free; b comes out exponentially small.  (The
    # adjoint of the translation mode is weighted by exp(c X / 4 pi), i.e. it
    # lives at the right end, which is why that end must absorb the mismatch.)
    n_points = len(X)
    h = X[1] - X[0]
    chi = chi0.copy()
    chi[0] = 1.0
    i0, i1 = n_points // 2 - 1, n_points // 2
    wa = (X[i1] - 0.0) / h
    history: list[float] = []
    m = n_points - 2
    for it in range(max_iter + 1):
        F = _residual(chi, c, h)
        pin = wa * chi[i0] + (1 - wa) * chi[i1] - 0.5
        r = float(max(np.max(np.abs(F)), abs(pin)))
        history.append(r)
        if r < tol:
            return chi, history
        if it == max_iter:
            break
        J = _jacobian(chi, c, h)
        col = sp.csc_matrix(([A2 / h ** 2 + c / (2 * h)], ([m - 1], [0])), shape=(m, 1))
        row = sp.csr_matrix(([wa, 1 - wa], ([0, 0], [i0 - 1, i1 - 1])), shape=(1, m))
        full = sp.bmat([[J, col], [row, None]], format="csc")
        step = spsolve(full, -np.concatenate([F, [pin]]))
        t = 1.0
        while True:
            trial = chi.copy()
            trial[1:-1] += t * step[:-1]
            trial[-1] += t * step[-1]
            Ft = _residual(trial, c, h)
            pt = wa * trial[i0] + (1 - wa) * trial[i1] - 0.5
            if np.isfinite(Ft).all() and max(np.max(np.abs(Ft)), abs(pt)) < (1 - 0.25 * t) * r:
                break
            if t < 1e-6:
                raise ConvergenceError("front line search failed", stage="envelope",
                                       diagnostics={"history": history, "c": c})
            t *= 0.5
        chi = trial
    raise ConvergenceError("front Newton iteration did not converge", stage="envelope",
                           diagnostics={"history": history, "c": c})


def solve_envelope(c: float, S: float = 60.0, n_points: int = 4096, tol: float = 1e-10,
                   max_iter: int = 100) -> EnvelopeProfile:
    """Damped Newton on the collocated front problem; returns a pinned profile.

    The left boundary value is 1; the right one, b, is solved for together
    with the pin, so that the discrete front sits at the centre of the window.
    For monotone fronts b is of the size of the neglected tail.
    """
    if not c > 0:
        raise DomainError("front speed c must be positive")
    if n_points < 16:
        raise DomainError("need at least 16 collocation points")
    lam, nu = front_rates(c)
    slow = min(lam, nu.real)
    if np.exp(-slow * S) > 1e-3:
        warnings.warn(f"window S={S} is short for the tail rate {slow:.3g}", RuntimeWarning,
                      stacklevel=2)
    X = np.linspace(-S, S, n_points)
    guess = logistic_front(X)
    try:
        chi, history = _pinned_newton(guess, c, X, tol, max_iter)
    except ConvergenceError:
        # natural continuation in c from the exactly known logistic front
        c_path = np.geomspace(logistic_speed(), c, 24)[1:]
        chi = guess
        for ck in c_path:
            chi, history = _pinned_newton(chi, ck, X, tol, max_iter)
    h = X[1] - X[0]
    it = len(history) - 1
    if chi.min() < -0.1 or chi.max() > 1.1:
        warnings.warn(f"front at c={c} oscillates outside [-0.1, 1.1] "
                      f"(min {chi.min():.3g}, max {chi.max():.3g})", RuntimeWarning, stacklevel=2)

    # pin chi(0) = 1/2 by relabelling the nodes (translation of the converged solution)
    idx = int(np.argmax(chi < 0.5))
    X0 = X[idx - 1] + h * (chi[idx - 1] - 0.5) / (chi[idx - 1] - chi[idx])
    Xs = X - X0
    # tail fits over the outer quarter of the window, skipping the boundary layer
    # (the outermost fifth of that quarter) where the truncation bends the profile
    q, b = n_points // 4, n_points // 20
    sl, r2l = _fit_tail(Xs[b:q], 1.0 - chi[b:q])
    sr, r2r = _fit_tail(Xs[-q:-b], chi[-q:-b])
    rate_left = sl if sl > 0 else lam
    rate_right = -sr if sr < 0 else nu.real
    prof = EnvelopeProfile(c, chi, float(Xs[0]), float(h), 0.0, history[-1], rate_left,
                           rate_right, r2l, r2r, it)
    # exact pin through the interpolant (removes the linear-interpolation error)
    for _ in range(3):
        d = float(prof(np.array([0.0]))[0] - 0.5)
        slope = float(prof(np.array([0.0]), 1)[0])
        prof = EnvelopeProfile(c, chi, prof.x0 + d / slope, float(h), 0.0, history[-1],
                               rate_left, rate_right, r2l, r2r, it)
    log.debug("front c=%g converged in %d steps, residual %.3g", c, it, history[-1])
    return prof


def shift_envelope(profile: EnvelopeProfile, tau_x: float) -> EnvelopeProfile:
    """chi(. + tau_x): the same samples on nodes moved by -tau_x."""
    a, b = profile.window
    if not a < -tau_x < b:
        raise DomainError(f"shift {tau_x} moves the front outside the sampled window")
    return EnvelopeProfile(profile.c, profile.values, profile.x0 - tau_x, profile.h,
                           profile.shift + tau_x, profile.residual, profile.rate_left,
                           profile.rate_right, profile.r2_left, profile.r2_right,
                           profile.iterations)


def gamma3_norm(profile: EnvelopeProfile, eps: float, gamma: float, sign: int = 1,
                points_per_period: int = 32) -> float:
    """(int_0^inf chi^2(X) cos^2(X/eps + sign*gamma) dX)^(1/2) for the (shifted) profile."""
    a, b = profile.window
    if not a <= 0.0 <= b:
        raise DomainError("origin lies outside the sampled window")
    dX = 2 * np.pi * eps / points_per_period
    n = int(np.ceil(b / dX)) + 1
    X = np.linspace(0.0, b, n)
    f = profile(X) ** 2 * np.cos(X / eps + sign * gamma) ** 2
    integral = trapezoid(f, X)
    # tail beyond the window, averaged cos^2 = 1/2
    nu = profile.rate_right
    if nu > 0:
        integral += 0.25 * profile.values[-1] ** 2 / nu
    return float(np.sqrt(integral))
