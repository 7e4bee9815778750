"""Reduced (near-band) equation for the slow envelopes g_- and g_+.

With v_near(x) = eps e^{ix} g_+(eps x) + eps e^{-ix} g_-(eps x), the near part
of the corrector equation, divided by eps^2 and written in the blow-up
frequency xi = (kappa -+ 1)/eps, reads

    F_exact(g)_{+-}(xi) = eps^-2 [ m(+-1 + eps xi) g_hat_{+-}(xi) - N_hat(+-1 + eps xi) ] = 0

on the band |xi| <= eps^(tau - 1), where N is the full nonlinearity evaluated at
v_near(g) + v_far(v_near(g)).  The model operator

    R g_{+-} = -4 xi^2 g_{+-} - 1_band [3 pi g_{+-} + (3 pi/2) g_{-+} - F[mu g_{+-}]]

and the forcing h_* collect the leading terms; the remainder is carried as
the exact bookkeeping difference Q = R g - 1_band h_* - F_exact(g), so the
fixed point does not depend on how accurate R and h_* are.  The operator
R0 (R without the band indicator) is discretised by finite differences and
used as the preconditioner of the iteration.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, gmres, splu

from .corrector import (Background, CorrectorState, QuenchConfig, far_fixed_point,
                        make_background, quench_profile, total_nonlinearity)
from .envelope import EnvelopeProfile
from .errors import ConfigError, ConvergenceError, NonContractionError
from .spectral import FrequencyBand, SpectralField, UniformGrid, _recentre, slow_grid

__all__ = [
    "ReducedSystem",
    "gamma_terms",
    "h_star",
    "apply_R",
    "apply_R0",
    "r0_matrix",
    "solve_R0",
    "coercivity_constant",
    "reduced_fixed_point",
    "find_envelope_shift",
]

log = logging.getLogger(__name__)

PI = math.pi


def gamma_terms(envelope: EnvelopeProfile, eps: float, gamma: float,
                sgrid: UniformGrid) -> dict[str, SpectralField]:
    """Slow-grid transforms of chi(chi^2-1), chi'' and 1_{X>=0} chi e^{-iX/eps} cos(X/eps +- gamma)."""
    X = sgrid.x
    chi = envelope(X)
    g1 = SpectralField.from_samples(sgrid, chi * (chi ** 2 - 1))
    g2 = SpectralField.from_samples(sgrid, envelope(X, 2))
    step = np.where(X >= 0.0, 1.0, 0.0)
    carrier = np.exp(-1j * X / eps)
    g3p = SpectralField.from_samples(sgrid, step * chi * carrier * np.cos(X / eps + gamma))
    g3m = SpectralField.from_samples(sgrid, step * chi * carrier * np.cos(X / eps - gamma))
    return {"gamma1": g1, "gamma2": g2, "gamma3_plus": g3p, "gamma3_minus": g3m}


def h_star(envelope: EnvelopeProfile, cfg: QuenchConfig, eps: float, sgrid: UniformGrid,
           band_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Band-limited forcing pair (h_-, h_+) and its coefficient-space L2 norm."""
    ratio = cfg.delta ** 2 / eps ** 2
    if not 1.0 / 16.0 <= ratio <= 16.0:
        raise ConfigError(f"delta^2/eps^2 = {ratio:.4g} outside [1/16, 16]")
    G = gamma_terms(envelope, eps, cfg.gamma, sgrid)
    base = 0.75 * PI * G["gamma1"].coeffs - 4 * PI * G["gamma2"].coeffs
    e = np.exp(1j * cfg.gamma)
    hp = e * base - 2 * ratio * G["gamma3_plus"].coeffs
    hm = np.conj(e) * base - 2 * ratio * G["gamma3_minus"].coeffs
    hp = np.where(band_mask, hp, 0.0)
    hm = np.where(band_mask, hm, 0.0)
    norm = float(np.sqrt((np.sum(np.abs(hp) ** 2) + np.sum(np.abs(hm) ** 2)) * sgrid.dxi))
    return hm, hp, norm


def _mu_transform(sgrid: UniformGrid, coeffs: np.ndarray) -> np.ndarray:
    g = SpectralField.from_coeffs(sgrid, coeffs, is_real=False)
    return SpectralField.from_samples(sgrid, quench_profile(sgrid.x) * g.samples,
                                      is_real=False).coeffs


def apply_R(gm: np.ndarray, gp: np.ndarray, sgrid: UniformGrid,
            band_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Model operator with the band indicator on the zeroth-order part."""
    xi2 = sgrid.xi ** 2
    out = []
    for a, b in ((gm, gp), (gp, gm)):
        inner = 3 * PI * a + 1.5 * PI * b - _mu_transform(sgrid, a)
        out.append(-4 * xi2 * a - np.where(band_mask, inner, 0.0))
    return out[0], out[1]


def r0_matrix(sgrid: UniformGrid) -> sp.csc_matrix:
    """Finite-difference matrix of (4 d^2 - 3 pi + mu) g_{+-} - (3 pi/2) g_{-+} (periodic)."""
    n = sgrid.n_points
    H = sgrid.dx
    e = np.ones(n)
    D2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
    D2[0, n - 1] = 1.0
    D2[n - 1, 0] = 1.0
    D2 = D2.tocsc() / H ** 2
    A = 4 * D2 + sp.diags(-3 * PI + quench_profile(sgrid.x))
    C = -1.5 * PI * sp.identity(n)
    return sp.bmat([[A, C], [C, A]], format="csc")


def apply_R0(gm: np.ndarray, gp: np.ndarray, sgrid: UniformGrid,
             discretization: str = "fd") -> tuple[np.ndarray, np.ndarray]:
    """R0 on coefficient pairs, either spectrally or through the difference matrix."""
    if discretization == "spectral":
        xi2 = sgrid.xi ** 2
        return tuple(-4 * xi2 * a - 3 * PI * a - 1.5 * PI * b + _mu_transform(sgrid, a)
                     for a, b in ((gm, gp), (gp, gm)))
    if discretization != "fd":
        raise ValueError("discretization must be 'fd' or 'spectral'")
    sm = SpectralField.from_coeffs(sgrid, gm, is_real=False).samples
    spl = SpectralField.from_coeffs(sgrid, gp, is_real=False).samples
    y = r0_matrix(sgrid) @ np.concatenate([sm, spl])
    n = sgrid.n_points
    return (SpectralField.from_samples(sgrid, y[:n], is_real=False).coeffs,
            SpectralField.from_samples(sgrid, y[n:], is_real=False).coeffs)


class _R0Solver:
    def __init__(self, sgrid: UniformGrid):
        self.sgrid = sgrid
        self.matrix = r0_matrix(sgrid)
        self.lu = splu(self.matrix)

    def samples(self, rm: np.ndarray, rp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.sgrid.n_points
        b = np.concatenate([rm, rp]).astype(complex)
        y = self.lu.solve(np.ascontiguousarray(b.real)) + 1j * self.lu.solve(np.ascontiguousarray(b.imag))
        if not np.all(np.isfinite(y)):
            raise ConvergenceError("singular R0 discretisation", stage="reduced")
        return y[:n], y[n:]

    def coeffs(self, cm: np.ndarray, cp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.sgrid
        sm = SpectralField.from_coeffs(g, cm, is_real=False).samples
        spl = SpectralField.from_coeffs(g, cp, is_real=False).samples
        ym, yp = self.samples(sm, spl)
        return (SpectralField.from_samples(g, ym, is_real=False).coeffs,
                SpectralField.from_samples(g, yp, is_real=False).coeffs)


def solve_R0(rhs_minus: np.ndarray, rhs_plus: np.ndarray,
             sgrid: UniformGrid) -> tuple[np.ndarray, np.ndarray]:
    """Direct sparse solve of the R0 system for right-hand sides given as slow-grid samples."""
    return _R0Solver(sgrid).samples(np.asarray(rhs_minus), np.asarray(rhs_plus))


def coercivity_constant(sgrid: UniformGrid, norm: str = "L2") -> float:
    """Smallest eigenvalue of -R0 (symmetric) relative to the L2 or H1 Gram matrix."""
    A = -r0_matrix(sgrid)
    A = 0.5 * (A + A.T)
    if norm == "L2":
        M = None
    elif norm == "H1":
        n = sgrid.n_points
        e = np.ones(n)
        D2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
        D2[0, n - 1] = 1.0
        D2[n - 1, 0] = 1.0
        G = sp.identity(n) - D2.tocsc() / sgrid.dx ** 2
        M = sp.block_diag([G, G], format="csc")
    else:
        raise ValueError("norm must be 'L2' or 'H1'")
    vals = eigsh(A.tocsc(), k=1, M=M, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(np.min(vals))


@dataclass
class _Eval:
    em: np.ndarray
    ep: np.ndarray
    v_near: SpectralField
    v_far: SpectralField
    far_iterations: int
    far_ratios: list


class ReducedSystem:
    """Reduced near-band problem for one configuration."""

    def __init__(self, cfg: QuenchConfig, bg: Background | None = None):
        self.cfg = cfg
        self.bg = bg if bg is not None else make_background(cfg)
        if self.bg.eps <= 0:
            raise ConfigError("the reduced system needs eps > 0")
        self.eps = self.bg.eps
        grid = cfg.grid
        self.grid = grid
        self.sgrid = slow_grid(grid, self.eps)
        self.k1 = grid.carrier_bin
        plus_band = FrequencyBand((1.0,), self.bg.band.radius)
        # slow bin j <-> fast bin k1 + j; the band is symmetric so this also serves -1
        self.band_mask = _recentre(plus_band.mask(grid.xi).astype(complex), self.k1).real > 0.5
        self.idx = np.flatnonzero(self.band_mask)
        self.h_minus, self.h_plus, self.h_norm = h_star(self.bg.envelope, cfg, self.eps,
                                                        self.sgrid, self.band_mask)
        self.r0 = _R0Solver(self.sgrid)
        self._far_cache: SpectralField | None = None
        self.far_tol = min(cfg.fixed_point_tol, 1e-13)
        self.evaluations = 0

    # -- packing ---------------------------------------------------------
    def pack(self, gm: np.ndarray, gp: np.ndarray) -> np.ndarray:
        a, b = gm[self.idx], gp[self.idx]
        return np.concatenate([a.real, a.imag, b.real, b.imag])

    def unpack(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.idx)
        gm = np.zeros(self.grid.n_points, dtype=complex)
        gp = np.zeros(self.grid.n_points, dtype=complex)
        gm[self.idx] = y[:n] + 1j * y[n:2 * n]
        gp[self.idx] = y[2 * n:3 * n] + 1j * y[3 * n:]
        return gm, gp

    def h2_norm(self, gm: np.ndarray, gp: np.ndarray) -> float:
        w = (1 + self.sgrid.xi ** 2) ** 2 * self.sgrid.dxi
        return float(np.sqrt(np.sum(w * (np.abs(gm) ** 2 + np.abs(gp) ** 2))))

    # -- fields ----------------------------------------------------------
    def v_near(self, gm: np.ndarray, gp: np.ndarray) -> SpectralField:
        c = _recentre(gp, -self.k1) + _recentre(gm, self.k1)
        return SpectralField.from_coeffs(self.grid, c)

    def split(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Recentred band parts (minus, plus) of fast-grid coefficients."""
        return (np.where(self.band_mask, _recentre(coeffs, -self.k1), 0.0),
                np.where(self.band_mask, _recentre(coeffs, self.k1), 0.0))

    def evaluate(self, gm: np.ndarray, gp: np.ndarray, warm: bool = True) -> _Eval:
        """Exact near-band residual F_exact(g) with the far component slaved to v_near."""
        self.evaluations += 1
        vn = self.v_near(gm, gp)
        st = far_fixed_point(vn, self.cfg, self.bg, self._far_cache if warm else None,
                             tol=self.far_tol)
        self._far_cache = st.v_far
        v = vn.samples + st.v_far.samples
        N = SpectralField.from_samples(self.grid, total_nonlinearity(v, self.bg),
                                       is_real=False).coeffs
        E = self.bg.multiplier * vn.coeffs - N
        em, ep = self.split(E)
        return _Eval(em / self.eps ** 2, ep / self.eps ** 2, vn, st.v_far, st.iterations,
                     st.contraction_estimates)

    def q_term(self, gm, gp, ev: _Eval) -> tuple[np.ndarray, np.ndarray]:
        """Q = R g - 1_band h_* - F_exact(g)."""
        rm, rp = apply_R(gm, gp, self.sgrid, self.band_mask)
        return rm - self.h_minus - ev.em, rp - self.h_plus - ev.ep

    def picard_update(self, gm, gp, ev: _Eval):
        """g <- R0^{-1}[(R0 - R) g + 1 h_* + Q(g)]; returns (truncated pair, leakage)."""
        r0m, r0p = apply_R0(gm, gp, self.sgrid, "fd")
        rm, rp = apply_R(gm, gp, self.sgrid, self.band_mask)
        qm, qp = self.q_term(gm, gp, ev)
        nm, np_ = self.r0.coeffs(r0m - rm + self.h_minus + qm, r0p - rp + self.h_plus + qp)
        out = ~self.band_mask
        total = math.sqrt(np.sum(np.abs(nm) ** 2) + np.sum(np.abs(np_) ** 2))
        leak = math.sqrt(np.sum(np.abs(nm[out]) ** 2) + np.sum(np.abs(np_[out]) ** 2))
        return (np.where(self.band_mask, nm, 0.0), np.where(self.band_mask, np_, 0.0),
                leak, total)

    def preconditioned(self, y: np.ndarray) -> np.ndarray:
        """Band part of R0^{-1} F_exact(g): the negative Picard increment."""
        gm, gp = self.unpack(y)
        ev = self.evaluate(gm, gp)
        dm, dp = self.r0.coeffs(ev.em, ev.ep)
        return self.pack(dm, dp)

    def neumann_ratio(self, gm, gp) -> float:
        """||R0^{-1}(R - R0) g||_H2 / ||g||_H2."""
        rm, rp = apply_R(gm, gp, self.sgrid, self.band_mask)
        r0m, r0p = apply_R0(gm, gp, self.sgrid, "fd")
        dm, dp = self.r0.coeffs(rm - r0m, rp - r0p)
        den = self.h2_norm(gm, gp)
        return self.h2_norm(dm, dp) / den if den > 0 else 0.0


def _newton_krylov(system: ReducedSystem, y0: np.ndarray, tol: float, max_iter: int,
                   history: list) -> np.ndarray:
    y = y0.copy()
    G = system.preconditioned(y)
    for it in range(max_iter):
        gm, gp = system.unpack(G)
        res = system.h2_norm(gm, gp)
        history.append(res)
        if res < tol:
            return y
        ny = np.linalg.norm(y)
        cache = system._far_cache

        def jv(v, G=G, y=y, ny=ny):
            nv = np.linalg.norm(v)
            if nv == 0:
                return np.zeros_like(v)
            h = 1e-7 * (1.0 + ny) / nv
            out = (system.preconditioned(y + h * v) - G) / h
            system._far_cache = cache
            return out

        J = LinearOperator((len(y), len(y)), matvec=jv, dtype=float)
        step, info = gmres(J, -G, rtol=min(1e-3, max(1e-10, 0.1 * res)), atol=0.0,
                           restart=60, maxiter=4)
        t = 1.0
        while True:
            y_new = y + t * step
            G_new = system.preconditioned(y_new)
            nm, np_ = system.unpack(G_new)
            if system.h2_norm(nm, np_) < (1 - 0.1 * t) * res or t < 1.0 / 64:
                break
            system._far_cache = cache
            t *= 0.5
        y, G = y_new, G_new
    raise ConvergenceError("reduced Newton-Krylov iteration did not converge", stage="reduced",
                           diagnostics={"history": history})


def reduced_fixed_point(cfg: QuenchConfig, bg: Background | None = None,
                        system: ReducedSystem | None = None, g0=None,
                        method: str | None = None, tol: float | None = None,
                        max_iter: int | None = None) -> CorrectorState:
    """Solve the reduced equation for (g_-, g_+); far component slaved by Picard.

    ``method="picard"`` runs the preconditioned fixed-point map literally and
    stops at ||Delta g||_H2 < tol; ``method="newton-krylov"`` solves the same
    fixed-point equation g = g - R0^{-1} F_exact(g) by Newton-GMRES, which is
    needed when the map contracts only slowly (nearly neutral phase mode on
    long boxes).  Both finish with one literal map application whose update
    size, leakage and contraction are reported.
    """
    system = system if system is not None else ReducedSystem(cfg, bg)
    method = method or cfg.method
    tol = cfg.newton_tol if tol is None else tol
    max_iter = max_iter if max_iter is not None else cfg.max_reduced_iter
    n = system.grid.n_points
    if g0 is None:
        gm = np.zeros(n, dtype=complex)
        gp = np.zeros(n, dtype=complex)
    else:
        gm = np.where(system.band_mask, g0[0], 0.0)
        gp = np.where(system.band_mask, g0[1], 0.0)
    history: list[float] = []
    ratios: list[float] = []
    if method == "newton-krylov":
        y = _newton_krylov(system, system.pack(gm, gp), tol, max_iter, history)
        gm, gp = system.unpack(y)
    prev = None
    bad = 0
    leak = total = 0.0
    for k in range(max_iter + 1):
        ev = system.evaluate(gm, gp)
        nm, np_, leak, total = system.picard_update(gm, gp, ev)
        d = system.h2_norm(nm - gm, np_ - gp)
        if prev:
            ratios.append(d / prev)
            bad = bad + 1 if ratios[-1] >= 1.0 else 0
        history.append(d)
        if method == "newton-krylov" or d < tol:
            # report the map at the converged point; keep the input g, which
            # satisfies the equation to the reported accuracy
            if method == "picard":
                gm, gp = nm, np_
            break
        if bad >= 3:
            raise NonContractionError("reduced map does not contract; try a smaller delta, a "
                                      "shifted envelope or method='newton-krylov'",
                                      stage="reduced", diagnostics={"ratios": ratios})
        gm, gp = nm, np_
        prev = d
    else:
        raise NonContractionError("reduced map did not reach tolerance", stage="reduced",
                                  diagnostics={"ratios": ratios[-10:], "last": history[-1]})
    ev = system.evaluate(gm, gp, warm=False)  # cold start: measure the far contraction
    sg = system.sgrid
    g_minus = SpectralField.from_coeffs(sg, gm, is_real=False)
    g_plus = SpectralField.from_coeffs(sg, gp, is_real=False)
    qm, qp = system.q_term(gm, gp, ev)
    rm, rp = apply_R(gm, gp, sg, system.band_mask)
    diag = {
        "method": method,
        "h_star_norm": system.h_norm,
        "final_update_h2": history[-1],
        "residual_history": history,
        "leakage_before_truncation": leak / total if total > 0 else 0.0,
        "leakage_after_truncation": float(np.max(np.abs(gm[~system.band_mask]), initial=0.0)
                                          + np.max(np.abs(gp[~system.band_mask]), initial=0.0)),
        "neumann_ratio": system.neumann_ratio(gm, gp),
        "reduced_residual_h2": system.h2_norm(ev.em, ev.ep),
        "self_consistency": system.h2_norm(rm - system.h_minus - qm - ev.em,
                                           rp - system.h_plus - qp - ev.ep),
        "far_iterations": ev.far_iterations,
        "far_contraction": max(ev.far_ratios) if ev.far_ratios else 0.0,
        "conjugation_defect": float(np.max(np.abs(gp - _mirror(gm)), initial=0.0)),
        "band_size": int(len(system.idx)),
        "evaluations": system.evaluations,
    }
    v_near = ev.v_near
    v_far = ev.v_far
    return CorrectorState(g_minus, g_plus, v_near, v_far, len(history), ratios, diag)


def _mirror(c: np.ndarray) -> np.ndarray:
    """Coefficients of conj(g) given those of g: conj(c(-xi)), i.e. index k <-> -k."""
    out = np.zeros_like(c)
    out[1:] = c[1:][::-1]
    out[0] = c[0]
    return np.conj(out)


def find_envelope_shift(cfg: QuenchConfig, target: float, max_shift: float | None = None,
                        n_trials: int = 41) -> tuple[float, float]:
    """Smallest envelope shift tau_x in [0, max_shift] with ||h_*|| <= target.

    Scans an even grid of shifts and returns (tau_x, ||h_*||).  Raises
    :class:`ConvergenceError` with the scanned norms if no shift reaches the target.
    """
    max_shift = cfg.envelope_S / 2 if max_shift is None else max_shift
    scanned = []
    for tx in np.linspace(0.0, max_shift, n_trials):
        c = cfg.with_(envelope_shift=float(tx))
        bg = make_background(c)
        norm = ReducedSystem(c, bg).h_norm
        scanned.append((float(tx), norm))
        if norm <= target:
            return float(tx), norm
    raise ConvergenceError(f"no envelope shift up to {max_shift:g} brings ||h_*|| below {target:g}",
                           stage="reduced", diagnostics={"scanned": scanned})
