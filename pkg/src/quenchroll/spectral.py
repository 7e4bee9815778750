"""Uniform periodic grids, continuum-normalised Fourier transforms and band projections.

A function on the real line is represented by its samples on the box
``[-L, L)`` at ``x_j = -L + j*dx``.  Coefficients are stored in centred order,
``xi_k = k*dxi`` for ``k = -N/2 .. N/2-1``, and approximate the continuum
transform

    f_hat(xi) = int f(x) exp(-i x xi) dx,      f(x) = (1/2pi) int f_hat(xi) exp(i x xi) dxi

by the trapezoid rule.  With ``dxi = pi/L`` the discrete pair is an exact
inverse of itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "UniformGrid",
    "GridSpec",
    "SpectralField",
    "FrequencyBand",
    "forward_transform",
    "inverse_transform",
    "sobolev_norm",
    "sobolev_inner",
    "she_multiplier",
    "project_near",
    "project_far",
    "project_near_pm",
    "slow_grid",
    "extract_g",
    "assemble_vnear",
    "multiplier_floor",
    "save_field",
    "load_field",
]

CONVENTION = "continuum-dx"


@dataclass(frozen=True)
class UniformGrid:
    """Periodic box ``[-L, L)`` sampled at ``N`` equispaced points."""

    half_length: float
    n_points: int

    def __post_init__(self) -> None:
        if self.n_points < 2 or self.n_points % 2:
            raise ConfigError(f"point count must be even and >= 2, got {self.n_points}")
        if not self.half_length > 0:
            raise ConfigError(f"half length must be positive, got {self.half_length}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / self.n_points

    @property
    def dxi(self) -> float:
        return np.pi / self.half_length

    @property
    def x(self) -> np.ndarray:
        return -self.half_length + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Integer frequency labels in centred order."""
        return np.arange(-self.n_points // 2, self.n_points // 2)

    @property
    def xi(self) -> np.ndarray:
        return self.dxi * self.k

    @property
    def origin_index(self) -> int:
        """Index of the node at x = 0."""
        return self.n_points // 2


@dataclass(frozen=True)
class GridSpec(UniformGrid):
    """Fast grid: ``L`` is a whole number of 2*pi periods and dx < pi/8.

    The first condition puts the carriers ``xi = +-1`` exactly on the
    frequency lattice (bin ``+-L/pi``) and lets 2*pi-periodic rolls close
    across the box.
    """

    def __post_init__(self) -> None:
        super().__post_init__()
        periods = self.half_length / (2.0 * np.pi)
        if abs(periods - round(periods)) > 1e-9 * max(1.0, periods) or round(periods) < 1:
            raise ConfigError(f"L/(2 pi) must be a positive integer, got {periods:.12g}")
        if not self.dx < np.pi / 8:
            raise ConfigError(f"dx = {self.dx:.4g} must be below pi/8 (16 points per roll)")

    @classmethod
    def from_periods(cls, periods: int, n_points: int) -> "GridSpec":
        """Box with ``L = 2*pi*periods``."""
        return cls(2.0 * np.pi * periods, n_points)

    @property
    def carrier_bin(self) -> int:
        """Index offset between xi = 0 and xi = 1."""
        return int(round(self.half_length / np.pi))


def _signs(grid: UniformGrid) -> np.ndarray:
    # exp(i xi_k L) = (-1)^k
    return np.where(grid.k % 2 == 0, 1.0, -1.0)


def _dft(grid: UniformGrid, samples: np.ndarray) -> np.ndarray:
    return grid.dx * _signs(grid) * np.fft.fftshift(np.fft.fft(samples))


def _idft(grid: UniformGrid, coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.fft.ifftshift(_signs(grid) * coeffs)) / grid.dx


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Samples and coefficients of one function on a :class:`UniformGrid`.

    Build with :meth:`from_samples` or :meth:`from_coeffs`; the other
    representation is computed eagerly so both are always consistent.
    """

    grid: UniformGrid
    samples: np.ndarray
    coeffs: np.ndarray
    is_real: bool = False

    @classmethod
    def from_samples(cls, grid: UniformGrid, samples, is_real: bool | None = None) -> "SpectralField":
        s = np.asarray(samples)
        if s.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} samples, got shape {s.shape}")
        if is_real is None:
            is_real = not np.iscomplexobj(s) or not np.any(s.imag)
        s = s.astype(complex)
        if is_real:
            s = s.real.astype(complex)
        return cls(grid, s, _dft(grid, s), bool(is_real))

    @classmethod
    def from_coeffs(cls, grid: UniformGrid, coeffs, is_real: bool | None = None) -> "SpectralField":
        c = np.asarray(coeffs, dtype=complex)
        if c.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} coefficients, got shape {c.shape}")
        s = _idft(grid, c)
        if is_real is None:
            scale = np.max(np.abs(s), initial=0.0)
            is_real = bool(np.max(np.abs(s.imag), initial=0.0) <= 1e-13 * max(scale, 1e-300))
        if is_real:
            s = s.real.astype(complex)
        return cls(grid, s, c, bool(is_real))

    @classmethod
    def zeros(cls, grid: UniformGrid) -> "SpectralField":
        z = np.zeros(grid.n_points, dtype=complex)
        return cls(grid, z, z.copy(), True)

    @property
    def real(self) -> np.ndarray:
        return self.samples.real

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return SpectralField(self.grid, self.samples + other.samples, self.coeffs + other.coeffs,
                             self.is_real and other.is_real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return SpectralField(self.grid, self.samples - other.samples, self.coeffs - other.coeffs,
                             self.is_real and other.is_real)

    def scale(self, a: complex) -> "SpectralField":
        real = self.is_real and np.isreal(a)
        return SpectralField(self.grid, a * self.samples, a * self.coeffs, bool(real))

    def derivative(self, order: int = 1) -> "SpectralField":
        """Spectral derivative; the unpaired Nyquist bin is dropped for odd orders."""
        sym = (1j * self.grid.xi) ** order
        if order % 2:
            sym[0] = 0.0
        return SpectralField.from_coeffs(self.grid, sym * self.coeffs, is_real=self.is_real)

    def apply_symbol(self, symbol: np.ndarray) -> "SpectralField":
        return SpectralField.from_coeffs(self.grid, symbol * self.coeffs)

    def at_origin(self) -> complex:
        return complex(self.samples[self.grid.origin_index])

    def l2_norm(self) -> float:
        """Continuum L2 norm sqrt(int |f|^2 dx) by the trapezoid rule."""
        return float(np.sqrt(self.grid.dx * np.sum(np.abs(self.samples) ** 2)))


def _same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def forward_transform(field: SpectralField) -> np.ndarray:
    """Continuum-normalised coefficients ``dx * sum_j f(x_j) exp(-i xi_k x_j)``."""
    return _dft(field.grid, field.samples)


def inverse_transform(grid: UniformGrid, coeffs: np.ndarray) -> np.ndarray:
    """Samples ``(dxi/2pi) * sum_k c_k exp(i xi_k x_j)``."""
    return _idft(grid, np.asarray(coeffs, dtype=complex))


def sobolev_inner(f: SpectralField, g: SpectralField, s: float) -> complex:
    _same_grid(f, g)
    w = (1.0 + f.grid.xi ** 2) ** s
    return complex(np.sum(w * f.coeffs * np.conj(g.coeffs)) * f.grid.dxi)


def sobolev_norm(field: SpectralField, s: float) -> float:
    """``(sum_k (1+xi_k^2)^s |c_k|^2 dxi)^(1/2)``; equals sqrt(2 pi) ||f||_L2 at s = 0."""
    if s < 0:
        raise ValueError("Sobolev index must be non-negative")
    w = (1.0 + field.grid.xi ** 2) ** s
    return float(np.sqrt(np.sum(w * np.abs(field.coeffs) ** 2) * field.grid.dxi))


def she_multiplier(kappa, omega: float):
    """Fourier symbol of -(1 + omega^2 d^2)^2, i.e. -(1 - omega^2 kappa^2)^2."""
    kappa = np.asarray(kappa, dtype=float)
    out = -(1.0 - omega ** 2 * kappa ** 2) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FrequencyBand:
    """Union of closed intervals ``|xi - c| <= radius`` around each centre."""

    centers: tuple[float, ...] = (-1.0, 1.0)
    radius: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        if not self.radius > 0:
            raise ConfigError("band radius must be positive")
        cs = sorted(self.centers)
        gaps = np.diff(cs)
        if len(gaps) and np.min(gaps) <= 2.0 * self.radius:
            raise ConfigError(
                f"bands of radius {self.radius:.4g} around {cs} overlap")

    @classmethod
    def carriers(cls, eps: float, tau: float) -> "FrequencyBand":
        """Near band of radius eps**tau around the carriers +-1."""
        return cls((-1.0, 1.0), eps ** tau)

    def mask(self, xi: np.ndarray) -> np.ndarray:
        tol = 1e-12 * max(1.0, self.radius)
        m = np.zeros(np.shape(xi), dtype=bool)
        for c in self.centers:
            m |= np.abs(xi - c) <= self.radius + tol
        return m


def project_near(field: SpectralField, band: FrequencyBand) -> SpectralField:
    m = band.mask(field.grid.xi)
    return SpectralField.from_coeffs(field.grid, np.where(m, field.coeffs, 0.0), is_real=field.is_real)


def project_far(field: SpectralField, band: FrequencyBand) -> SpectralField:
    m = band.mask(field.grid.xi)
    return SpectralField.from_coeffs(field.grid, np.where(m, 0.0, field.coeffs), is_real=field.is_real)


def _recentre(coeffs: np.ndarray, shift: int) -> np.ndarray:
    """out[k] = coeffs[k + shift] with zero fill (no wrap-around)."""
    out = np.zeros_like(coeffs)
    n = len(coeffs)
    if shift >= 0:
        out[: n - shift] = coeffs[shift:]
    else:
        out[-shift:] = coeffs[: n + shift]
    return out


def _carrier_shift(grid: UniformGrid) -> int:
    q = grid.half_length / np.pi
    if abs(q - round(q)) > 1e-9 * max(q, 1.0):
        raise ConfigError("carriers +-1 are not on the frequency grid")
    return int(round(q))


def project_near_pm(field: SpectralField, band: FrequencyBand, sign: int) -> SpectralField:
    """Recentred projection: output(xi) = 1_{|xi|<=r} coeff(sign*1 + xi)."""
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    k1 = _carrier_shift(field.grid)
    c = _recentre(field.coeffs, sign * k1)
    c = np.where(np.abs(field.grid.xi) <= band.radius * (1 + 1e-12), c, 0.0)
    return SpectralField.from_coeffs(field.grid, c, is_real=False)


def slow_grid(grid: UniformGrid, eps: float) -> UniformGrid:
    """Grid of the blow-up variable X = eps*x: same N, half-length eps*L.

    Slow bin j corresponds to fast bin (+-L/pi) + j, so xi_fast = +-1 + eps*xi_slow.
    """
    if not eps > 0:
        raise DomainError("slow grid needs eps > 0")
    return UniformGrid(eps * grid.half_length, grid.n_points)


def extract_g(v_near: SpectralField, eps: float, band: FrequencyBand,
              tol: float = 1e-10) -> tuple[SpectralField, SpectralField]:
    """Envelopes (g_-, g_+) with v_near(x) = eps e^{ix} g_+(eps x) + eps e^{-ix} g_-(eps x)."""
    outside = np.where(band.mask(v_near.grid.xi), 0.0, v_near.coeffs)
    total = np.linalg.norm(v_near.coeffs)
    if np.linalg.norm(outside) > tol * max(total, 1e-300):
        raise DomainError("field has energy outside the near band")
    sg = slow_grid(v_near.grid, eps)
    gm = project_near_pm(v_near, band, -1)
    gp = project_near_pm(v_near, band, +1)
    return (SpectralField.from_coeffs(sg, gm.coeffs, is_real=False),
            SpectralField.from_coeffs(sg, gp.coeffs, is_real=False))


def assemble_vnear(g_minus: SpectralField, g_plus: SpectralField, eps: float,
                   grid: UniformGrid) -> SpectralField:
    """Inverse of :func:`extract_g` on the fast grid ``grid``."""
    k1 = _carrier_shift(grid)
    c = _recentre(g_plus.coeffs, -k1) + _recentre(g_minus.coeffs, k1)
    return SpectralField.from_coeffs(grid, c)


def multiplier_floor(band: FrequencyBand, omega: float, tau: float, eps: float,
                     grid: UniformGrid, C: float = 0.5) -> tuple[float, bool]:
    """Smallest |m| over the far frequencies of ``grid`` and whether it beats C*eps^(2 tau)."""
    xi = grid.xi
    far = ~band.mask(xi)
    if not np.any(far):
        raise DomainError("far region is empty on this grid")
    # zeros of the multiplier must sit inside the near band
    for root in (-1.0 / omega, 1.0 / omega):
        if not band.mask(np.array([root]))[0]:
            raise DomainError(f"multiplier zero {root:.6g} lies in the far region")
    measured = float(np.min(np.abs(she_multiplier(xi[far], omega))))
    return measured, bool(measured >= C * eps ** (2 * tau))


def save_field(field: SpectralField, path: str | Path, eps: float | None = None,
               tau: float | None = None, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``path`` (CSV: x, re, im) and ``path.json`` (grid and convention)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([field.grid.x, field.samples.real, field.samples.imag])
    np.savetxt(path, data, delimiter=",", header="x,re,im", comments="", fmt="%.17g")
    meta = {"L": field.grid.half_length, "N": field.grid.n_points,
            "convention": CONVENTION, "eps": eps, "tau": tau}
    if extra:
        meta.update(extra)
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2))
    return path, side


def load_field(path: str | Path) -> tuple[SpectralField, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if meta.get("convention") != CONVENTION:
        raise ConfigError(f"unknown transform convention {meta.get('convention')!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = UniformGrid(float(meta["L"]), int(meta["N"]))
    try:
        grid = GridSpec(grid.half_length, grid.n_points)
    except ConfigError:
        pass
    return SpectralField.from_samples(grid, data[:, 1] + 1j * data[:, 2]), meta
