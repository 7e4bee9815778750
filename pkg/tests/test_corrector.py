import math

import numpy as np
import pytest

from quenchroll.corrector import (QuenchConfig, bifurcation_residual, decay_check, default_grid,
                                  far_fixed_point, make_background, nonlinearity, quench_profile,
                                  total_nonlinearity)
from quenchroll.errors import ConfigError
from quenchroll.reduced import reduced_fixed_point
from quenchroll.spectral import GridSpec, SpectralField, project_near, sobolev_norm


@pytest.fixture(scope="module")
def cfg():
    return QuenchConfig(delta=0.05, grid=GridSpec.from_periods(32, 8192))


@pytest.fixture(scope="module")
def bg(cfg):
    return make_background(cfg)


@pytest.fixture(scope="module")
def solved(cfg, bg):
    return reduced_fixed_point(cfg, bg)


def test_config_validation():
    with pytest.raises(ConfigError):
        QuenchConfig(delta=0.3)
    with pytest.raises(ConfigError):
        QuenchConfig(delta=0.05, Omega=0.4)
    with pytest.raises(ConfigError):
        QuenchConfig(delta=0.05, tau=1.0)
    with pytest.raises(ConfigError):
        QuenchConfig(delta=0.05, beta=2.0)
    with pytest.raises(ConfigError):
        QuenchConfig(delta=0.05, method="bisection")


def test_quench_profile():
    np.testing.assert_array_equal(quench_profile(np.array([-1.0, 0.0, 1e-9])), [1, 1, -1])


def test_default_grid_scales_with_delta():
    g1, g2 = default_grid(0.05), default_grid(0.025)
    assert g2.half_length > 1.9 * g1.half_length
    assert g1.dx <= math.pi / 10 and g2.dx <= math.pi / 10


def test_background_forcing_vanishes_far_left_and_right(cfg, bg):
    x = cfg.grid.x
    left = x < -0.8 * cfg.grid.half_length
    right = x > 0.8 * cfg.grid.half_length
    assert np.max(np.abs(bg.forcing[left])) < 1e-3 * bg.eps
    assert np.max(np.abs(bg.forcing[right])) < 1e-3 * bg.eps


def _plateau(x, inner, outer):
    """C-infinity cutoff: 1 on |x| <= inner, 0 on |x| >= outer."""
    def h(t):
        return np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    t = (outer - np.abs(x)) / (outer - inner)
    return h(t) / (h(t) + h(1 - t))


def test_commutator_against_spectral_operator(cfg, bg):
    # [A, chi] u with A = (1 + d^2)^2 is local, so cutting chi off smoothly
    # away from the periodic seam leaves it unchanged where the cutoff is 1
    grid = cfg.grid
    L = grid.half_length
    psi = _plateau(grid.x, 0.6 * L, 0.9 * L)
    op = lambda f: SpectralField.from_samples(grid, f).apply_symbol((1 - grid.xi ** 2) ** 2).real  # noqa: E731
    comm = op(psi * bg.chi_u) - psi * bg.chi * op(bg.u)
    d2 = cfg.delta ** 2
    direct = bg.chi * (bg.chi ** 2 - 1) * bg.u ** 3 - d2 * bg.chi * (bg.mu - 1) * bg.u + comm
    inner = np.abs(grid.x) <= 0.6 * L
    assert np.max(np.abs(direct - bg.forcing)[inner]) < 1e-8 * bg.eps


def test_nonlinearity_terms_sum_to_total(cfg, bg):
    rng = np.random.default_rng(0)
    v = SpectralField.from_samples(cfg.grid, 1e-3 * rng.standard_normal(cfg.grid.n_points))
    total = sum(nonlinearity(j, v, cfg, bg).samples for j in range(1, 5))
    np.testing.assert_allclose(total, total_nonlinearity(v.samples, bg), atol=1e-15)
    with pytest.raises(ValueError):
        nonlinearity(5, v, cfg, bg)


def test_far_map_contracts(cfg, bg, solved):
    st = far_fixed_point(solved.v_near, cfg, bg)
    assert st.contraction_estimates and max(st.contraction_estimates) < 0.8
    assert st.iterations < 20


def test_corrector_is_real_and_near_dominated(solved):
    assert np.max(np.abs(solved.v.samples.imag)) < 1e-12
    assert sobolev_norm(solved.v_far, 4) < 0.01 * sobolev_norm(solved.v_near, 4)


def test_band_complementarity(cfg, bg, solved):
    np.testing.assert_allclose(project_near(solved.v_far, bg.band).coeffs, 0.0, atol=1e-15)
    np.testing.assert_allclose(project_near(solved.v_near, bg.band).coeffs,
                               solved.v_near.coeffs, atol=1e-15)


def test_corrector_solves_the_equation(cfg, bg, solved):
    assert bifurcation_residual(solved.v, cfg, bg) < 1e-9


def test_corrector_is_localised(cfg, solved):
    left, right = decay_check(solved.v)
    sup = np.max(np.abs(solved.v.real))
    assert left < 0.5 * sup and right < 0.5 * sup


def test_zero_delta_background():
    cfg0 = QuenchConfig(delta=0.0)
    bg0 = make_background(cfg0)
    assert bg0.eps == 0.0
    assert np.all(bg0.forcing == 0.0)
