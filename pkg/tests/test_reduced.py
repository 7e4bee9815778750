import math

import numpy as np
import pytest

from quenchroll.corrector import QuenchConfig, make_background
from quenchroll.errors import ConfigError, ConvergenceError, NonContractionError
from quenchroll.reduced import (ReducedSystem, _mirror, apply_R0, coercivity_constant,
                                find_envelope_shift, gamma_terms, h_star, r0_matrix,
                                reduced_fixed_point, solve_R0)
from quenchroll.spectral import GridSpec, SpectralField, UniformGrid


@pytest.fixture(scope="module")
def cfg():
    return QuenchConfig(delta=0.05, grid=GridSpec.from_periods(32, 8192))


@pytest.fixture(scope="module")
def system(cfg):
    return ReducedSystem(cfg, make_background(cfg))


@pytest.fixture(scope="module")
def solved(cfg, system):
    return reduced_fixed_point(cfg, system.bg, system)


def test_r0_fd_matches_spectral_on_smooth_data():
    sg = UniformGrid(40.0, 4096)
    X = sg.x
    gm = SpectralField.from_samples(sg, np.exp(-X ** 2 / 4)).coeffs
    gp = SpectralField.from_samples(sg, np.exp(-(X - 1) ** 2 / 4)).coeffs
    fd = apply_R0(gm, gp, sg, "fd")
    sp_ = apply_R0(gm, gp, sg, "spectral")
    # the mu jump makes the spectral product ring; compare away from X = 0
    a = SpectralField.from_coeffs(sg, fd[0], is_real=False).samples
    b = SpectralField.from_coeffs(sg, sp_[0], is_real=False).samples
    far = np.abs(X) > 5
    assert np.max(np.abs(a - b)[far]) < 1e-3


def test_r0_solve_inverts_matrix():
    sg = UniformGrid(20.0, 1024)
    rng = np.random.default_rng(0)
    rm = rng.standard_normal(1024) + 1j * rng.standard_normal(1024)
    rp = rng.standard_normal(1024)
    ym, yp = solve_R0(rm, rp, sg)
    back = r0_matrix(sg) @ np.concatenate([ym, yp])
    np.testing.assert_allclose(back, np.concatenate([rm, rp]), atol=1e-10)


def test_minus_r0_is_coercive():
    lam = coercivity_constant(UniformGrid(40.0, 2048))
    # bottom of the spectrum: -(4 d^2) >= 0, 3 pi - 3 pi / 2 - 1 from the block structure
    assert lam == pytest.approx(1.5 * math.pi - 1.0, rel=0.1)
    assert coercivity_constant(UniformGrid(40.0, 2048), "H1") > 0


def test_gamma_terms_shapes(cfg, system):
    G = gamma_terms(system.bg.envelope, system.eps, cfg.gamma, system.sgrid)
    assert set(G) == {"gamma1", "gamma2", "gamma3_plus", "gamma3_minus"}
    g1 = G["gamma1"].real
    assert np.max(g1) <= 1e-12 and np.min(g1) >= -0.4     # chi (chi^2 - 1) on [0, 1]


def test_h_star_ratio_guard(cfg, system):
    bad = cfg.with_(delta=0.2)
    with pytest.raises(ConfigError):
        h_star(system.bg.envelope, bad, 0.01, system.sgrid, system.band_mask)


def test_pack_roundtrip(system):
    rng = np.random.default_rng(3)
    n = system.grid.n_points
    gm = np.where(system.band_mask, rng.standard_normal(n) + 1j * rng.standard_normal(n), 0)
    gp = np.where(system.band_mask, rng.standard_normal(n) + 1j * rng.standard_normal(n), 0)
    a, b = system.unpack(system.pack(gm, gp))
    np.testing.assert_array_equal(a, gm)
    np.testing.assert_array_equal(b, gp)


def test_fixed_point_diagnostics(solved):
    d = solved.diagnostics
    assert d["final_update_h2"] < 1e-9
    assert d["leakage_before_truncation"] < 1e-10
    assert d["leakage_after_truncation"] == 0.0
    assert d["conjugation_defect"] < 1e-10
    assert d["self_consistency"] < 1e-10
    assert d["neumann_ratio"] < 1.0
    assert d["far_contraction"] < 0.8
    assert d["far_iterations"] > 1


def test_conjugation_symmetry(solved):
    np.testing.assert_allclose(solved.g_plus.coeffs, _mirror(solved.g_minus.coeffs), atol=1e-10)


def test_near_part_is_rebuilt_from_envelopes(system, solved):
    vn = system.v_near(solved.g_minus.coeffs, solved.g_plus.coeffs)
    np.testing.assert_allclose(vn.samples, solved.v_near.samples, atol=1e-15)


def test_split_inverts_v_near(system, solved):
    gm, gp = system.split(solved.v_near.coeffs)
    np.testing.assert_allclose(gm, solved.g_minus.coeffs, atol=1e-15)
    np.testing.assert_allclose(gp, solved.g_plus.coeffs, atol=1e-15)


def test_picard_and_newton_agree():
    # the literal map contracts slowly (ratio ~0.97 here, a nearly neutral phase mode)
    cfg = QuenchConfig(delta=0.02, grid=GridSpec.from_periods(32, 8192), max_reduced_iter=1500)
    bg = make_background(cfg)
    a = reduced_fixed_point(cfg, bg, method="picard", tol=1e-9)
    b = reduced_fixed_point(cfg, bg, method="newton-krylov")
    assert 0.9 < a.contraction_estimates[-1] < 1.0
    np.testing.assert_allclose(a.v.samples, b.v.samples, atol=1e-8)


def test_envelope_shift_search_reports_failure(cfg):
    with pytest.raises(ConvergenceError) as info:
        find_envelope_shift(cfg, 1e-12, max_shift=2.0, n_trials=3)
    assert len(info.value.diagnostics["scanned"]) == 3
