import math

import numpy as np
import pytest

from quenchroll.errors import DomainError
from quenchroll.rolls import (delta_of, eps_of, hamiltonian_of_rolls, hamiltonian_right,
                              leading_amplitude, omega_of, solve_rolls)
from quenchroll.selection import jump_expansion


@pytest.mark.parametrize("delta", [0.01, 0.05, 0.15])
def test_residual_and_amplitude(delta):
    r = solve_rolls(delta, 0.0, 0.0)
    assert r.residual < 1e-12
    assert r.ode_residual() < 1e-12
    assert r.eps == pytest.approx(leading_amplitude(delta, 0.0), rel=2 * delta ** 2)


def test_zero_delta_gives_zero_profile():
    r = solve_rolls(0.0, 0.1, 0.3)
    assert r.eps == 0.0
    assert np.all(r.evaluate(np.linspace(0, 6, 7)) == 0.0)


def test_only_odd_harmonics():
    r = solve_rolls(0.1, 0.05, 0.0)
    even = np.abs(r.modes[::2])
    assert np.max(even) < 1e-15


def test_phase_equivariance():
    a = solve_rolls(0.05, 0.1, 0.0)
    b = solve_rolls(0.05, 0.1, 0.7)
    x = np.linspace(0, 2 * math.pi, 64)
    np.testing.assert_allclose(b.evaluate(x), a.evaluate(x + 0.7), atol=1e-14)
    assert np.angle(b.modes[1]) == pytest.approx(0.7)


def test_reflection_symmetry():
    r = solve_rolls(0.05, -0.1, 0.0)
    x = np.linspace(0, 2 * math.pi, 33)
    np.testing.assert_allclose(r.evaluate(x), r.evaluate(-x), atol=1e-15)


def test_wavenumber():
    assert omega_of(0.04, 0.25) == pytest.approx(math.sqrt(1.01))
    assert solve_rolls(0.04, 0.25, 0.0).omega == pytest.approx(math.sqrt(1.01))


def test_window_enforced():
    with pytest.raises(DomainError):
        solve_rolls(0.3, 0.0, 0.0)
    with pytest.raises(DomainError):
        solve_rolls(0.05, 0.34, 0.0)


def test_delta_of_inverts_eps_of():
    for Om in (0.0, 0.2):
        d = 0.037
        assert delta_of(eps_of(d, Om), Om) == pytest.approx(d, rel=1e-12)


def test_hamiltonian_is_conserved_along_the_profile():
    r = solve_rolls(0.1, 0.2, 0.4)
    H, dev = hamiltonian_of_rolls(r)
    assert dev / abs(H) < 1e-12


def test_hamiltonian_of_zero_state():
    assert hamiltonian_right(0.0) == 0.25
    r = solve_rolls(0.0, 0.0, 0.0)
    assert hamiltonian_of_rolls(r)[0] == pytest.approx(hamiltonian_right(0.0))


@pytest.mark.parametrize("Omega", [-0.2, 0.0, 0.1, 0.3])
def test_hamiltonian_jump_expansion(Omega):
    delta = 0.02
    r = solve_rolls(delta, Omega, 0.0)
    jump = hamiltonian_of_rolls(r)[0] - hamiltonian_right(delta)
    assert jump == pytest.approx(jump_expansion(delta, Omega), abs=5 * delta ** 5)
