import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, linalg

from amlattice.bands import wannier_stark_ladder
from amlattice.effective import (
    EffectiveDispersion,
    analytic_echo_sigma,
    dispersion,
    empirical_J,
    group_velocity,
    matrix_elements,
    rms_speed,
    tight_binding_propagate,
    tunneling_rate,
)
from amlattice.program import Burst, Hold, ModulationProgram
from amlattice.units import REFERENCE_RECOIL_FREQUENCY, reference_config


@pytest.fixture(scope="module")
def ladder11():
    return wannier_stark_ladder(reference_config(11.2), 1)


def test_rate_matches_empirical_fit(ladder11):
    J = tunneling_rate(ladder11, 1, 0.23)
    emp = empirical_J(11.2, 0.23, 1)
    assert emp == pytest.approx(2500 * 0.23 * 11.2 * math.exp(-0.25 * 11.2))
    assert abs(J.per_second()) == pytest.approx(emp, rel=0.3)


def test_rate_linear_in_alpha(ladder11):
    a = tunneling_rate(ladder11, 2, 0.2).value
    b = tunneling_rate(ladder11, 2, 0.4).value
    assert b == 2 * a
    assert tunneling_rate(ladder11, 1, 0.0).value == 0.0


def test_rate_definition(ladder11):
    J = tunneling_rate(ladder11, 1, 0.3)
    assert J.value == -0.3 * 11.2 * J.matrix_element / 2
    m = matrix_elements(ladder11, 1)
    assert np.std(m) < 1e-3 * abs(np.mean(m))


def test_rate_needs_interior_sites(ladder11):
    with pytest.raises(Exception):
        tunneling_rate(ladder11, len(ladder11.sites), 0.2)


def test_empirical_constants():
    assert empirical_J(10.0, 1.0, 1) == pytest.approx(2500 * 10 * math.exp(-2.5))
    assert empirical_J(10.0, 1.0, 3) / empirical_J(10.0, 1.0, 1) == pytest.approx(math.exp(-7))
    assert empirical_J(10.0, 0.0, 1) == 0.0
    with pytest.warns(UserWarning):
        empirical_J(25.0, 0.2)


@given(st.floats(-1, 1), st.integers(-3, 3), st.integers(1, 3), st.floats(-3, 3))
def test_group_velocity_antisymmetry(k, n, ell, phi):
    d = EffectiveDispersion(0.01, ell, phi)
    shifted = k + (2 * n + 1) / ell
    assert group_velocity(d, shifted) == pytest.approx(-group_velocity(d, k), abs=1e-12)


@given(st.integers(1, 3), st.floats(-2, 2))
def test_dispersion_period_and_width(ell, phi):
    d = EffectiveDispersion(0.02, ell, phi)
    k = np.linspace(-1, 1, 2001)
    np.testing.assert_allclose(dispersion(d, k + 2 / ell), dispersion(d, k), atol=1e-14)
    e = dispersion(d, np.linspace(0, 2 / ell, 4001))
    assert e.max() - e.min() == pytest.approx(2 * abs(d.J), rel=1e-6)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_rms_speed_quadrature(ell):
    d = EffectiveDispersion(0.013, ell, 0.4)
    val, _ = integrate.quad(lambda k: group_velocity(d, k) ** 2, -1, 1, epsabs=1e-14)
    assert rms_speed(d) == pytest.approx(math.sqrt(val / 2), rel=1e-10)
    assert rms_speed(d) == pytest.approx(ell * math.pi * 0.013 / math.sqrt(2))
    assert rms_speed(EffectiveDispersion(0.0, ell)) == 0.0


def test_analytic_echo_sigma():
    assert analytic_echo_sigma(1.0, 2.0, 5.0, 0.0) == pytest.approx(math.sqrt(5))
    assert analytic_echo_sigma(1.0, 2.0, 5.0, 2.5) == pytest.approx(1.0)
    np.testing.assert_allclose(analytic_echo_sigma(1.5, 0.0, 5.0, np.linspace(0, 9, 7)), 1.5)
    with pytest.raises(ValueError):
        analytic_echo_sigma(-1.0, 1.0, 1.0, 0.0)


def _hprime(n_sites, J, ell, phi):
    h = np.zeros((n_sites, n_sites), dtype=complex)
    for m in range(n_sites):
        h[(m + ell) % n_sites, m] += 0.5j * J * np.exp(1j * phi)
    return h + h.conj().T


@pytest.mark.parametrize("ell, phi", [(1, 0.0), (2, 0.7), (3, -1.1)])
def test_tb_matches_matrix_exponential(ell, phi, rng):
    F = 0.0716
    tau = 2 * math.pi / F
    n = 48
    a0 = rng.normal(size=n) + 1j * rng.normal(size=n)
    a0 /= np.linalg.norm(a0)
    J = 0.01
    prog = ModulationProgram((Burst(2 * tau, ell, 0.5, phi),))
    a = tight_binding_propagate(a0, prog, J, F)
    ref = linalg.expm(-1j * _hprime(n, 0.5 * J, ell, phi) * 2 * tau) @ a0
    np.testing.assert_allclose(a, ref, atol=1e-12)


def test_tb_hold_full_period_is_identity(rng):
    F = 0.0716
    a0 = rng.normal(size=32) + 0j
    a0 /= np.linalg.norm(a0)
    a = tight_binding_propagate(a0, ModulationProgram((Hold(2 * math.pi / F),)), 0.01, F)
    np.testing.assert_allclose(a, a0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 2))
def test_tb_echo_is_exact(seed, ell, odd):
    F = 0.0716
    tau = 2 * math.pi / F
    # a periodic lattice whose quasimomentum grid contains the k_L / ell shift
    rng = np.random.default_rng(seed)
    a0 = rng.normal(size=48) + 1j * rng.normal(size=48)
    a0 /= np.linalg.norm(a0)
    b = Burst(3 * tau, ell, 0.3, 0.2, ramp=0.5 * tau)
    t_fr = (2 * odd + 1) * tau / (2 * ell)
    prog = ModulationProgram((b, Hold(t_fr), b))
    a = tight_binding_propagate(a0, prog, 0.02, F)
    ref = a0 * np.exp(-1j * (np.arange(48) - 24) * F * prog.duration)
    assert abs(np.vdot(ref, a)) ** 2 == pytest.approx(1.0, abs=1e-10)


def test_tb_single_site_spread():
    F = 0.0716
    tau = 2 * math.pi / F
    n = 256
    a0 = np.zeros(n, complex)
    a0[n // 2] = 1
    J, alpha = 0.01, 0.2
    times = np.array([2, 4, 6]) * tau
    snaps = tight_binding_propagate(a0, ModulationProgram((Burst(6 * tau, 1, alpha),)), J, F,
                                    output_times=times)
    x = np.arange(n) - n // 2
    for t, a in snaps:
        p = np.abs(a) ** 2
        var = p @ x**2 - (p @ x) ** 2
        # <v^2> t^2 with v in sites per unit time
        assert var == pytest.approx((J * alpha * t) ** 2 / 2, rel=1e-10)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_tb_rejects_unnormalized():
    with pytest.raises(ValueError):
        tight_binding_propagate(np.ones(8), ModulationProgram((Hold(1.0),)), 0.01, 0.07)


def test_recoil_conversion():
    from amlattice.effective import TunnelingRate
    r = TunnelingRate(1, 0.01, 0.1, 0.0, 1, 0.2, 10.0)
    assert r.per_second() == pytest.approx(0.01 * REFERENCE_RECOIL_FREQUENCY)
