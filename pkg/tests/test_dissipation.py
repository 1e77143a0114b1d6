import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from usc_spectrum import linalg
from usc_spectrum.dissipation import (RWAWarning, build_liouvillian, dissipator,
                                      effective_drive, transition_table,
                                      truncation_audit, unvec, vec)
from usc_spectrum.model import SystemParams, bare_operators, diagonalize


def quiet_drive(d, p, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RWAWarning)
        return effective_drive(d, p, **kw)


def random_density(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_vec_roundtrip_and_convention():
    x = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(unvec(vec(x)), x)
    a, b = np.arange(4.0).reshape(2, 2), np.eye(2) + 1
    xx = np.array([[1.0, 2], [3, 5]])
    assert np.allclose(np.kron(b.T, a) @ vec(xx), vec(a @ xx @ b))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 5))
def test_dissipator_matches_direct_formula(seed, n):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = random_density(n, seed + 1)
    cdc = c.conj().T @ c
    direct = c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
    assert np.allclose(unvec(dissipator(c) @ vec(rho)), direct)


def test_rates_nonnegative_and_downward(dressed_default):
    t = transition_table(dressed_default, SystemParams())
    for arr in (t.gamma_cav, t.gamma_qub):
        assert np.all(arr >= 0)
        assert np.all(np.triu(arr) == 0)


def test_weak_coupling_limits():
    p = SystemParams(g=1e-6)
    t = transition_table(diagonalize(p), p)
    assert t.rate(3, 0) / p.kappa == pytest.approx(1.0, abs=1e-6)
    assert t.rate(1, 0) / p.gamma == pytest.approx(1.0, abs=1e-6)
    assert t.rate(2, 0) / p.gamma == pytest.approx(1.0, abs=1e-6)


def test_degenerate_pair_has_zero_rate():
    p = SystemParams(g=0.0)
    t = transition_table(diagonalize(p), p)
    assert t.rate(2, 1) == 0.0


def test_level_crossing_kills_gamma32():
    p = SystemParams(g=0.7056)
    t = transition_table(diagonalize(p), p)
    assert t.rate(3, 2) < 1e-12


def test_emission_element_antisymmetry(dressed_default):
    t = transition_table(dressed_default, SystemParams())
    # alpha_mn = -E_nm <m|(a - a^dag)|n> is symmetric under m <-> n
    assert np.allclose(t.alpha, t.alpha.T, atol=1e-12)
    assert np.allclose(np.diag(t.alpha), 0)


def test_transition_table_rejects_unsorted_levels(dressed_default):
    with pytest.raises(ValueError):
        transition_table(dressed_default, SystemParams(), levels=(0, 2, 1))


def test_restrict_consistency(dressed_default):
    t = transition_table(dressed_default, SystemParams(), levels=(0, 1, 2, 3, 4))
    sub = t.restrict((0, 3))
    assert sub.rate(3, 0) == t.rate(3, 0)


def test_effective_drive_rabi_frequency(dressed_default):
    p = SystemParams()
    m = quiet_drive(dressed_default, p)
    z03 = dressed_default.project(bare_operators(p.n_max)["X"], (0, 3))[0, 1]
    assert m.Omega == pytest.approx(p.epsilon * z03.real)
    h = m.hamiltonian
    assert np.allclose(h, h.conj().T)
    assert h[0, 3] == pytest.approx(0.5 * m.Omega)
    assert np.allclose(np.diag(h), 0)
    assert m.omega_l == pytest.approx(dressed_default.gap(3, 0))


def test_rwa_warning_at_strong_drive(dressed_default):
    with pytest.warns(RWAWarning):
        effective_drive(dressed_default, SystemParams())
    with warnings.catch_warnings():
        warnings.simplefilter("error", RWAWarning)
        effective_drive(dressed_default, SystemParams(epsilon=1e-4))


def test_discarded_terms_flagged(dressed_default):
    m = quiet_drive(dressed_default, SystemParams())
    by_pair = {(t.m, t.n): t for t in m.drive_terms}
    assert by_pair[(0, 3)].retained
    assert not by_pair[(0, 4)].retained
    assert not by_pair[(0, 4)].rwa_ok
    assert all(t.rwa_ok for t in m.drive_terms if abs(t.Z) < 1e-10)


def test_detuned_drive_enters_as_frame_energy(dressed_default):
    p = SystemParams(omega_l=dressed_default.gap(3, 0) - 1e-4)
    m = quiet_drive(dressed_default, p)
    assert np.real(m.hamiltonian[3, 3]) == pytest.approx(1e-4, rel=1e-6)


def test_frame_energies_follow_each_driven_group(dressed_default):
    p = SystemParams()
    m = quiet_drive(dressed_default, p, levels=tuple(range(8)), near_resonant_cutoff=0.1)
    e = dressed_default.energies
    h = np.real(np.diag(m.hamiltonian))
    assert h[4] == pytest.approx(e[4] - e[0] - m.omega_l)
    # level 5 is driven from level 1, which no drive term reaches from the ground
    assert h[5] == pytest.approx(e[5] - e[1] - m.omega_l)
    assert h[6] == pytest.approx(e[6] - e[2] - m.omega_l)


def test_drive_errors(dressed_default):
    p = SystemParams()
    with pytest.raises(ValueError):
        effective_drive(dressed_default, p, levels=(1, 2, 3))
    with pytest.raises(ValueError, match="not drivable"):
        effective_drive(dressed_default, p, target_level=2)
    d0 = diagonalize(SystemParams(g=0.0))
    with pytest.raises(ValueError):
        effective_drive(d0, SystemParams(g=0.0), target_level=2)


@pytest.mark.parametrize("g", [0.2, 0.7056])
def test_liouvillian_trace_and_hermiticity_preserving(g):
    p = SystemParams(g=g)
    L = build_liouvillian(quiet_drive(diagonalize(p), p))
    assert L.trace_defect() < 1e-12
    rho = random_density(4, 5) + 0.3j * np.eye(4)
    out = L.apply(rho)
    assert np.allclose(L.apply(rho.conj().T), out.conj().T)


def test_relaxation_follows_rate_equations(dressed_default):
    """Undriven populations obey the classical cascade dP/dt = W P."""
    p = SystemParams(epsilon=0.0, kappa=2e-3, gamma=2e-4)
    m = quiet_drive(dressed_default, p)
    L = build_liouvillian(m)
    g = m.rates.gamma_total
    w = g.T - np.diag(g.sum(axis=1))
    p0 = np.array([0.0, 0.2, 0.3, 0.5])
    t = 800.0
    pops = scipy.linalg.expm(w * t) @ p0
    rho = unvec(linalg.propagate_ode(L.matrix, vec(np.diag(p0).astype(complex)), t,
                                     tol=1e-12))
    assert np.allclose(np.real(np.diag(rho)), pops, atol=1e-9)


def test_audit_small_drive_passes(dressed_default):
    rep = truncation_audit(dressed_default, SystemParams(epsilon=1e-3))
    assert rep.passed()
    assert rep.large_levels == tuple(range(8))


def test_audit_flags_strong_drive(dressed_default):
    weak = truncation_audit(dressed_default, SystemParams(epsilon=1e-3))
    with pytest.warns(RWAWarning):
        strong = truncation_audit(dressed_default, SystemParams(epsilon=0.1))
    assert strong.population_deviation > 10 * weak.population_deviation
    assert not strong.passed()


def test_audit_argument_checks(dressed_default):
    with pytest.raises(ValueError):
        truncation_audit(dressed_default, SystemParams(), n_levels=3)
    with pytest.raises(ValueError):
        truncation_audit(dressed_default, SystemParams(), enlarged=4)
