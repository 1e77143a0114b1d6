import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usc_spectrum.analytic import (Lorentzian, _secular_A, LorentzianSet, RateCombinations,
                                   four_level_liouvillian, linewidth_ratio_sweep,
                                   lorentzian_decomposition, peak_height_ratios,
                                   plus_minus_basis, pole_comparison, rate_combinations,
                                   secular_dynamics, secular_liouvillian)
from usc_spectrum.dissipation import transition_table
from usc_spectrum.model import OMEGA_A, SystemParams, diagonalize
from usc_spectrum.presets import PRESETS, preset_params
from usc_spectrum.spectrum import SteadyState, peak_analysis

rate = st.floats(0.0, 1e-3)


def combos(case):
    return rate_combinations(case.model.rates, case.model.Omega)


def alphas(case):
    a = case.model.rates.alpha
    return {k: a[int(k[0]), int(k[1])] for k in ("01", "03", "13")}


def decomposition(case):
    return lorentzian_decomposition(combos(case), case.model.Omega, case.ss, alphas(case))


def test_plus_minus_basis_unitary_and_diagonalises_drive():
    b = plus_minus_basis()
    u = b.transformation
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    omega = 3.7e-3
    h = np.zeros((4, 4))
    h[0, 3] = h[3, 0] = omega / 2
    assert np.allclose(b.to_pm(h), np.diag([-omega / 2, 0, 0, omega / 2]), atol=1e-15)
    rho = np.arange(16.0).reshape(4, 4)
    assert np.allclose(b.from_pm(b.to_pm(rho)), rho)


def test_plus_minus_elements():
    rho = np.random.default_rng(3).normal(size=(4, 4))
    r = plus_minus_basis().to_pm(rho)
    assert r[3, 0] == pytest.approx(0.5 * (rho[3, 3] - rho[3, 0] + rho[0, 3] - rho[0, 0]))
    assert r[0, 3] == pytest.approx(0.5 * (rho[3, 3] + rho[3, 0] - rho[0, 3] - rho[0, 0]))


def test_superoperator_transform_matches_direct():
    b = plus_minus_basis()
    g = np.tril(np.random.default_rng(1).uniform(size=(4, 4)), -1)
    L = four_level_liouvillian(g, 2e-3)
    rho = np.random.default_rng(2).normal(size=(4, 4))
    direct = b.to_pm((L @ rho.reshape(-1, order="F")).reshape(4, 4, order="F"))
    via = (b.liouvillian(L) @ b.to_pm(rho).reshape(-1, order="F")).reshape(4, 4, order="F")
    assert np.allclose(direct, via)


@settings(max_examples=40, deadline=None)
@given(g10=rate, g20=rate, g21=rate, g30=rate, g31=rate, g32=rate,
       omega=st.floats(1e-4, 1e-2))
def test_secular_constant_closed_form(g10, g20, g21, g30, g31, g32, omega):
    g = np.zeros((4, 4))
    g[1, 0], g[2, 0], g[2, 1], g[3, 0], g[3, 1], g[3, 2] = g10, g20, g21, g30, g31, g32
    assert _secular_A(g, omega) == pytest.approx(g30 + g31 + g32, rel=1e-9, abs=1e-18)


@settings(max_examples=40, deadline=None)
@given(g10=rate, g20=rate, g21=rate, g30=rate, g31=rate, g32=rate)
def test_rate_combination_invariants(g10, g20, g21, g30, g31, g32):
    rc = RateCombinations(g10, g20, g21, g30, g31, g32, A=g30 + g31 + g32)
    assert rc.DeltaLinewidth >= 0
    assert rc.D >= 0
    assert rc.Gamma12_plus + rc.Gamma12_minus == pytest.approx(g10)


def test_rate_combinations_reject_negative():
    with pytest.raises(ValueError):
        RateCombinations(-1e-6, 0, 0, 0, 0, 0, A=0)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_delta_below_D_on_presets(name):
    p = preset_params(name)
    rc = rate_combinations(transition_table(diagonalize(p), p), 5e-3)
    assert rc.DeltaLinewidth <= rc.D
    assert rc.A == pytest.approx(rc.G30 + rc.G31 + rc.G32, rel=1e-12)


def test_secular_dynamics_fig4b(fig4b):
    rc = combos(fig4b)
    sd = secular_dynamics(rc, fig4b.model.Omega)
    for key, value in sd.discrepancy().items():
        assert abs(value) < 1e-12 * rc.D, key
    assert sd.secular["C"] == 0.0
    assert sd.numeric["C"] == pytest.approx(-rc.Gamma23_plus)
    assert sd.difference_rate == pytest.approx(sd.difference_rate_numeric, rel=1e-12)
    assert abs(sd.numeric["C_asym"]) < 1e-15


def test_difference_decay_is_liouvillian_eigenvalue(fig4b):
    rc = combos(fig4b)
    ls = secular_liouvillian(rc.as_matrix(), fig4b.model.Omega)
    mu = np.linalg.eigvals(ls)
    assert np.min(np.abs(mu + 0.5 * rc.A)) < 1e-12 * rc.A


def test_secular_dynamics_closed_system():
    rc = RateCombinations(0, 0, 0, 0, 0, 0, A=0.0)
    sd = secular_dynamics(rc, 1e-3)
    assert sd.difference_rate == 0
    assert all(v == 0 for v in sd.numeric.values())


def test_symmetric_rates_remove_source_term():
    g = dict(G10=3e-5, G20=3e-5, G21=1e-6, G30=1e-3, G31=4e-5, G32=5e-6)
    rc = RateCombinations(**g, A=g["G30"] + g["G31"] + g["G32"])
    sd = secular_dynamics(rc, 5e-3)
    assert sd.formula["d12"] == 0
    assert abs(sd.numeric["d12"]) < 1e-18


def test_secular_liouvillian_needs_drive():
    with pytest.raises(ValueError):
        secular_liouvillian(np.zeros((4, 4)), 0.0)


def test_poles_match_liouvillian_eigenvalues(fig4b):
    cmp = pole_comparison(fig4b.L.matrix, decomposition(fig4b))
    for label in ("central", "outer+", "outer-", "narrow+", "narrow-", "inner+", "inner-"):
        assert cmp[label][2] <= 0.1, label


def test_lorentzian_set_stable_real_and_even(fig4b):
    lset = decomposition(fig4b)
    assert all(e.lam.real > 0 for e in lset)
    om = np.linspace(-8, 8, 161) * OMEGA_A
    z = lset.evaluate_complex(om) + lset.evaluate_complex(-om)
    assert np.max(np.abs(z.imag)) <= 1e-10 * np.max(np.abs(z.real))
    v = lset.evaluate(om)
    assert np.allclose(v, v[::-1], rtol=1e-2)


def test_secular_steady_state_has_no_narrow_amplitude(fig4b):
    rho_pm = np.diag([0.3, 0.2, 0.2, 0.3]).astype(complex)
    rho = plus_minus_basis().from_pm(rho_pm)
    ss = SteadyState(rho, 0.0, (0, 1, 2, 3))
    lset = lorentzian_decomposition(combos(fig4b), fig4b.model.Omega, ss, alphas(fig4b))
    assert lset["narrow+"].C == 0
    assert lset["narrow-"].C == 0


def test_degenerate_collapse(fig6b):
    rc = combos(fig6b)
    lset = decomposition(fig6b)
    assert rc.G32 < 1e-12
    assert fig6b.ss.element(2, 2).real < 1e-12
    assert abs(lset["narrow-"].C) <= 1e-8 * abs(lset["central"].C)
    assert lset["narrow+"].lam.real == pytest.approx((2 * rc.G10 + rc.G31) / 2, rel=1e-10)
    assert lset["narrow-"].lam.real == pytest.approx((2 * rc.G20 + rc.G21) / 2, rel=1e-8)


def test_narrow_amplitude_vanishes_continuously():
    rho_pm = np.diag([0.3, 0.4, 0.0, 0.3]).astype(complex)
    rho_pm[3, 0] = 0.05j
    rho_pm[0, 3] = -0.05j
    ss = SteadyState(plus_minus_basis().from_pm(rho_pm), 0.0, (0, 1, 2, 3))
    amps = []
    for g32 in (1e-5, 1e-6, 1e-7, 1e-8, 0.0):
        rc = RateCombinations(5e-5, 2e-5, 1e-7, 1e-3, 3e-5, g32, A=1e-3 + 3e-5 + g32)
        lset = lorentzian_decomposition(rc, 5e-3, ss, {"01": 0.1, "03": 1.0, "13": 0.1})
        amps.append(abs(lset["narrow-"].C))
    assert all(a >= b for a, b in zip(amps, amps[1:]))
    assert amps[-1] < 1e-15
    assert amps[-2] < 1e-2 * amps[0]


def test_coincident_narrow_poles_are_guarded():
    rho_pm = np.diag([0.3, 0.2, 0.2, 0.3]).astype(complex)
    rho_pm[3, 0], rho_pm[0, 3] = 0.05j, -0.05j
    ss = SteadyState(plus_minus_basis().from_pm(rho_pm), 0.0, (0, 1, 2, 3))
    rc = RateCombinations(2e-5, 2e-5, 1e-6, 1e-3, 1e-6, 0.0, A=1e-3 + 1e-6)
    assert rc.DeltaLinewidth == 0
    lset = lorentzian_decomposition(rc, 5e-3, ss, {"01": 0.1, "03": 1.0, "13": 0.1})
    cp, cm = lset["narrow+"].C, lset["narrow-"].C
    assert np.isfinite(cp) and np.isfinite(cm)
    pref = 1j * rc.G30 * (rho_pm[0, 3] - rho_pm[3, 0]) / (2 * 5e-3)
    assert cp + cm == pytest.approx(2 * pref * (0.2 + 0.2))


def test_zero_rabi_frequency_rejected(fig4b):
    with pytest.raises(ValueError):
        lorentzian_decomposition(combos(fig4b), 0.0, fig4b.ss, alphas(fig4b))


def test_components_match_numerics(fig4b):
    """Each transition component agrees near its own peaks."""
    lset = decomposition(fig4b)
    s = fig4b.spectrum
    om = fig4b.model.Omega
    for comp, where in (("S1", 0.0), ("S1", om), ("S2", om / 2), ("S3", om / 2)):
        i = int(np.argmin(np.abs(s.omega - where)))
        assert lset.evaluate(s.omega[i], comp) == pytest.approx(s.parts[comp][i], rel=0.05)


def test_heights_synthetic_unit():
    entries = tuple(Lorentzian(lbl, "S1", complex(lam), complex(lam), 1.0)
                    for lbl, lam in (("central", 2.0), ("outer+", 1.0 + 3j),
                                     ("narrow+", 0.1), ("narrow-", 0.05)))
    lset = LorentzianSet(entries, 1.0, None)
    out = peak_height_ratios(lset)
    assert all(h == pytest.approx(1.0) for h in out["heights"].values())
    assert out["central_composite"] == pytest.approx(3.0)


def test_lorentzian_height_matches_curve():
    e = Lorentzian("outer+", "S1", 0.3 + 2j, 0.7 + 0j, 2.0)
    assert e(2.0) == pytest.approx(e.height)
    assert e.center == 2.0 and e.fwhm == pytest.approx(0.6)


def test_linewidth_sweep_trends():
    p = preset_params("fig4b")
    tg = linewidth_ratio_sweep(p, "gamma", np.geomspace(0.01, 0.2, 8) * OMEGA_A)
    assert np.all(np.diff(tg.lam1_minus) > 0)
    tk = linewidth_ratio_sweep(p, "kappa", np.geomspace(0.5, 8, 8) * OMEGA_A, workers=3)
    assert np.all(np.diff(tk.ratio_minus) < 0)
    assert np.all(tk.lam1_minus <= tk.lam1_plus)
    assert np.all(tk.lam1_plus <= tk.lam0)


def test_linewidth_sweep_argument_checks():
    p = SystemParams()
    with pytest.raises(ValueError):
        linewidth_ratio_sweep(p, "theta", [1e-5])
    with pytest.raises(ValueError):
        linewidth_ratio_sweep(p, "gamma", [2e-5, 1e-5])
    with pytest.raises(ValueError):
        linewidth_ratio_sweep(p, "gamma", [0.0, 1e-5])


def test_analytic_central_width_matches_numeric_peak(fig4b):
    """lambda_0 = A/2 is the half-width of the broad central line."""
    lset = decomposition(fig4b)
    s = fig4b.spectrum
    broad = [p for p in peak_analysis(s) if p.kind == "central-broad"][0]
    assert broad.fwhm == pytest.approx(2 * lset["central"].lam.real, rel=0.02)


def test_math_reference_values():
    rc = RateCombinations(1.0, 0.5, 0.25, 2.0, 0.75, 0.125, A=2.875)
    assert rc.Gamma_plus == pytest.approx(0.75 - 0.25 + 1.0)
    assert rc.Gamma_minus == pytest.approx(0.75 - 0.25 - 1.0)
    assert rc.D == pytest.approx(2 + 1 + 0.25 + 0.75 + 0.125)
    assert rc.DeltaLinewidth == pytest.approx(
        math.sqrt(1.5 ** 2 + 2 * (-0.5) * 0.125 + 0.125 ** 2))
