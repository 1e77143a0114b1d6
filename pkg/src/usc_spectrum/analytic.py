"""Closed-form spectral theory of the driven four-level model.

The resonantly driven pair (psi_0, psi_3) is rotated into the symmetric
and antisymmetric combinations ``|+-> = (|psi_3> +- |psi_0>) / sqrt(2)``,
in which the drive Hamiltonian is diagonal.  The emission spectrum is then
a sum of complex Lorentzians ``Re[C / (lambda - i w)]`` whose poles and
amplitudes follow from a handful of rate combinations.  All quantities are
in units of omega_q.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .dissipation import (RWAWarning, TransitionTable, dissipator, effective_drive,
                          transition_table)
from .model import SystemParams, diagonalize
from .spectrum import SteadyState

__all__ = [
    "PlusMinusBasis",
    "RateCombinations",
    "SecularDynamics",
    "Lorentzian",
    "LorentzianSet",
    "LinewidthTable",
    "plus_minus_basis",
    "rate_combinations",
    "four_level_liouvillian",
    "secular_liouvillian",
    "secular_dynamics",
    "lorentzian_decomposition",
    "pole_comparison",
    "linewidth_ratio_sweep",
    "peak_height_ratios",
]

#: Relative size of Delta below which the narrow-pair amplitudes are merged.
DELTA_GUARD = 1e-12

PM_LABELS = ("-", "1", "2", "+")


@dataclass(frozen=True)
class PlusMinusBasis:
    """Columns of `transformation` are |->, psi_1, psi_2, |+> in the dressed basis."""

    transformation: np.ndarray

    @property
    def superoperator(self):
        """Map vec(rho) in the dressed basis to vec(U^dag rho U)."""
        u = self.transformation
        return np.kron(u.T, u.conj().T)

    def to_pm(self, op):
        u = self.transformation
        return u.conj().T @ np.asarray(op) @ u

    def from_pm(self, op):
        u = self.transformation
        return u @ np.asarray(op) @ u.conj().T

    def liouvillian(self, L):
        """Express a column-stacked superoperator in the +- basis."""
        s = self.superoperator
        return s @ L @ s.conj().T


def plus_minus_basis():
    r = 1.0 / math.sqrt(2.0)
    u = np.zeros((4, 4), dtype=complex)
    u[0, 0], u[3, 0] = -r, r
    u[1, 1] = 1.0
    u[2, 2] = 1.0
    u[0, 3], u[3, 3] = r, r
    return PlusMinusBasis(u)


@dataclass(frozen=True)
class RateCombinations:
    """Downward rates among levels 0..3 and the combinations built from them.

    `A` is the decay constant of the secular population difference
    rho_++ - rho_--, read off the secular Liouvillian.
    """

    G10: float
    G20: float
    G21: float
    G30: float
    G31: float
    G32: float
    A: float

    def __post_init__(self):
        for name in ("G10", "G20", "G21", "G30", "G31", "G32"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    @property
    def Gamma12_plus(self):
        return 0.5 * (self.G10 + self.G20)

    @property
    def Gamma12_minus(self):
        return 0.5 * (self.G10 - self.G20)

    @property
    def Gamma23_plus(self):
        return 0.5 * (self.G31 + self.G32)

    @property
    def Gamma23_minus(self):
        return 0.5 * (self.G31 - self.G32)

    @property
    def Gamma_plus(self):
        return self.G31 - self.G21 + 2.0 * (self.G10 - self.G20)

    @property
    def Gamma_minus(self):
        return self.G31 - self.G21 - 2.0 * (self.G10 - self.G20)

    @property
    def DeltaLinewidth(self):
        d2 = self.Gamma_plus ** 2 + 2.0 * self.Gamma_minus * self.G32 + self.G32 ** 2
        return math.sqrt(max(d2, 0.0))

    @property
    def D(self):
        return 2.0 * self.G10 + 2.0 * self.G20 + self.G21 + self.G31 + self.G32

    def as_matrix(self):
        """Rates as a 4x4 array, ``[j, k]`` for j -> k."""
        g = np.zeros((4, 4))
        g[1, 0], g[2, 0], g[2, 1] = self.G10, self.G20, self.G21
        g[3, 0], g[3, 1], g[3, 2] = self.G30, self.G31, self.G32
        return g


def four_level_liouvillian(gamma, Omega):
    """Resonant four-level generator in the dressed basis (column stacking).

    `gamma` is a 4x4 array of downward rates ``[j, k]``; the drive couples
    psi_0 and psi_3 with ``H = (Omega / 2)(sigma_03 + sigma_30)``.
    """
    n = 4
    h = np.zeros((n, n), dtype=complex)
    h[0, 3] = h[3, 0] = 0.5 * Omega
    eye = np.eye(n)
    L = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for j in range(n):
        for k in range(j):
            if gamma[j, k]:
                c = np.zeros((n, n))
                c[k, j] = 1.0
                L = L + gamma[j, k] * dissipator(c)
    return L


def _pm_frequencies(Omega):
    # Frame frequencies of (-, 1, 2, +) under H = diag(-W/2, 0, 0, W/2).
    return np.array([-0.5 * Omega, 0.0, 0.0, 0.5 * Omega])


def secular_liouvillian(gamma, Omega, basis=None):
    """Four-level generator in the +- basis with oscillating terms removed.

    In the interaction picture of the diagonal drive Hamiltonian each
    matrix element rho_ab rotates at nu_a - nu_b.  Dissipative couplings
    between elements of different rotation frequency are dropped.
    """
    if Omega == 0:
        raise ValueError("secular approximation needs Omega != 0")
    basis = basis or plus_minus_basis()
    L = basis.liouvillian(four_level_liouvillian(gamma, Omega))
    nu = _pm_frequencies(Omega)
    # vec index a + 4 b holds rho_ab
    f = (nu[:, None] - nu[None, :]).reshape(-1, order="F")
    keep = np.abs(f[:, None] - f[None, :]) <= 1e-9 * abs(Omega)
    return np.where(keep, L, 0.0)


def _pop_index(a):
    return a + 4 * a


def _secular_A(gamma, Omega):
    """A from the secular block: d/dt(rho_++ - rho_--) = -(A/2)(rho_++ - rho_--)."""
    Ls = secular_liouvillian(gamma, Omega)
    idx = [_pop_index(a) for a in range(4)]
    block = np.real(Ls[np.ix_(idx, idx)])
    v = np.array([-1.0, 0.0, 0.0, 1.0])
    mv = block @ v
    rate = float(v @ mv / (v @ v))
    resid = float(np.linalg.norm(mv - rate * v))
    if resid > 1e-9 * max(1.0, abs(rate)) * max(np.max(np.abs(block)), 1e-300):
        raise ValueError(
            "population difference is not an eigenmode of the secular block"
        )
    return -2.0 * rate


def rate_combinations(table: TransitionTable, Omega):
    """Collect the rates among dressed levels 0..3 and extract A."""
    for lv in (0, 1, 2, 3):
        if lv not in table.levels:
            raise ValueError("rate table must contain levels 0, 1, 2 and 3")
    r = {f"G{j}{k}": table.rate(j, k) for j in range(4) for k in range(j)}
    gamma = np.zeros((4, 4))
    for j in range(4):
        for k in range(j):
            gamma[j, k] = r[f"G{j}{k}"]
    A = _secular_A(gamma, Omega) if Omega != 0 else float("nan")
    return RateCombinations(A=A, **r)


@dataclass(frozen=True)
class SecularDynamics:
    """Population dynamics in the +- sector.

    `difference_rate` is the decay rate of rho_++ - rho_-- (A/2).  The sum
    S = rho_++ + rho_-- obeys

        dS/dt = c_S S + c_C (rho_+- + rho_-+) + c_12 (rho_11 - rho_22) + c_0

    with coefficients `formula` (closed form) and `numeric` (read off the
    full generator after eliminating rho_11 + rho_22 = 1 - S).  `secular`
    holds the same row from the secular generator, where the coherence
    coupling is absent.  Keys: ``S, C, d12, const, C_asym``; ``C_asym``
    is the coefficient of (rho_+- - rho_-+), zero when the rates are real.
    """

    difference_rate: float
    formula: dict
    numeric: dict
    secular: dict
    difference_rate_numeric: float

    def discrepancy(self):
        return {k: self.numeric[k] - self.formula[k] for k in self.formula}


def _sum_row(L):
    """Coefficients of d/dt(rho_++ + rho_--) after eliminating the trace."""
    row = L[_pop_index(3)] + L[_pop_index(0)]
    c = lambda a, b: row[a + 4 * b]
    c11, c22 = c(1, 1), c(2, 2)
    s_coef = 0.5 * (c(3, 3) + c(0, 0))
    return {
        "S": float(np.real(s_coef - 0.5 * (c11 + c22))),
        "C": float(np.real(0.5 * (c(3, 0) + c(0, 3)))),
        "C_asym": complex(0.5 * (c(3, 0) - c(0, 3))),
        "d12": float(np.real(0.5 * (c11 - c22))),
        "const": float(np.real(0.5 * (c11 + c22))),
    }


def secular_dynamics(rates: RateCombinations, Omega):
    """Secular and non-secular population dynamics in the +- sector."""
    gamma = rates.as_matrix()
    basis = plus_minus_basis()
    g12p, g12m, g23p = rates.Gamma12_plus, rates.Gamma12_minus, rates.Gamma23_plus
    formula = {"S": -(g12p + g23p), "C": -g23p, "d12": g12m, "const": g12p}
    if not np.any(gamma):
        zero = {"S": 0.0, "C": 0.0, "C_asym": 0j, "d12": 0.0, "const": 0.0}
        return SecularDynamics(0.0, formula, dict(zero), dict(zero), 0.0)
    full = basis.liouvillian(four_level_liouvillian(gamma, Omega))
    numeric = _sum_row(full)
    secular = _sum_row(secular_liouvillian(gamma, Omega, basis))
    # decay of the difference under the full generator, by Rayleigh quotient
    idx = [_pop_index(a) for a in range(4)]
    v = np.array([-1.0, 0.0, 0.0, 1.0])
    diff_num = -float(v @ np.real(full[np.ix_(idx, idx)]) @ v / 2.0)
    return SecularDynamics(0.5 * rates.A, formula, numeric, secular, diff_num)


@dataclass(frozen=True)
class Lorentzian:
    """One term ``weight * Re[C / (lam - i w)]``; Re(lam) is the half-width."""

    label: str
    component: str
    lam: complex
    C: complex
    weight: float

    @property
    def height(self):
        return self.weight * float(np.real(self.C)) / float(np.real(self.lam))

    @property
    def center(self):
        return float(np.imag(self.lam))

    @property
    def fwhm(self):
        return 2.0 * float(np.real(self.lam))

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        return self.weight * np.real(self.C / (self.lam - 1j * w))


@dataclass(frozen=True)
class LorentzianSet:
    entries: tuple
    Omega: float
    rates: RateCombinations = field(repr=False)
    imag_diagnostic: float = 0.0

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, label):
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def components(self):
        return sorted({e.component for e in self.entries})

    def evaluate(self, omega, component=None):
        w = np.asarray(omega, dtype=float)
        out = np.zeros(w.shape)
        for e in self.entries:
            if component is None or e.component == component:
                out = out + e(w)
        return out

    def evaluate_complex(self, omega):
        """Sum of ``weight * C / (lam - i w)`` before taking the real part."""
        w = np.asarray(omega, dtype=float)
        return sum(e.weight * e.C / (e.lam - 1j * w) for e in self.entries)


def lorentzian_decomposition(rates: RateCombinations, Omega, ss: SteadyState,
                             alphas):
    """Analytic Lorentzian form of the three emission components.

    `ss` is the four-level steady state in the dressed basis; it is rotated
    to the +- basis here.  `alphas` maps ``"01"``, ``"03"``, ``"13"`` to the
    emission matrix elements.  Omega keeps the sign of Z_03.
    """
    if Omega == 0 or not math.isfinite(Omega):
        raise ValueError("Omega must be finite and nonzero")
    if ss.rho.shape != (4, 4):
        raise ValueError("steady state must be the four-level density matrix")
    rho = plus_minus_basis().to_pm(ss.rho)
    r_mm, r11, r22, r_pp = (float(np.real(rho[i, i])) for i in range(4))
    r_pm, r_mp = complex(rho[3, 0]), complex(rho[0, 3])

    A, G30, G10 = rates.A, rates.G30, rates.G10
    D, Dl = rates.D, rates.DeltaLinewidth
    lam0 = 0.5 * A
    lam0p = 0.25 * (2 * A + G30) + 1j * Omega
    lam0m = 0.25 * (2 * A + G30) - 1j * Omega
    lam1p = 0.25 * (D + Dl)
    lam1m = 0.25 * (D - Dl)
    lam2p = 0.25 * (A + 2 * G10) + 0.5j * Omega
    lam2m = 0.25 * (A + 2 * G10) - 0.5j * Omega

    pref = 1j * G30 * (r_mp - r_pm) / (2.0 * Omega)
    if Dl > DELTA_GUARD * D:
        fp = (rates.Gamma_plus + rates.G32) / Dl
        fm = (rates.Gamma_minus + rates.G32) / Dl
    else:
        # Coincident narrow poles: split the (finite) sum evenly.
        fp = fm = 0.0
    C1p = pref * ((1 + fp) * r11 + (1 + fm) * r22)
    C1m = pref * ((1 - fp) * r11 + (1 - fm) * r22)

    w1 = 0.5 * abs(alphas["03"]) ** 2
    w2 = abs(alphas["01"]) ** 2
    w3 = abs(alphas["13"]) ** 2
    entries = (
        Lorentzian("central", "S1", complex(lam0), complex(r_pp + r_mm), w1),
        Lorentzian("outer+", "S1", lam0p, complex(r_pp), w1),
        Lorentzian("outer-", "S1", lam0m, complex(r_mm), w1),
        Lorentzian("narrow+", "S1", complex(lam1p), C1p, w1),
        Lorentzian("narrow-", "S1", complex(lam1m), C1m, w1),
        Lorentzian("inner+", "S2", lam2p, complex(r11), w2),
        Lorentzian("inner-", "S2", lam2m, complex(r11), w2),
        Lorentzian("inner+", "S3", lam2p, complex(r_pp), w3),
        Lorentzian("inner-", "S3", lam2m, complex(r_mm), w3),
    )
    imag = max(abs(np.imag(C1p)), abs(np.imag(C1m)))
    scale = max(abs(C1p), abs(C1m), 1e-300)
    return LorentzianSet(entries, float(Omega), rates, float(imag / scale))


def pole_comparison(L_matrix, lset: LorentzianSet):
    """Relative distance from each distinct analytic pole to the nearest
    eigenvalue ``-mu`` of the full generator.

    Returns ``{label: (lam_analytic, lam_numeric, rel_error)}``.
    """
    mu = linalg.general_eig(L_matrix)[0]
    cand = -mu
    out = {}
    for e in lset.entries:
        key = e.label if e.label != "central" else "central"
        if key in out:
            continue
        j = int(np.argmin(np.abs(cand - e.lam)))
        err = abs(cand[j] - e.lam) / max(abs(cand[j]), 1e-300)
        out[key] = (e.lam, complex(cand[j]), float(err))
    return out


@dataclass(frozen=True)
class LinewidthTable:
    """Relative linewidths of the narrow lines along one parameter sweep."""

    sweep: str
    values: np.ndarray
    lam0: np.ndarray
    lam1_minus: np.ndarray
    lam1_plus: np.ndarray
    params: SystemParams

    @property
    def ratio_minus(self):
        return self.lam1_minus / self.lam0

    @property
    def ratio_plus(self):
        return self.lam1_plus / self.lam0


def linewidth_ratio_sweep(p: SystemParams, sweep, grid, workers=None):
    """lambda_1^-/lambda_0 and lambda_1^+/lambda_0 along a gamma or kappa grid.

    The Hamiltonian does not depend on the swept rate, so it is diagonalised
    once; rates and poles are rebuilt for every grid point.
    """
    if sweep not in ("gamma", "kappa"):
        raise ValueError(f"sweep must be 'gamma' or 'kappa', got {sweep!r}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly ascending")
    d = diagonalize(p)
    # Omega depends on the drive only, not on the swept rate
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RWAWarning)
        omega = effective_drive(d, p).Omega

    def point(value):
        q = p.replace(**{sweep: float(value)})
        rc = rate_combinations(transition_table(d, q), omega)
        return 0.5 * rc.A, 0.25 * (rc.D - rc.DeltaLinewidth), 0.25 * (rc.D + rc.DeltaLinewidth)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(point, grid))
    else:
        rows = [point(v) for v in grid]
    rows = np.array(rows)
    return LinewidthTable(sweep, grid, rows[:, 0], rows[:, 1], rows[:, 2], p)


def peak_height_ratios(lset: LorentzianSet):
    """Heights ``weight * Re(C) / Re(lam)`` of the lines and their ratios.

    The composite central height is the value of the central-line group
    (central plus both narrow terms) at w = 0.
    """
    h = {f"{e.component}:{e.label}": e.height for e in lset.entries}
    s1 = [e for e in lset.entries if e.component == "S1"]
    broad = sum(e.height for e in s1 if e.label == "central")
    narrow_p = sum(e.height for e in s1 if e.label == "narrow+")
    narrow_m = sum(e.height for e in s1 if e.label == "narrow-")
    composite = broad + narrow_p + narrow_m
    outer = sum(e.height for e in s1 if e.label == "outer+")
    inner = sum(e.height for e in lset.entries if e.label == "inner+")

    def ratio(a, b):
        return a / b if b else float("nan")

    return {
        "heights": h,
        "central_broad": broad,
        "central_composite": composite,
        "narrow_minus/central": ratio(narrow_m, composite),
        "narrow_plus/central": ratio(narrow_p, composite),
        "narrow/central": ratio(narrow_p + narrow_m, composite),
        "inner/outer": ratio(inner, outer),
    }
