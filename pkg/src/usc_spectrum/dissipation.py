"""Dressed-state relaxation rates, the driven few-level model and its Liouvillian.

Density matrices are vectorised by column stacking, ``vec(rho) =
rho.reshape(-1, order="F")``, so ``vec(A X B) = kron(B.T, A) @ vec(X)``.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .model import DressedBasis, SystemParams, bare_operators

__all__ = [
    "RWAWarning",
    "TransitionTable",
    "DriveTerm",
    "DrivenModel",
    "FourLevelModel",
    "Liouvillian",
    "AuditReport",
    "vec",
    "unvec",
    "transition_table",
    "effective_drive",
    "build_liouvillian",
    "dissipator",
    "truncation_audit",
]

RESONANCE_TOL = 1e-6
RESONANCE_THRESHOLD = 0.1
DRIVE_WARN_RATIO = 0.25
Z_ZERO_TOL = 1e-10


class RWAWarning(UserWarning):
    """The drive is not weak compared with a discarded detuning."""


def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, n=None):
    v = np.asarray(v)
    n = n or int(round(np.sqrt(v.size)))
    return v.reshape(n, n, order="F")


@dataclass(frozen=True)
class TransitionTable:
    """Matrix elements and downward relaxation rates over a level subset.

    Arrays are indexed by position in `levels`; ``gamma_cav[j, k]`` is the
    rate for ``psi_levels[j] -> psi_levels[k]`` and vanishes unless j > k.
    """

    levels: tuple
    energies: np.ndarray
    Z: np.ndarray
    alpha: np.ndarray
    gamma_cav: np.ndarray
    gamma_qub: np.ndarray

    @property
    def gamma_total(self):
        return self.gamma_cav + self.gamma_qub

    def pos(self, level):
        return self.levels.index(level)

    def rate(self, j, k):
        """Total rate Gamma_jk between dressed levels j > k."""
        return float(self.gamma_total[self.pos(j), self.pos(k)])

    def restrict(self, levels):
        idx = [self.pos(l) for l in levels]
        sub = np.ix_(idx, idx)
        return TransitionTable(
            tuple(levels), self.energies[idx], self.Z[sub], self.alpha[sub],
            self.gamma_cav[sub], self.gamma_qub[sub],
        )


def transition_table(d: DressedBasis, p: SystemParams, levels=(0, 1, 2, 3),
                     degenerate_tol=1e-12):
    """Drive elements Z, emission elements alpha and zero-temperature rates.

    Cavity: ``kappa * E_jk / omega_c * |<k|(a - a^dag)|j>|^2``.
    Qubits: ``gamma * E_jk / omega_q * sum_i |<k|(sm_i - sp_i)|j>|^2``.
    Pairs closer than `degenerate_tol` in energy get zero rate.
    """
    levels = tuple(int(l) for l in levels)
    if list(levels) != sorted(set(levels)):
        raise ValueError(f"levels must be strictly ascending, got {levels}")
    ops = bare_operators(p.n_max)
    e = d.energies[list(levels)]
    minus = ops["a"] - ops["adag"]
    Z = d.project(ops["X"], levels)
    A = d.project(minus, levels)
    Q = [d.project(ops["sm" + i] - ops["sp" + i], levels) for i in ("1", "2")]

    n = len(levels)
    e_diff = e[None, :] - e[:, None]  # E_n - E_m at [m, n]
    alpha = -e_diff * A
    g_cav = np.zeros((n, n))
    g_qub = np.zeros((n, n))
    for j in range(n):
        for k in range(j):
            e_jk = e[j] - e[k]
            if e_jk < -degenerate_tol:
                raise ValueError(
                    f"level ordering error: E{levels[j]} < E{levels[k]}"
                )
            if e_jk <= degenerate_tol:
                continue
            if p.omega_c > 0:
                g_cav[j, k] = p.kappa * e_jk / p.omega_c * abs(A[k, j]) ** 2
            g_qub[j, k] = p.gamma * e_jk / p.omega_q * sum(abs(q[k, j]) ** 2 for q in Q)
    return TransitionTable(levels, e, Z, alpha, g_cav, g_qub)


@dataclass(frozen=True)
class DriveTerm:
    m: int
    n: int
    Z: complex
    detuning: float
    retained: bool
    rwa_ok: bool


@dataclass(frozen=True)
class DrivenModel:
    """Driven dressed-level model in the frame rotating with the drive.

    `hamiltonian` is expressed over `levels`.  Frame energies follow the
    retained drive terms from the lowest level of each connected group,
    which sits at zero; isolated levels sit at zero frame energy.
    """

    levels: tuple
    energies: np.ndarray
    omega_l: float
    Omega: float
    hamiltonian: np.ndarray
    rates: TransitionTable
    drive_terms: tuple = field(repr=False)
    target: int = 3

    @property
    def dim(self):
        return len(self.levels)

    def pos(self, level):
        return self.levels.index(level)

    @property
    def discarded(self):
        return tuple(t for t in self.drive_terms if not t.retained)


FourLevelModel = DrivenModel


def effective_drive(d: DressedBasis, p: SystemParams, target_level=3,
                    levels=(0, 1, 2, 3), scan_levels=8, near_resonant_cutoff=None,
                    resonance_tol=RESONANCE_TOL,
                    resonance_threshold=RESONANCE_THRESHOLD,
                    warn_ratio=DRIVE_WARN_RATIO):
    """Reduce the cavity drive to a time-independent few-level Hamiltonian.

    The drive frequency defaults to E_target - E_0.  Every pair (m, n) among
    the lowest `scan_levels` dressed states is recorded with its detuning
    E_nm - omega_l.  A term is kept when both levels belong to `levels`, Z_mn
    is nonzero and the detuning is below `resonance_tol` (or below
    `near_resonant_cutoff` when that is given).  The 0 -> target term is
    always kept; a user-set omega_l enters as a frame detuning.
    """
    levels = tuple(int(l) for l in levels)
    if levels[0] != 0 or target_level not in levels:
        raise ValueError("levels must contain the ground state and the target")
    e = d.energies
    e_t0 = e[target_level] - e[0]
    if e_t0 <= resonance_tol:
        raise ValueError(f"target level {target_level} is degenerate with the ground state")
    omega_l = float(e_t0 if p.omega_l is None else p.omega_l)

    rates = transition_table(d, p, levels)
    n_scan = max(scan_levels, max(levels) + 1)
    z_all = d.project(bare_operators(p.n_max)["X"], range(n_scan))
    z0t = z_all[0, target_level]
    if abs(z0t) <= Z_ZERO_TOL:
        raise ValueError(f"target level {target_level} is not drivable: Z_0{target_level} = 0")
    keep_tol = resonance_tol if near_resonant_cutoff is None else near_resonant_cutoff

    terms = []
    for m in range(n_scan):
        for n in range(m + 1, n_scan):
            z = complex(z_all[m, n])
            det = float(e[n] - e[m] - omega_l)
            drivable = abs(z) > Z_ZERO_TOL
            retained = (m, n) == (0, target_level) or (
                m in levels and n in levels and drivable and abs(det) <= keep_tol)
            ok = (retained or not drivable
                  or p.epsilon * abs(z) < resonance_threshold * abs(det))
            terms.append(DriveTerm(m, n, z, det, retained, ok))

    ground_detunings = [abs(t.detuning) for t in terms
                        if t.m == 0 and not t.retained and abs(t.Z) > Z_ZERO_TOL]
    if ground_detunings and p.epsilon >= warn_ratio * min(ground_detunings):
        warnings.warn(
            f"drive epsilon = {p.epsilon:.3g} is not small against the nearest "
            f"discarded detuning {min(ground_detunings):.3g}; the few-level "
            "reduction may be inaccurate", RWAWarning, stacklevel=2)

    # Frame energies: walk retained terms out from each unreached level,
    # lowest first, so every connected group is referenced to its root.
    frame = {}
    retained = [t for t in terms if t.retained]
    for root in levels:
        if root in frame:
            continue
        frame[root] = 0.0
        queue = deque([root])
        while queue:
            cur = queue.popleft()
            for t in retained:
                for a, b, sign in ((t.m, t.n, 1.0), (t.n, t.m, -1.0)):
                    if a == cur and b not in frame:
                        frame[b] = frame[a] + sign * t.detuning
                        queue.append(b)
    pos = {l: i for i, l in enumerate(levels)}
    h = np.zeros((len(levels), len(levels)), dtype=complex)
    for l, en in frame.items():
        h[pos[l], pos[l]] = en
    for t in retained:
        h[pos[t.m], pos[t.n]] += 0.5 * p.epsilon * t.Z
        h[pos[t.n], pos[t.m]] += 0.5 * p.epsilon * np.conj(t.Z)

    if abs(z0t.imag) > 1e-12 * abs(z0t):
        raise ValueError("Z_0t is not real; phase convention violated")
    return DrivenModel(
        levels=levels, energies=e[list(levels)].copy(), omega_l=omega_l,
        Omega=float(p.epsilon * z0t.real), hamiltonian=h, rates=rates,
        drive_terms=tuple(terms), target=target_level,
    )


def dissipator(c):
    """Superoperator of D[c] rho = c rho c^dag - {c^dag c, rho} / 2."""
    c = np.asarray(c, dtype=complex)
    eye = np.eye(c.shape[0])
    cdc = c.conj().T @ c
    return (np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc)
            - 0.5 * np.kron(cdc.T, eye))


@dataclass(frozen=True)
class Liouvillian:
    """Column-stacked generator split into coherent and dissipative parts."""

    dim: int
    coherent: np.ndarray
    cavity: np.ndarray
    qubit: np.ndarray
    model: DrivenModel = field(repr=False)

    @property
    def matrix(self):
        return self.coherent + self.cavity + self.qubit

    def apply(self, rho):
        return unvec(self.matrix @ vec(rho), self.dim)

    def trace_row(self):
        return vec(np.eye(self.dim)).astype(complex)

    def trace_defect(self):
        """Norm of Tr o L; zero for a trace-preserving generator."""
        return float(np.linalg.norm(self.trace_row() @ self.matrix))


def build_liouvillian(m: DrivenModel):
    n = m.dim
    eye = np.eye(n)
    h = m.hamiltonian
    coherent = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    cav = np.zeros((n * n, n * n), dtype=complex)
    qub = np.zeros((n * n, n * n), dtype=complex)
    for j in range(n):
        for k in range(j):
            jump = np.zeros((n, n))
            jump[k, j] = 1.0
            g_c = m.rates.gamma_cav[j, k]
            g_q = m.rates.gamma_qub[j, k]
            if g_c or g_q:
                dj = dissipator(jump)
                cav += g_c * dj
                qub += g_q * dj
    return Liouvillian(n, coherent, cav, qub, m)


@dataclass(frozen=True)
class AuditReport:
    small_levels: tuple
    large_levels: tuple
    populations_small: np.ndarray
    populations_large: np.ndarray
    population_deviation: float
    spectrum_deviation: float
    leaked_population: float

    def passed(self, tol=1e-3):
        return self.population_deviation < tol


def truncation_audit(d: DressedBasis, p: SystemParams, n_levels=4,
                     enlarged=8, near_resonant_cutoff=0.1, omega_points=None):
    """Compare the reduced model against an enlarged one.

    The enlarged model keeps every drive term within `near_resonant_cutoff`
    of resonance (for example 0 -> 4 at the avoided crossing), so it sees
    the leakage the reduced model ignores.  Populations of the shared
    levels and the 0 <-> target emission spectrum are compared.
    """
    from .spectrum import steady_state, transition_spectrum

    if n_levels < 4:
        raise ValueError("n_levels must be >= 4")
    if enlarged <= n_levels:
        raise ValueError("enlarged model must have more levels than the reduced one")
    small = effective_drive(d, p, levels=tuple(range(n_levels)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RWAWarning)
        large = effective_drive(d, p, levels=tuple(range(enlarged)),
                                near_resonant_cutoff=near_resonant_cutoff)
    l_small = build_liouvillian(small)
    l_large = build_liouvillian(large)
    ss_small = steady_state(l_small)
    ss_large = steady_state(l_large)
    pop_s = np.real(np.diag(ss_small.rho))
    pop_l = np.real(np.diag(ss_large.rho))
    pop_dev = float(np.max(np.abs(pop_l[:n_levels] - pop_s)))

    if omega_points is None:
        om = abs(small.Omega)
        omega_points = np.array([0.0, 0.5 * om, om, -0.5 * om, -om])
    t = small.target
    s_small = transition_spectrum(l_small, ss_small, 0, t, omega_points)
    s_large = transition_spectrum(l_large, ss_large, 0, t, omega_points)
    scale = float(np.max(np.abs(s_small)))
    diff = float(np.max(np.abs(s_large - s_small)))
    spec_dev = diff / scale if scale > 1e-300 else diff
    return AuditReport(
        small.levels, large.levels, pop_s, pop_l, pop_dev, spec_dev,
        float(np.sum(pop_l[n_levels:])),
    )
