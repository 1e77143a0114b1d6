"""Two-qubit quantum Rabi model: bare operators, Hamiltonian and dressed states.

Energies are measured in units of the qubit frequency (``omega_q = 1``).
The bare product basis is ordered ``(qubit1, qubit2, photons)`` with qubit
state ``0 = g`` and ``1 = e``; the flat index is
``(2 * q1 + q2) * (n_max + 1) + n``.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import linalg

__all__ = [
    "OMEGA_A",
    "SystemParams",
    "BareBasis",
    "DressedBasis",
    "LadderTable",
    "TruncationError",
    "bare_operators",
    "qubit_swap",
    "build_rabi_hamiltonian",
    "diagonalize",
    "ladder_sweep",
    "find_anticrossing",
]

#: Display unit used for rates and spectra, 1e-3 omega_q.
OMEGA_A = 1e-3


class TruncationError(RuntimeError):
    """Low-lying energies are not converged in the Fock cutoff."""


@dataclass(frozen=True)
class SystemParams:
    """Physical inputs, all frequencies and rates in units of omega_q.

    ``omega_l=None`` means the drive is tuned to the 0 -> 3 dressed
    transition when the drive model is built.
    """

    omega_c: float = 1.915
    g: float = 0.2
    theta: float = math.pi / 6
    epsilon: float = 8.0 * OMEGA_A
    kappa: float = 2.0 * OMEGA_A
    gamma: float = 0.02 * OMEGA_A
    omega_l: float | None = None
    n_max: int = 20
    omega_q: float = 1.0

    def __post_init__(self):
        for name in ("omega_c", "g", "epsilon", "kappa", "gamma", "omega_q"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta}")
        if self.omega_l is not None and (
            not math.isfinite(self.omega_l) or self.omega_l < 0
        ):
            raise ValueError(f"omega_l must be finite and >= 0, got {self.omega_l}")
        if int(self.n_max) != self.n_max or self.n_max < 5:
            raise ValueError(f"n_max must be an integer >= 5, got {self.n_max}")
        if self.omega_q != 1.0:
            raise ValueError("omega_q is the unit of frequency and must equal 1")

    @property
    def detuning(self):
        """Cavity-qubit detuning omega_c - omega_q."""
        return self.omega_c - self.omega_q

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class BareBasis:
    n_max: int

    @property
    def n_photon(self):
        return self.n_max + 1

    @property
    def dim(self):
        return 4 * self.n_photon

    def index(self, q1, q2, n):
        """Flat index of ``|q1, q2, n>``; qubit labels are 'g'/'e' or 0/1."""
        q1, q2 = _qubit(q1), _qubit(q2)
        if not 0 <= n <= self.n_max:
            raise IndexError(f"photon number {n} outside 0..{self.n_max}")
        return (2 * q1 + q2) * self.n_photon + n

    def label(self, index):
        block, n = divmod(int(index), self.n_photon)
        q1, q2 = divmod(block, 2)
        return ("ge"[q1], "ge"[q2], n)

    def ket(self, q1, q2, n):
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(q1, q2, n)] = 1.0
        return v


def _qubit(q):
    if q in ("g", 0):
        return 0
    if q in ("e", 1):
        return 1
    raise ValueError(f"qubit state must be 'g' or 'e', got {q!r}")


def bare_operators(n_max):
    """Operators on the full qubit-qubit-cavity space.

    Keys: ``a, adag, X, sx1, sx2, sz1, sz2, sp1, sp2, sm1, sm2, eye``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n_ph = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, n_ph)), 1).astype(complex)
    # qubit basis (g, e)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    sz = np.diag([-1.0, 1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    i2 = np.eye(2, dtype=complex)
    ic = np.eye(n_ph, dtype=complex)

    def embed(q1, q2, cav):
        return np.kron(np.kron(q1, q2), cav)

    ops = {
        "a": embed(i2, i2, a),
        "sx1": embed(sx, i2, ic),
        "sx2": embed(i2, sx, ic),
        "sz1": embed(sz, i2, ic),
        "sz2": embed(i2, sz, ic),
        "sm1": embed(sm, i2, ic),
        "sm2": embed(i2, sm, ic),
        "eye": np.eye(4 * n_ph, dtype=complex),
    }
    ops["adag"] = ops["a"].conj().T
    ops["sp1"] = ops["sm1"].conj().T
    ops["sp2"] = ops["sm2"].conj().T
    ops["X"] = ops["a"] + ops["adag"]
    return ops


def qubit_swap(n_max):
    """Permutation operator exchanging the two qubits."""
    basis = BareBasis(n_max)
    p = np.zeros((basis.dim, basis.dim), dtype=complex)
    for i in range(basis.dim):
        q1, q2, n = basis.label(i)
        p[basis.index(q2, q1, n), i] = 1.0
    return p


def build_rabi_hamiltonian(p: SystemParams, ops=None):
    """Two-qubit Rabi Hamiltonian in the bare product basis."""
    ops = ops or bare_operators(p.n_max)
    h = p.omega_c * ops["adag"] @ ops["a"]
    c, s = math.cos(p.theta), math.sin(p.theta)
    for i in ("1", "2"):
        h = h + 0.5 * p.omega_q * ops["sz" + i]
        h = h + p.g * ops["X"] @ (c * ops["sx" + i] + s * ops["sz" + i])
    return h


@dataclass(frozen=True)
class DressedBasis:
    """Eigenstates of the Rabi Hamiltonian, columns of `states`."""

    energies: np.ndarray
    states: np.ndarray
    params: SystemParams
    parity: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.states.shape[0]

    def gap(self, n, m):
        """E_n - E_m."""
        return float(self.energies[n] - self.energies[m])

    def project(self, op, levels=None):
        """Matrix elements <psi_m| op |psi_n> restricted to `levels`."""
        v = self.states if levels is None else self.states[:, list(levels)]
        return v.conj().T @ op @ v

    def overlap(self, n, ket):
        return complex(np.vdot(self.states[:, n], ket))


def _symmetrize_clusters(energies, vectors, swap, tol):
    """Resolve degenerate clusters into qubit-exchange eigenstates.

    Within a cluster symmetric states come first, except that a cluster
    containing level 2 puts its antisymmetric state at level 2.
    """
    v = vectors.copy()
    parity = np.real(np.einsum("ik,ij,jk->k", v.conj(), swap, v))
    n = len(energies)
    scale = max(1.0, float(np.max(np.abs(energies))))
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and energies[stop] - energies[stop - 1] <= tol * scale:
            stop += 1
        if stop - start > 1:
            block = v[:, start:stop]
            s_sub = block.conj().T @ swap @ block
            s_vals, s_vecs = np.linalg.eigh(0.5 * (s_sub + s_sub.conj().T))
            order = list(np.argsort(-s_vals, kind="stable"))
            if start <= 2 < stop:
                anti = [k for k in order if s_vals[k] < 0]
                if anti:
                    order.remove(anti[0])
                    order.insert(2 - start, anti[0])
            v[:, start:stop] = block @ s_vecs[:, order]
            parity[start:stop] = s_vals[order]
        start = stop
    return linalg.fix_phase(v), parity


def _eig(p, degeneracy_tol):
    ops = bare_operators(p.n_max)
    h = build_rabi_hamiltonian(p, ops)
    energies, vectors = linalg.hermitian_eig(h)
    vectors, parity = _symmetrize_clusters(
        energies, vectors, qubit_swap(p.n_max), degeneracy_tol
    )
    return energies, vectors, parity


def diagonalize(p: SystemParams, check_convergence=True, conv_tol=1e-8,
                degeneracy_tol=1e-9, n_check=6):
    """Diagonalise the Rabi Hamiltonian and return the dressed basis.

    With `check_convergence` the lowest `n_check` energies are recomputed
    at ``n_max + 5`` photons; a shift above `conv_tol` raises
    :class:`TruncationError`.
    """
    energies, vectors, parity = _eig(p, degeneracy_tol)
    if check_convergence:
        bigger = p.replace(n_max=p.n_max + 5)
        e_big = linalg.hermitian_eig(build_rabi_hamiltonian(bigger))[0]
        shift = float(np.max(np.abs(e_big[:n_check] - energies[:n_check])))
        if shift > conv_tol:
            raise TruncationError(
                f"energies E0..E{n_check - 1} shift by {shift:.2e} when n_max "
                f"goes {p.n_max} -> {bigger.n_max}; increase n_max"
            )
    return DressedBasis(energies, vectors, p, parity)


@dataclass(frozen=True)
class LadderTable:
    """Normalised energies (E_n - E_0) / omega_q, one row per coupling."""

    g: np.ndarray
    levels: np.ndarray

    @property
    def n_levels(self):
        return self.levels.shape[1]


def ladder_sweep(p: SystemParams, g_grid, n_levels=8, workers=None,
                 check_convergence=True):
    """Diagonalise at each coupling in `g_grid`.

    Grid points run in a thread pool when `workers` > 1; rows are always
    returned in grid order.
    """
    g_grid = np.asarray(g_grid, dtype=float)
    if g_grid.ndim != 1 or g_grid.size == 0:
        raise ValueError("g_grid must be a non-empty 1-D array")
    if np.any(np.diff(g_grid) < 0):
        raise ValueError("g_grid must be ascending")

    def row(g):
        d = diagonalize(p.replace(g=float(g)), check_convergence=check_convergence)
        e = d.energies
        return (e[1:n_levels + 1] - e[0]) / p.omega_q

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, g_grid))
    else:
        rows = [row(g) for g in g_grid]
    return LadderTable(g_grid, np.array(rows))


def find_anticrossing(p: SystemParams, level_pair=(3, 4), g_bracket=(0.15, 0.25),
                      xatol=1e-7):
    """Minimise the gap E_n - E_m over g inside `g_bracket`.

    Returns ``(g_star, gap)``.  Raises ``ValueError`` when the minimum sits
    on the bracket boundary.
    """
    m, n = level_pair
    lo, hi = map(float, g_bracket)
    if not lo < hi:
        raise ValueError(f"bracket must satisfy g_lo < g_hi, got {g_bracket}")

    def gap(g):
        e = _eig(p.replace(g=float(g)), 1e-9)[0]
        return float(e[n] - e[m])

    res = scipy.optimize.minimize_scalar(
        gap, bounds=(lo, hi), method="bounded", options={"xatol": xatol}
    )
    g_star = float(res.x)
    edge = 100 * xatol
    if g_star - lo < edge or hi - g_star < edge or res.fun >= min(gap(lo), gap(hi)):
        raise ValueError(
            f"no interior minimum of E{n} - E{m} in bracket ({lo}, {hi}); "
            f"optimiser stopped at g = {g_star:.6g}"
        )
    diagonalize(p.replace(g=g_star))
    return g_star, float(res.fun)
