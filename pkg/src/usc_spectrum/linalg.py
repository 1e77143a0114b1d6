"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128`` in
numpy's default row-major layout.  The routines here wrap LAPACK (through
numpy/scipy) and add the input validation, tolerance checks and phase
conventions the physics modules rely on.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.integrate
import scipy.linalg

__all__ = [
    "LinalgError",
    "NotHermitianError",
    "SingularMatrixError",
    "PropagationError",
    "as_matrix",
    "hermitian_eig",
    "general_eig",
    "solve_linear",
    "kron",
    "propagate_ode",
    "propagate_ode_grid",
    "fix_phase",
]

HERMITIAN_TOL = 1e-10
PIVOT_TOL = 1e-14


class LinalgError(ValueError):
    """Base class for linear-algebra failures."""


class NotHermitianError(LinalgError):
    pass


class SingularMatrixError(LinalgError):
    pass


class PropagationError(RuntimeError):
    """Raised when the ODE integrator cannot reach the requested tolerance."""


def as_matrix(a, name="matrix"):
    """Return `a` as a finite 2-D complex array, raising otherwise."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise LinalgError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinalgError(f"{name} contains NaN or Inf entries")
    return m


def _require_square(m, name):
    if m.shape[0] != m.shape[1]:
        raise LinalgError(f"{name} must be square, got shape {m.shape}")


def fix_phase(vectors, tol=1e-8):
    """Rotate each column so its largest-magnitude component is real positive.

    Components within `tol` (relative) of the maximum count as ties; the one
    with the lowest index wins so the choice is stable across platforms.
    """
    v = np.array(vectors, dtype=complex, copy=True)
    mags = np.abs(v)
    for k in range(v.shape[1]):
        col = mags[:, k]
        top = col.max()
        if top == 0.0:
            continue
        idx = int(np.flatnonzero(col >= top * (1.0 - tol))[0])
        v[:, k] *= np.conj(v[idx, k]) / abs(v[idx, k])
        v[idx, k] = abs(v[idx, k])
    return v


def hermitian_eig(h, herm_tol=HERMITIAN_TOL):
    """Eigen-decompose a Hermitian matrix.

    Returns ``(energies, vectors)`` with energies ascending and eigenvectors
    as orthonormal columns, each phase-fixed by :func:`fix_phase`.
    """
    h = as_matrix(h, "h")
    _require_square(h, "h")
    norm = np.linalg.norm(h)
    defect = np.linalg.norm(h - h.conj().T)
    if defect > herm_tol * max(1.0, norm):
        raise NotHermitianError(
            f"matrix is not Hermitian: ||h - h^dag|| = {defect:.3e} "
            f"(limit {herm_tol * max(1.0, norm):.3e})"
        )
    energies, vectors = np.linalg.eigh(0.5 * (h + h.conj().T))
    return energies, fix_phase(vectors)


def general_eig(a):
    """Eigenvalues and right eigenvectors of a general square matrix."""
    a = as_matrix(a, "a")
    _require_square(a, "a")
    return np.linalg.eig(a)


def solve_linear(a, b, context=None, pivot_tol=PIVOT_TOL):
    """Solve ``a @ x = b`` by LU factorisation with a pivot-size guard.

    `b` may be a vector or a matrix of right-hand sides.  `context` is
    folded into the error message when the matrix is numerically singular
    (for example the frequency at which a resolvent was requested).
    """
    a = as_matrix(a, "a")
    _require_square(a, "a")
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != a.shape[0]:
        raise LinalgError(
            f"right-hand side has length {b.shape[0]}, expected {a.shape[0]}"
        )
    with warnings.catch_warnings():
        # an exactly zero pivot is reported below with more context
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    smallest = np.min(np.abs(np.diag(lu)))
    scale = np.linalg.norm(a)
    if smallest <= pivot_tol * scale:
        where = f" ({context})" if context else ""
        raise SingularMatrixError(
            f"matrix is numerically singular{where}: smallest pivot "
            f"{smallest:.3e} vs norm {scale:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def kron(a, b):
    """Kronecker product of two matrices."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def _integrate(generator, v0, t_end, t_eval, tol, max_steps):
    g = as_matrix(generator, "generator")
    _require_square(g, "generator")
    v0 = np.asarray(v0, dtype=complex)
    if t_end < 0:
        raise ValueError(f"propagation time must be non-negative, got {t_end}")
    calls = 0
    # DOP853 makes 12 evaluations per accepted step.
    budget = 12 * max_steps

    def rhs(_t, y):
        nonlocal calls
        calls += 1
        if calls > budget:
            raise PropagationError(
                f"step budget of {max_steps} exhausted before t = {t_end}"
            )
        return g @ y

    atol = tol * max(np.linalg.norm(v0), 1e-300)
    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, float(t_end)), v0, method="DOP853",
        t_eval=t_eval, rtol=tol, atol=atol,
    )
    if sol.status != 0:
        raise PropagationError(f"integrator failed: {sol.message}")
    return sol


def propagate_ode(generator, v0, t, tol=1e-10, max_steps=200_000):
    """Return ``expm(generator * t) @ v0`` by adaptive Runge-Kutta stepping."""
    v0 = np.asarray(v0, dtype=complex)
    if t == 0:
        return v0.copy()
    sol = _integrate(generator, v0, t, None, tol, max_steps)
    return sol.y[:, -1]


def propagate_ode_grid(generator, v0, times, tol=1e-10, max_steps=200_000):
    """Propagate `v0` and return the state at every entry of `times`.

    `times` must be ascending and start at or after zero; the result has
    one column per time.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D array")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and ascending")
    v0 = np.asarray(v0, dtype=complex)
    if times[-1] == 0:
        return np.repeat(v0[:, None], times.size, axis=1)
    sol = _integrate(generator, v0, times[-1], times, tol, max_steps)
    return sol.y
