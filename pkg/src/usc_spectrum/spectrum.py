"""Steady state, two-time correlations and the incoherent emission spectrum.

For a stationary state the regression theorem gives

    <dA(t) dB(t + tau)> = Tr[dB exp(L tau) (rho_ss dA)],

with ``dO = O - <O>``.  Its one-sided Fourier transform is evaluated either
through the resolvent ``(-L - i w)^-1`` (the production path) or by
propagating the correlation in time and integrating numerically (the
cross-check).  Frequencies are in units of omega_q and measured in the
frame of the driven model; spectra are reported with unit zero-point
amplitude and no further normalisation.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.signal

from . import linalg
from .dissipation import Liouvillian, unvec, vec
from .model import OMEGA_A

__all__ = [
    "SteadyStateError",
    "ResolutionError",
    "SteadyState",
    "EmissionOperators",
    "SpectrumResult",
    "Peak",
    "steady_state",
    "correlation",
    "emission_operators",
    "emission_spectrum",
    "resolvent_spectrum",
    "transition_spectrum",
    "time_domain_spectrum",
    "default_omega_grid",
    "slowest_rate",
    "peak_analysis",
    "find_peaks",
    "decompose_central",
]


class SteadyStateError(RuntimeError):
    pass


class ResolutionError(ValueError):
    """A spectral peak is sampled by too few grid points."""


@dataclass(frozen=True)
class SteadyState:
    rho: np.ndarray
    residual: float
    levels: tuple

    def element(self, m, n):
        """rho_mn addressed by dressed-level index."""
        return complex(self.rho[self.levels.index(m), self.levels.index(n)])

    @property
    def populations(self):
        return np.real(np.diag(self.rho)).copy()


def steady_state(L: Liouvillian, uniqueness_tol=1e-10):
    """Unit-trace null vector of the Liouvillian.

    One row of L is replaced by the trace functional and the resulting
    system is solved directly.  A second eigenvalue of magnitude below
    `uniqueness_tol` means the stationary state is not unique.
    """
    m = L.matrix
    eigs = np.sort(np.abs(linalg.general_eig(m)[0]))
    if eigs.size > 1 and eigs[1] < uniqueness_tol:
        raise SteadyStateError(
            f"stationary state is not unique: second eigenvalue magnitude {eigs[1]:.2e}"
        )
    system = m.copy()
    system[0, :] = L.trace_row()
    rhs = np.zeros(m.shape[0], dtype=complex)
    rhs[0] = 1.0
    x = linalg.solve_linear(system, rhs, context="steady state")
    rho = unvec(x, L.dim)
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(np.linalg.norm(m @ vec(rho)))
    return SteadyState(rho, residual, L.model.levels)


def _fluctuation(op, rho):
    op = np.asarray(op, dtype=complex)
    return op - np.trace(op @ rho) * np.eye(op.shape[0])


def correlation(L: Liouvillian, ss: SteadyState, A, B, tau_grid, tol=1e-10):
    """Stationary ``<dA(t) dB(t + tau)>`` on an ascending `tau_grid`.

    Propagates ``rho_ss dA`` with the adaptive ODE integrator.
    """
    dA = _fluctuation(A, ss.rho)
    dB = _fluctuation(B, ss.rho)
    x0 = vec(ss.rho @ dA)
    states = linalg.propagate_ode_grid(L.matrix, x0, tau_grid, tol=tol)
    return vec(dB.T) @ states


def slowest_rate(L: Liouvillian, floor=1e-14):
    """Smallest nonzero decay rate -Re(lambda) of the Liouvillian."""
    rates = -np.real(linalg.general_eig(L.matrix)[0])
    scale = max(np.max(np.abs(rates)), floor)
    rates = rates[rates > 1e-9 * scale]
    return float(np.min(rates)) if rates.size else 0.0


def _resolvent_columns(L, ss, omegas, rhs, rows, workers=None):
    """Evaluate ``2 Re rows[k] . (-L - i w)^-1 rhs[:, k]`` for every w.

    The steady-state projector ``s |rho_ss><Tr|`` is added to -L.  For
    trace-free right-hand sides (always the case after subtracting mean
    values) the solution is unchanged, and the shifted matrix stays
    regular at w = 0.
    """
    m = L.matrix
    n2 = m.shape[0]
    s = np.linalg.norm(m)
    base = -m + s * np.outer(vec(ss.rho), L.trace_row())
    eye = np.eye(n2)
    omegas = np.asarray(omegas, dtype=float)

    def one(w):
        y = linalg.solve_linear(base - 1j * w * eye, rhs, context=f"omega = {w:.6g}")
        return 2.0 * np.real(np.einsum("ik,ik->k", rows.T, y))

    if workers and workers > 1 and omegas.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, omegas))
    else:
        out = [one(w) for w in omegas]
    return np.array(out).reshape(omegas.size, rhs.shape[1])


def resolvent_spectrum(L: Liouvillian, ss: SteadyState, A, B, omegas, workers=None):
    """``2 Re int_0^inf <dA(t) dB(t + tau)> exp(i w tau) dtau`` on a grid."""
    dA = _fluctuation(A, ss.rho)
    dB = _fluctuation(B, ss.rho)
    rhs = vec(ss.rho @ dA)[:, None]
    rows = vec(dB.T)[:, None].T
    return _resolvent_columns(L, ss, omegas, rhs, rows, workers)[:, 0]


def _sigma(n, m, k):
    s = np.zeros((n, n), dtype=complex)
    s[m, k] = 1.0
    return s


def transition_spectrum(L: Liouvillian, ss: SteadyState, m, n, omegas, workers=None):
    """Spectrum of the ``m <- n`` transition: A = sigma_nm, B = sigma_mn."""
    levels = L.model.levels
    pm, pn = levels.index(m), levels.index(n)
    return resolvent_spectrum(
        L, ss, _sigma(L.dim, pn, pm), _sigma(L.dim, pm, pn), omegas, workers
    )


@dataclass(frozen=True)
class EmissionOperators:
    """Positive-frequency field derivative ``Xdot_plus = sum alpha_mn sigma_mn``.

    `components` lists ``(label, m, n, alpha_mn)`` for the three transitions
    that carry the emission; `residual_alpha` is the largest |alpha| among
    the remaining upper-triangular entries (zero by qubit-exchange symmetry).
    """

    Xdot_plus: np.ndarray
    components: tuple
    residual_alpha: float
    X0: float = 1.0

    @property
    def Xdot_minus(self):
        return self.Xdot_plus.conj().T


COMPONENT_TRANSITIONS = (("S1", 0, 3), ("S2", 0, 1), ("S3", 1, 3))


def emission_operators(L: Liouvillian, X0=1.0):
    model = L.model
    alpha = model.rates.alpha
    n = model.dim
    xp = X0 * np.triu(alpha, 1)
    comps = []
    named = set()
    for label, m, k in COMPONENT_TRANSITIONS:
        if m in model.levels and k in model.levels:
            pm, pk = model.pos(m), model.pos(k)
            comps.append((label, m, k, complex(X0 * alpha[pm, pk])))
            named.add((pm, pk))
    rest = [abs(xp[i, j]) for i in range(n) for j in range(i + 1, n) if (i, j) not in named]
    return EmissionOperators(xp, tuple(comps), float(max(rest, default=0.0)), X0)


@dataclass(frozen=True)
class SpectrumResult:
    """Incoherent spectrum sampled at `omega` (units of omega_q, drive frame)."""

    omega: np.ndarray
    total: np.ndarray
    parts: dict
    cross_weight: float
    note: str = "unit zero-point amplitude, unnormalised"
    meta: dict = field(default_factory=dict)

    @property
    def omega_wa(self):
        return self.omega / OMEGA_A

    @property
    def component_sum(self):
        return sum(self.parts.values())

    def normalized(self):
        peak = float(np.max(self.total))
        scale = 1.0 / peak if peak > 0 else 1.0
        return SpectrumResult(
            self.omega, self.total * scale,
            {k: v * scale for k, v in self.parts.items()},
            self.cross_weight, "normalised to unit peak", dict(self.meta),
        )


def emission_spectrum(L: Liouvillian, ss: SteadyState, ops: EmissionOperators,
                      omegas, workers=None):
    """Total incoherent spectrum and its three transition components.

    `cross_weight` is ``max|total - sum(parts)| / max|total|``: the share of
    cross-correlations between different transitions, which should vanish.
    """
    omegas = np.asarray(omegas, dtype=float)
    if not np.all(np.isfinite(omegas)):
        raise ValueError("frequency grid must be finite")
    n = L.dim
    rho = ss.rho
    xm = ops.Xdot_minus
    xp = ops.Xdot_plus
    rhs = [vec(rho @ _fluctuation(xm, rho))]
    rows = [vec(_fluctuation(xp, rho).T)]
    weights = [1.0]
    for _label, m, k, a in ops.components:
        pm, pk = L.model.pos(m), L.model.pos(k)
        rhs.append(vec(rho @ _fluctuation(_sigma(n, pk, pm), rho)))
        rows.append(vec(_fluctuation(_sigma(n, pm, pk), rho).T))
        weights.append(abs(a) ** 2)
    values = _resolvent_columns(
        L, ss, omegas, np.array(rhs).T, np.array(rows), workers
    ) * np.array(weights)
    total = values[:, 0]
    parts = {c[0]: values[:, i + 1] for i, c in enumerate(ops.components)}
    peak = float(np.max(np.abs(total))) if total.size else 0.0
    resid = float(np.max(np.abs(total - sum(parts.values())))) if parts else 0.0
    cross = resid / peak if peak > 0 else resid
    return SpectrumResult(omegas, total, parts, cross)


def default_omega_grid(Omega, narrow_rate, n_main=2001, n_fine=401, span=1.5,
                       fine_halfwidth=10.0):
    """Uniform grid over ±span*|Omega| merged with a fine window at 0.

    The fine window covers ±fine_halfwidth * narrow_rate so that a line of
    half-width `narrow_rate` is resolved.
    """
    om = abs(Omega)
    if om == 0:
        om = max(narrow_rate, OMEGA_A)
    main = np.linspace(-span * om, span * om, n_main)
    if narrow_rate > 0 and n_fine > 1:
        fine = np.linspace(-fine_halfwidth * narrow_rate, fine_halfwidth * narrow_rate, n_fine)
        main = np.union1d(main, fine)
    return main


def time_domain_spectrum(L: Liouvillian, ss: SteadyState, A, B, omegas,
                         tol=1e-11, decay_lengths=30.0, samples_per_period=48):
    """Spectrum from the propagated correlation and Simpson quadrature.

    The correlation is integrated out to `decay_lengths` times the slowest
    decay time; the sampling step resolves the fastest oscillation present
    in either the correlation or the Fourier kernel.
    """
    omegas = np.asarray(omegas, dtype=float)
    eig = linalg.general_eig(L.matrix)[0]
    lam_min = slowest_rate(L)
    if lam_min <= 0:
        raise SteadyStateError("Liouvillian has no decaying modes")
    t_end = decay_lengths / lam_min
    fastest = np.max(np.abs(eig.imag)) + np.max(np.abs(omegas))
    fastest = max(fastest, lam_min)
    dt = 2 * np.pi / fastest / samples_per_period
    n = int(np.ceil(t_end / dt)) | 1
    taus = np.linspace(0.0, t_end, n)
    c = correlation(L, ss, A, B, taus, tol=tol)
    out = np.empty(omegas.size)
    for i, w in enumerate(omegas):
        out[i] = 2.0 * np.real(scipy.integrate.simpson(c * np.exp(1j * w * taus), x=taus))
    return out


@dataclass(frozen=True)
class Peak:
    position: float
    height: float
    fwhm: float
    kind: str = "broad"


def _half_crossings(x, y, i0, level):
    """Interpolated positions where y falls below `level` either side of i0."""
    left = i0
    while left > 0 and y[left] > level:
        left -= 1
    right = i0
    while right < len(y) - 1 and y[right] > level:
        right += 1
    if y[left] > level or y[right] > level:
        return None
    xl = x[left] + (level - y[left]) * (x[left + 1] - x[left]) / (y[left + 1] - y[left])
    xr = x[right - 1] + (level - y[right - 1]) * (x[right] - x[right - 1]) / (
        y[right] - y[right - 1])
    return xl, xr


def _refine(x, y, i):
    if i == 0 or i == len(y) - 1:
        return x[i], y[i]
    x0, x1, x2 = x[i - 1:i + 2]
    y0, y1, y2 = y[i - 1:i + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / denom
    if a >= 0:
        return x1, y1
    xv = -b / (2 * a)
    c = y1 - a * x1 ** 2 - b * x1
    return xv, a * xv ** 2 + b * xv + c


def find_peaks(omega, values, min_points=7, rel_prominence=1e-3, label="peak"):
    """Local maxima with parabolic refinement.

    Widths are full widths at half prominence, so a line riding on the wing
    of a neighbour is measured against its own base rather than zero.  On a
    steep wing the higher base is used and the width comes out somewhat
    narrow; numerical and analytic curves share this estimator.
    """
    x = np.asarray(omega, dtype=float)
    y = np.asarray(values, dtype=float)
    top = float(np.max(y))
    idx, _ = scipy.signal.find_peaks(y, prominence=rel_prominence * abs(top))
    if idx.size == 0:
        return []
    widths, _, left, right = scipy.signal.peak_widths(y, idx, rel_height=0.5)
    grid = np.arange(x.size)
    peaks = []
    for i, wl, wr in zip(idx, left, right):
        pos, height = _refine(x, y, i)
        inside = np.count_nonzero((grid >= wl) & (grid <= wr))
        if inside < min_points:
            raise ResolutionError(
                f"{label} at {pos:.6g} spans {inside} grid points (< {min_points})"
            )
        xl, xr = np.interp([wl, wr], grid, x)
        peaks.append(Peak(float(pos), float(height), float(xr - xl)))
    return peaks


def _lorentz(x, h, w):
    return h * w * w / (w * w + x * x)


def decompose_central(omega, values, center=0.0, window=None, min_points=7,
                      min_ratio=3.0):
    """Split a composite line at `center` into broad and narrow parts.

    Fits broad + narrow Lorentzians on a smooth even background inside
    `window` (half-width), subtracts the fitted broad Lorentzian and
    measures the remaining narrow line from its half-height crossings.
    Returns ``(broad, narrow)``; `narrow` is None when the fit finds no
    line at least `min_ratio` times narrower than the broad one.
    """
    x = np.asarray(omega, dtype=float) - center
    y = np.asarray(values, dtype=float)
    if window is None:
        window = 0.5 * (x.max() - x.min())
    sel = np.abs(x) <= window
    xs, ys = x[sel], y[sel]
    i0 = int(np.argmin(np.abs(xs)))
    h0 = float(ys[i0])
    cross = _half_crossings(xs, ys, i0, 0.5 * h0)
    w_raw = 0.5 * (cross[1] - cross[0]) if cross else 0.25 * window

    def model(xv, hb, lwb, hn, lwn, b0, b1, b2):
        return (_lorentz(xv, hb, np.exp(lwb)) + _lorentz(xv, hn, np.exp(lwn))
                + b0 + b1 * xv + b2 * xv * xv)

    best = None
    sigma = np.full(xs.shape, max(h0, 1e-300))
    for wide in (2.0, 5.0, 15.0, 50.0):
        for frac in (0.2, 0.5, 0.8):
            wb = min(wide * w_raw, window)
            wn = w_raw if wide > 2.0 else w_raw / 5.0
            p0 = [frac * h0, np.log(wb), (1 - frac) * h0, np.log(wn), 0.0, 0.0, 0.0]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", scipy.optimize.OptimizeWarning)
                    popt, _ = scipy.optimize.curve_fit(model, xs, ys, p0=p0,
                                                       sigma=sigma, maxfev=20000)
            except RuntimeError:
                continue
            cost = float(np.sum((model(xs, *popt) - ys) ** 2))
            if best is None or cost < best[0]:
                best = (cost, popt)
    if best is None:
        raise ResolutionError("central line decomposition failed to converge")
    hb, lwb, hn, lwn, b0, b1, b2 = best[1]
    wb, wn = np.exp(lwb), np.exp(lwn)
    if wn > wb:
        hb, wb, hn, wn = hn, wn, hb, wb
    broad = Peak(center, float(hb), float(2 * wb), "central-broad")
    # a genuine narrow feature is much narrower than the composite line
    if hn <= 0 or hb <= 0 or wb < min_ratio * wn or min_ratio * wn > w_raw:
        # single line: report it as measured
        return Peak(center, h0, float(2 * w_raw), "central-broad"), None
    resid = ys - _lorentz(xs, hb, wb) - (b0 + b1 * xs + b2 * xs * xs)
    j = int(np.argmax(np.where(np.abs(xs) <= 3 * wn, resid, -np.inf)))
    pos, height = _refine(xs, resid, j)
    cross = _half_crossings(xs, resid, j, 0.5 * height)
    if cross is None:
        raise ResolutionError("narrow central line: half height not reached on grid")
    inside = np.count_nonzero((xs >= cross[0]) & (xs <= cross[1]))
    if inside < min_points:
        raise ResolutionError(
            f"narrow central line spans {inside} grid points (< {min_points})"
        )
    narrow = Peak(float(pos + center), float(height), float(cross[1] - cross[0]),
                  "central-narrow")
    return broad, narrow


def peak_analysis(s: SpectrumResult, min_points=7, rel_prominence=1e-3):
    """Peaks of the total spectrum, with the central line decomposed.

    Returns the local maxima in ascending position, then the fitted broad
    part of the central line and, when present, its narrow part.
    """
    peaks = find_peaks(s.omega, s.total, min_points, rel_prominence, "spectral peak")
    if not peaks:
        return peaks
    central = min(peaks, key=lambda p: abs(p.position))
    others = [abs(p.position - central.position) for p in peaks if p is not central]
    window = 0.5 * min(others) if others else None
    broad, narrow = decompose_central(s.omega, s.total, central.position, window,
                                      min_points)
    peaks.append(broad)
    if narrow is not None:
        peaks.append(narrow)
    return peaks
