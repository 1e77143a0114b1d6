"""Emission spectra of two qubits ultrastrongly coupled to a single cavity mode.

Modules
-------
linalg       dense eigensolvers, LU solves and ODE propagation
model        Rabi Hamiltonian, dressed states, energy ladders
dissipation  dressed-state rates, driven four-level model, Liouvillian
spectrum     steady state, regression-theorem spectra, peak analysis
analytic     +- basis, rate combinations, Lorentzian decomposition
cli          command-line front end
"""
__version__ = "0.1.0"

from .model import OMEGA_A, SystemParams, diagonalize  # noqa: E402,F401
