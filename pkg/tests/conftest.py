import warnings
from dataclasses import dataclass

import numpy as np
import pytest

from usc_spectrum.dissipation import RWAWarning, build_liouvillian, effective_drive
from usc_spectrum.model import SystemParams, diagonalize
from usc_spectrum.presets import preset_params
from usc_spectrum.spectrum import (default_omega_grid, emission_operators,
                                   emission_spectrum, slowest_rate, steady_state)


@dataclass
class Driven:
    params: SystemParams
    dressed: object
    model: object
    L: object
    ss: object
    ops: object
    omega: np.ndarray
    spectrum: object


def build_driven(params):
    d = diagonalize(params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RWAWarning)
        m = effective_drive(d, params)
    L = build_liouvillian(m)
    ss = steady_state(L)
    ops = emission_operators(L)
    omega = default_omega_grid(m.Omega, slowest_rate(L))
    s = emission_spectrum(L, ss, ops, omega)
    return Driven(params, d, m, L, ss, ops, omega, s)


@pytest.fixture(scope="session")
def fig4b():
    return build_driven(preset_params("fig4b"))


@pytest.fixture(scope="session")
def fig6b():
    return build_driven(preset_params("fig6b"))


@pytest.fixture(scope="session")
def dressed_default():
    return diagonalize(SystemParams())


# Acceptance results are collected here and echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
