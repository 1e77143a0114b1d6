"""Named parameter sets for the figure data.

Panels a-f differ only in the dissipation rates (kappa, gamma), given in
units of omega_a = 1e-3 omega_q; the drive is epsilon = 8 omega_a.  The
``fig4*`` sets sit at the avoided crossing (g = 0.2), the ``fig6*`` sets at
the level crossing (g = 0.7056).
"""
from __future__ import annotations

from .model import OMEGA_A, SystemParams

G_AVOIDED = 0.2
G_CROSSING = 0.7056

_PANELS = {
    "a": (2.0, 0.1),
    "b": (2.0, 0.02),
    "c": (2.0, 0.01),
    "d": (1.0, 0.02),
    "e": (4.0, 0.02),
    "f": (6.0, 0.02),
}

#: Rates used for the relaxation-coefficient sweep.
RATES_DEFAULTS = {"kappa": 2e-3, "gamma": 2e-5}


def _build():
    out = {}
    for fig, g in (("fig4", G_AVOIDED), ("fig6", G_CROSSING)):
        for panel, (kappa, gamma) in _PANELS.items():
            out[fig + panel] = {
                "g": g,
                "kappa": kappa * OMEGA_A,
                "gamma": gamma * OMEGA_A,
                "epsilon": 8.0 * OMEGA_A,
            }
    return out


PRESETS = _build()


def preset_names():
    return sorted(PRESETS)


def get_preset(name):
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; choose from {', '.join(preset_names())}"
        ) from None


def preset_params(name, **overrides):
    values = get_preset(name)
    values.update(overrides)
    return SystemParams(**values)
