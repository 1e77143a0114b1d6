"""Command-line front end: figure data as CSV or JSON tables.

Physical inputs come from, in increasing priority, the built-in defaults,
a named preset, a JSON config file and explicit flags.  Frequencies and
rates are in units of omega_q; the ``*-wa`` variants take units of
omega_a = 1e-3 omega_q.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (lorentzian_decomposition, linewidth_ratio_sweep,
                       peak_height_ratios, rate_combinations)
from .dissipation import (build_liouvillian, effective_drive, transition_table,
                          truncation_audit)
from .linalg import PropagationError, SingularMatrixError
from .model import (OMEGA_A, SystemParams, TruncationError, diagonalize,
                    find_anticrossing, ladder_sweep)
from .presets import RATES_DEFAULTS, get_preset, preset_names
from .spectrum import (ResolutionError, SpectrumResult, SteadyStateError,
                       default_omega_grid, emission_operators, emission_spectrum,
                       peak_analysis, slowest_rate, steady_state)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


# flag dest -> (SystemParams field, scale)
PARAM_KEYS = {
    "wc_ratio": ("omega_c", 1.0),
    "theta": ("theta", 1.0),
    "g": ("g", 1.0),
    "kappa": ("kappa", 1.0),
    "kappa_wa": ("kappa", OMEGA_A),
    "gamma": ("gamma", 1.0),
    "gamma_wa": ("gamma", OMEGA_A),
    "eps": ("epsilon", 1.0),
    "eps_wa": ("epsilon", OMEGA_A),
    "omega_l": ("omega_l", 1.0),
    "nmax": ("n_max", 1),
}

COMMAND_DEFAULTS = {
    "ladder": {"gmin": 0.0, "gmax": 0.8, "npts": 161, "levels": 8},
    "rates": {"gmin": 0.0, "gmax": 0.8, "npts": 161},
    "spectrum": {"wmin_wa": None, "wmax_wa": None, "npts": None},
    "linewidths": {
        "couplings": [0.2, 0.7056],
        "gamma_grid_wa": [round(x, 12) for x in np.geomspace(0.005, 0.2, 41)],
        "kappa_grid_wa": [round(x, 12) for x in np.geomspace(0.5, 8.0, 41)],
    },
    "audit": {"levels": 4, "enlarged": 8, "cutoff": 0.1, "tol": 1e-3, "strict": False},
}


# ---------------------------------------------------------------- tables

def _fmt(value):
    if isinstance(value, str):
        if any(c in value for c in ",\n\r\""):
            raise ConfigError(f"string cell {value!r} cannot be written to CSV")
        return value
    return "%.17g" % value


def write_table(path, columns, config, fmt="csv"):
    """Write equal-length `columns` (name -> sequence) with the run config."""
    names = list(columns)
    data = {k: [v if isinstance(v, str) else float(v) for v in columns[k]] for k in names}
    lengths = {len(v) for v in data.values()}
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
    path = Path(path)
    if fmt == "json":
        text = json.dumps({"config": config, "columns": data}, indent=1) + "\n"
    else:
        lines = [f"# {k} = {json.dumps(config[k])}" for k in sorted(config)]
        lines.append(",".join(names))
        n = lengths.pop() if lengths else 0
        for i in range(n):
            lines.append(",".join(_fmt(data[k][i]) for k in names))
        text = "\n".join(lines) + "\n"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_table(path):
    """Inverse of :func:`write_table`; returns ``(columns, config)``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        obj = json.loads(text)
        return obj["columns"], obj["config"]
    config = {}
    rows = []
    header = None
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" = ")
            config[key] = json.loads(value)
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    columns = {}
    for j, name in enumerate(header or []):
        cells = [r[j] for r in rows]
        try:
            columns[name] = [float(c) for c in cells]
        except ValueError:
            columns[name] = cells
    return columns, config


# ---------------------------------------------------------------- config

def _load_config_file(path):
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    return obj


def resolve(args):
    """Merge defaults, preset, config file and flags.

    Returns ``(params, options, config_dict)``.
    """
    command = args.command
    file_cfg = _load_config_file(args.config)
    allowed = set(PARAM_KEYS) | set(COMMAND_DEFAULTS[command]) | {"preset", "format", "out", "workers"}
    unknown = sorted(set(file_cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values = {}
    if command == "rates":
        values.update(RATES_DEFAULTS)
    preset = args.preset if args.preset is not None else file_cfg.get("preset")
    if preset is not None:
        try:
            values.update(get_preset(preset))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None

    for source in (file_cfg, vars(args)):
        for key, (field_name, scale) in PARAM_KEYS.items():
            v = source.get(key)
            if v is None:
                continue
            if field_name == "n_max":
                if int(v) != v:
                    raise ConfigError(f"nmax must be an integer, got {v}")
                values[field_name] = int(v)
            else:
                values[field_name] = float(v) * scale
    try:
        params = SystemParams(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    options = {}
    for key, default in COMMAND_DEFAULTS[command].items():
        v = getattr(args, key, None)
        if v is None:
            v = file_cfg.get(key, default)
        options[key] = v
    for key in ("format", "out", "workers"):
        v = getattr(args, key, None)
        options[key] = v if v is not None else file_cfg.get(key)
    options["format"] = options["format"] or "csv"
    options["_g_explicit"] = args.g is not None or "g" in file_cfg
    if options["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {options['format']!r}")

    config = {"command": command, "preset": preset, "version": __version__}
    config.update({f"param.{k}": v for k, v in params.to_dict().items()})
    config.update({f"option.{k}": v for k, v in options.items()
                   if k not in ("out", "workers") and not k.startswith("_")})
    return params, options, config


def _out_path(options, command, suffix=""):
    ext = "." + options["format"]
    base = Path(options["out"] or f"{command}{ext}")
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    return base.with_name(base.name + suffix + ext)


def _grid(lo, hi, n, name):
    n = int(n)
    if n < 1:
        raise ConfigError(f"{name}: npts must be >= 1")
    if n > 1 and not hi > lo:
        raise ConfigError(f"{name}: need max > min")
    return np.linspace(lo, hi, n) if n > 1 else np.array([float(lo)])


def _positive_grid(values, name):
    grid = np.asarray(values, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ConfigError(f"{name} must be a positive ascending list")
    return grid


def _say(msg):
    print(msg)


def _echo_warnings(fn, *args, **kwargs):
    """Call `fn`, repeating any warnings on stderr as one-line messages."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = fn(*args, **kwargs)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return result


# ---------------------------------------------------------------- commands

def cmd_ladder(params, options, config):
    g = _grid(options["gmin"], options["gmax"], options["npts"], "ladder")
    if np.any(g < 0):
        raise ConfigError("couplings must be >= 0")
    n_levels = int(options["levels"])
    table = ladder_sweep(params, g, n_levels=n_levels, workers=options["workers"])
    cols = {"g_over_wq": table.g}
    for k in range(table.n_levels):
        cols[f"E{k + 1}_over_wq"] = table.levels[:, k]
    path = write_table(_out_path(options, "ladder"), cols, config, options["format"])
    _say(f"wrote {path}")
    for pair, bracket, kind in (((3, 4), (0.15, 0.25), "avoided crossing"),
                                ((2, 3), (0.65, 0.75), "level crossing")):
        lo, hi = max(bracket[0], g[0]), min(bracket[1], g[-1])
        if hi - lo < 0.5 * (bracket[1] - bracket[0]):
            continue
        try:
            g_star, gap = find_anticrossing(params, pair, (lo, hi))
        except ValueError as exc:
            _say(f"{kind} E{pair[1]}-E{pair[0]}: not found ({exc})")
            continue
        _say(f"{kind} E{pair[1]}-E{pair[0]}: g/wq = {g_star:.6f}, gap/wq = {gap:.6g}")
    return [path]


def _rates_row(params, g):
    q = params.replace(g=float(g))
    t = transition_table(diagonalize(q), q)
    return [t.rate(j, k) for j in range(4) for k in range(j)]


def cmd_rates(params, options, config):
    g = _grid(options["gmin"], options["gmax"], options["npts"], "rates")
    if np.any(g < 0):
        raise ConfigError("couplings must be >= 0")
    workers = options["workers"]
    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda x: _rates_row(params, x), g))
    else:
        rows = [_rates_row(params, x) for x in g]
    rows = np.array(rows)
    cols = {"g_over_wq": g}
    names = [f"Gamma{j}{k}_over_wq" for j in range(4) for k in range(j)]
    for i, name in enumerate(names):
        cols[name] = rows[:, i]
    path = write_table(_out_path(options, "rates"), cols, config, options["format"])
    _say(f"wrote {path}")
    return [path]


def _spectrum_columns(omega, total, parts):
    cols = {"omega_over_wa": omega / OMEGA_A, "S_total": total}
    for k in ("S1", "S2", "S3"):
        if k in parts:
            cols[k] = parts[k]
    return cols


def _peak_rows(source, peaks, rows):
    for p in peaks:
        rows["source"].append(source)
        rows["kind"].append(p.kind)
        rows["position_over_wa"].append(p.position / OMEGA_A)
        rows["height"].append(p.height)
        rows["fwhm_over_wa"].append(p.fwhm / OMEGA_A)


def cmd_spectrum(params, options, config):
    d = diagonalize(params)
    model = _echo_warnings(effective_drive, d, params)
    L = build_liouvillian(model)
    ss = steady_state(L)
    ops = emission_operators(L)
    if options["npts"] is not None or options["wmin_wa"] is not None:
        span = 1.5 * max(abs(model.Omega), OMEGA_A) / OMEGA_A
        lo = options["wmin_wa"] if options["wmin_wa"] is not None else -span
        hi = options["wmax_wa"] if options["wmax_wa"] is not None else span
        omega = _grid(lo, hi, options["npts"] or 2001, "spectrum") * OMEGA_A
    else:
        omega = default_omega_grid(model.Omega, slowest_rate(L))
    s = emission_spectrum(L, ss, ops, omega, workers=options["workers"])
    config = dict(config, Omega_over_wa=model.Omega / OMEGA_A,
                  cross_weight=s.cross_weight)
    out = []
    out.append(write_table(_out_path(options, "spectrum"),
                           _spectrum_columns(omega, s.total, s.parts), config,
                           options["format"]))
    rows = {"source": [], "kind": [], "position_over_wa": [], "height": [],
            "fwhm_over_wa": []}
    _peak_rows("numeric", peak_analysis(s), rows)
    _say(f"Omega/wa = {model.Omega / OMEGA_A:.6g}")

    if model.Omega != 0:
        rc = rate_combinations(model.rates, model.Omega)
        alpha = model.rates.alpha
        alphas = {k: alpha[model.pos(int(k[0])), model.pos(int(k[1]))]
                  for k in ("01", "03", "13")}
        lset = lorentzian_decomposition(rc, model.Omega, ss, alphas)
        parts = {c: lset.evaluate(omega, c) for c in ("S1", "S2", "S3")}
        total = parts["S1"] + parts["S2"] + parts["S3"]
        out.append(write_table(_out_path(options, "spectrum", "_analytic"),
                               _spectrum_columns(omega, total, parts), config,
                               options["format"]))
        analytic = SpectrumResult(omega, total, parts, 0.0)
        _peak_rows("analytic", peak_analysis(analytic), rows)
        lam0 = lset["central"].lam.real
        ratios = peak_height_ratios(lset)
        _say(f"lambda0/wa = {lam0 / OMEGA_A:.6g}, "
             f"lambda1-/lambda0 = {lset['narrow-'].lam.real / lam0:.6g}, "
             f"lambda1+/lambda0 = {lset['narrow+'].lam.real / lam0:.6g}")
        _say(f"narrow/central height = {ratios['narrow/central']:.6g}")
    else:
        _say("Omega = 0: analytic decomposition skipped")
    out.append(write_table(_out_path(options, "spectrum", "_peaks"), rows, config,
                           options["format"]))
    for path in out:
        _say(f"wrote {path}")
    return out


def cmd_linewidths(params, options, config):
    couplings = [params.g] if _explicit_g(options) else list(options["couplings"])
    panels = (("gamma", _positive_grid(options["gamma_grid_wa"], "gamma_grid_wa")),
              ("kappa", _positive_grid(options["kappa_grid_wa"], "kappa_grid_wa")))
    out = []
    for g in couplings:
        p = params.replace(g=float(g))
        for sweep, grid_wa in panels:
            t = linewidth_ratio_sweep(p, sweep, grid_wa * OMEGA_A,
                                      workers=options["workers"])
            cols = {
                f"{sweep}_over_wa": grid_wa,
                "lambda0_over_wa": t.lam0 / OMEGA_A,
                "lambda1m_over_wa": t.lam1_minus / OMEGA_A,
                "lambda1p_over_wa": t.lam1_plus / OMEGA_A,
                "ratio_minus": t.ratio_minus,
                "ratio_plus": t.ratio_plus,
            }
            cfg = dict(config, **{"sweep": sweep, "sweep_g": float(g)})
            path = write_table(_out_path(options, "linewidths", f"_{sweep}_g{g:g}"),
                               cols, cfg, options["format"])
            trend = np.diff(t.ratio_minus)
            kind = "increasing" if np.all(trend > 0) else (
                "decreasing" if np.all(trend < 0) else "non-monotone")
            _say(f"g/wq = {g:g}, {sweep} sweep: lambda1-/lambda0 {kind}, "
                 f"range [{t.ratio_minus.min():.4g}, {t.ratio_minus.max():.4g}]")
            _say(f"wrote {path}")
            out.append(path)
    return out


def _explicit_g(options):
    return options.get("_g_explicit", False)


def cmd_audit(params, options, config):
    n, big = int(options["levels"]), int(options["enlarged"])
    rep = _echo_warnings(truncation_audit, diagonalize(params), params, n_levels=n,
                         enlarged=big, near_resonant_cutoff=float(options["cutoff"]))
    pops_large = rep.populations_large
    cols = {
        "level": np.arange(big),
        "population_small": np.concatenate([rep.populations_small,
                                            np.full(big - n, 0.0)]),
        "population_large": pops_large,
    }
    config = dict(config, population_deviation=rep.population_deviation,
                  spectrum_deviation=rep.spectrum_deviation,
                  leaked_population=rep.leaked_population)
    path = write_table(_out_path(options, "audit"), cols, config, options["format"])
    ok = rep.passed(float(options["tol"]))
    _say(f"population deviation {rep.population_deviation:.3e}, spectrum deviation "
         f"{rep.spectrum_deviation:.3e}, leaked population {rep.leaked_population:.3e}")
    _say(f"audit {'PASS' if ok else 'FAIL'} at tolerance {options['tol']:g}")
    _say(f"wrote {path}")
    if options["strict"] and not ok:
        raise AuditFailure(rep.population_deviation)
    return [path]


class AuditFailure(RuntimeError):
    pass


COMMANDS = {
    "ladder": cmd_ladder,
    "rates": cmd_rates,
    "spectrum": cmd_spectrum,
    "linewidths": cmd_linewidths,
    "audit": cmd_audit,
}


# ---------------------------------------------------------------- parser

def _common(p):
    p.add_argument("--preset", help=f"parameter preset ({', '.join(preset_names())})")
    p.add_argument("--config", help="JSON file with parameters and options")
    p.add_argument("--wc-ratio", type=float, dest="wc_ratio", help="omega_c / omega_q")
    p.add_argument("--theta", type=float, help="qubit mixing angle [rad]")
    p.add_argument("--g", type=float, help="coupling g / omega_q")
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--kappa", type=float, help="cavity rate [omega_q]")
    rate.add_argument("--kappa-wa", type=float, dest="kappa_wa", help="cavity rate [omega_a]")
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--gamma", type=float, help="qubit rate [omega_q]")
    rate.add_argument("--gamma-wa", type=float, dest="gamma_wa", help="qubit rate [omega_a]")
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--eps", type=float, help="drive amplitude [omega_q]")
    rate.add_argument("--eps-wa", type=float, dest="eps_wa", help="drive amplitude [omega_a]")
    p.add_argument("--omega-l", type=float, dest="omega_l",
                   help="drive frequency [omega_q] (default: E3 - E0)")
    p.add_argument("--nmax", type=int, help="Fock cutoff")
    p.add_argument("--out", help="output file (suffixes are added for extra tables)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int, help="threads for grid evaluation")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="usc-spectrum",
        description="Two qubits ultrastrongly coupled to a cavity: energy ladders, "
                    "relaxation rates and emission spectra.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ladder", help="normalised energy ladder versus g")
    _common(p)
    p.add_argument("--gmin", type=float)
    p.add_argument("--gmax", type=float)
    p.add_argument("--npts", type=int)
    p.add_argument("--levels", type=int, help="number of excited levels")

    p = sub.add_parser("rates", help="relaxation rates versus g")
    _common(p)
    p.add_argument("--gmin", type=float)
    p.add_argument("--gmax", type=float)
    p.add_argument("--npts", type=int)

    p = sub.add_parser("spectrum", help="numerical and analytic emission spectrum")
    _common(p)
    p.add_argument("--wmin-wa", type=float, dest="wmin_wa")
    p.add_argument("--wmax-wa", type=float, dest="wmax_wa")
    p.add_argument("--npts", type=int)

    p = sub.add_parser("linewidths", help="relative narrow-line widths versus gamma and kappa")
    _common(p)
    p.add_argument("--gamma-grid-wa", type=float, nargs="+", dest="gamma_grid_wa")
    p.add_argument("--kappa-grid-wa", type=float, nargs="+", dest="kappa_grid_wa")

    p = sub.add_parser("audit", help="compare the four-level model with a larger one")
    _common(p)
    p.add_argument("--levels", type=int)
    p.add_argument("--enlarged", type=int)
    p.add_argument("--cutoff", type=float, help="detuning below which drive terms are kept")
    p.add_argument("--tol", type=float)
    p.add_argument("--strict", action="store_true", default=None,
                   help="exit with status 3 when the audit fails")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params, options, config = resolve(args)
        COMMANDS[args.command](params, options, config)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, SteadyStateError, SingularMatrixError, PropagationError,
            ResolutionError, AuditFailure) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
