"""Configuration parsing, subcommand dispatch, and machine-readable outputs.

Configs are flat INI-style files with ``[model]``, ``[sim]`` and per-command
sections.  Every run writes its artifacts plus a ``manifest.json`` naming them
and embedding the fully-resolved configuration; identical configs and seeds
produce byte-identical artifacts (timestamps live only in the manifest).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 dynamical precondition (existence / nonresonance) not met.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import NONPAIRWISE, full_field, reduced_field
from .empirics import (
    average_frequencies,
    basin_fraction,
    wedge_map,
)
from .model import (
    ModelParams,
    PreconditionError,
    all_words,
    cycle_c2,
    cycle_c2_check,
    cycle_c2_hat,
    equilibrium_state,
    lift_phases,
    reduce_phases,
    validate_word,
)
from .numerics import (
    NumericalError,
    Trajectory,
    integrate_em,
    integrate_rk4,
    itinerary,
    jacobian_fd,
    noise_stream,
)
from .spectra import word_eigenvalues
from .stability import StabilityClass, classify_m3, network_report

COMMANDS = ("eigen", "indices", "simulate", "basin", "wedge", "freq", "sweep")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PRECONDITION = 4


class ConfigError(Exception):
    """Raised with every configuration problem aggregated into one message."""


_REQUIRED = object()

_PI_PATTERN = re.compile(r"^(-?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?$")


def parse_angle(raw: str) -> float:
    """Angles accept plain numbers or pi-literals like 'pi/2' or '0.55pi'."""
    s = raw.strip().lower()
    m = _PI_PATTERN.match(s)
    if m:
        coeff = m.group(1)
        num = float(coeff) if coeff not in ("", "-") else (-1.0 if coeff == "-" else 1.0)
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * np.pi / den
    return float(s)


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonnegative(v):
    return None if v >= 0 else "must be >= 0"


def _unit_interval_sym(v):
    return None if abs(v) <= 1 else "must satisfy |value| <= 1"


def _at_least(n):
    return lambda v: None if v >= n else f"must be >= {n}"


# (kind, default, validator); kind in {int, float, angle, str}
SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "m": ("int", _REQUIRED, _at_least(2)),
        "n": ("int", 2, _at_least(2)),
        "alpha": ("angle", _REQUIRED, None),
        "k": ("float", _REQUIRED, _nonnegative),
        "r": ("float", _REQUIRED, None),
        "a": ("int", 2, _at_least(1)),
        "omega": ("float", 0.0, None),
        "delta": ("float", 0.0, _unit_interval_sym),
    },
    "sim": {
        "dt": ("float", 0.01, _positive),
        "t": ("float", 100.0, _positive),
        "eta": ("float", 0.0, _nonnegative),
        "seed": ("int", 0, None),
    },
    "simulate": {
        "word": ("str", "", None),
        "perturb": ("float", 1e-3, _nonnegative),
        "record_stride": ("int", 10, _at_least(1)),
    },
    "basin": {
        "cycle": ("str", "", None),
        "epsilon": ("float", 1e-3, _positive),
        "n": ("int", 1000, _at_least(1)),
        "connection": ("int", 0, None),
        "t_max": ("float", 500.0, _positive),
    },
    "wedge": {
        "resolution": ("int", 200, _at_least(2)),
        "t_max": ("float", 2000.0, _positive),
    },
    "freq": {
        "word": ("str", "", None),
        "horizon": ("float", 1000.0, _positive),
    },
    "sweep": {
        "command": ("str", _REQUIRED, None),
        "parameter": ("str", _REQUIRED, None),
        "start": ("float", _REQUIRED, None),
        "stop": ("float", _REQUIRED, None),
        "num": ("int", _REQUIRED, _at_least(2)),
        "parameter2": ("str", "", None),
        "start2": ("float", 0.0, None),
        "stop2": ("float", 0.0, None),
        "num2": ("int", 1, _at_least(1)),
    },
    "eigen": {},
    "indices": {},
}

# keys that are spelled upper-case in params but case-folded by configparser
_MODEL_KEY_NAMES = {"m": "M", "n": "N", "k": "K", "t": "T"}


def _display_key(section: str, key: str) -> str:
    return _MODEL_KEY_NAMES.get(key, key)


@dataclass
class RunConfig:
    """Fully validated configuration with defaults applied."""

    sections: dict[str, dict]

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    def model_params(self) -> ModelParams:
        m = self.sections["model"]
        try:
            return ModelParams(
                M=m["m"], N=m["n"], alpha=m["alpha"], K=m["k"], r=m["r"],
                a=m["a"], omega=m["omega"], delta=m["delta"],
            )
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def to_json_dict(self) -> dict:
        return {
            section: {_display_key(section, k): v for k, v in sorted(vals.items())}
            for section, vals in sorted(self.sections.items())
        }

    def override(self, dotted_key: str, value: float) -> "RunConfig":
        section, _, key = dotted_key.partition(".")
        key = key.lower()
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"sweep parameter {dotted_key!r} is not a known config key")
        sections = {s: dict(v) for s, v in self.sections.items()}
        kind = SCHEMA[section][key][0]
        sections.setdefault(section, {})[key] = int(value) if kind == "int" else float(value)
        return RunConfig(sections)

    def require(self, section: str) -> dict:
        """Section values, erroring on any required key that is still missing."""
        values = self.sections[section]
        missing = [
            _display_key(section, key)
            for key, (_, default, _) in SCHEMA[section].items()
            if default is _REQUIRED and key not in values
        ]
        if missing:
            raise ConfigError(
                f"[{section}]: required keys missing: " + ", ".join(missing)
            )
        return values


def parse_config(text: str) -> RunConfig:
    """Parses and validates a config; reports every problem in one error."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    errors: list[str] = []
    sections: dict[str, dict] = {}
    for name in parser.sections():
        if name not in SCHEMA:
            errors.append(f"[{name}]: unknown section")
            continue
        schema = SCHEMA[name]
        values = {}
        for key, raw in parser.items(name):
            if key not in schema:
                errors.append(f"{name}.{_display_key(name, key)}: unknown key")
                continue
            kind = schema[key][0]
            try:
                if kind == "int":
                    values[key] = int(raw)
                elif kind == "float":
                    values[key] = float(raw)
                elif kind == "angle":
                    values[key] = parse_angle(raw)
                else:
                    values[key] = raw.strip()
            except ValueError:
                errors.append(f"{name}.{_display_key(name, key)}: cannot parse {raw!r} as {kind}")
        sections[name] = values
    if "model" not in parser.sections():
        errors.append("[model]: section is required")
    for name, schema in SCHEMA.items():
        values = sections.setdefault(name, {})
        for key, (kind, default, check) in schema.items():
            if key not in values:
                if default is _REQUIRED:
                    # model keys are needed by every command; requirements of
                    # command sections are enforced when that command runs
                    if name == "model" and "model" in parser.sections():
                        errors.append(f"{name}.{_display_key(name, key)}: required key missing")
                    continue
                values[key] = default
            if key in values and check is not None:
                problem = check(values[key])
                if problem:
                    errors.append(f"{name}.{_display_key(name, key)}: {problem}")
    if errors:
        raise ConfigError("configuration invalid:\n  " + "\n  ".join(errors))
    return RunConfig(sections)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# -- output helpers -------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".15g")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        if value != value:
            return "nan"
        if value in (float("inf"), float("-inf")):
            return "inf" if value > 0 else "-inf"
        return _fmt(value)
    return str(value)


def _default_cycle(params: ModelParams, name: str):
    if name:
        table = {"c2": cycle_c2, "c2hat": cycle_c2_hat, "c2check": cycle_c2_check}
        key = name.lower()
        if key not in table:
            raise ConfigError(f"basin.cycle: unknown cycle {name!r}")
        cyc = table[key]()
    else:
        cyc = cycle_c2() if params.M == 3 else cycle_c2_hat()
    if cyc.M != params.M:
        raise ConfigError(f"cycle {cyc.name} needs M={cyc.M}, config has M={params.M}")
    return cyc


def _default_word(params: ModelParams, word: str) -> str:
    if word:
        try:
            validate_word(word, params.M)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return word
    if params.M == 3:
        return "DSS"
    if params.M == 4:
        return "SDSS"
    raise ConfigError(f"no default equilibrium word for M={params.M}; set one explicitly")


# -- subcommands ----------------------------------------------------------------

def _cmd_eigen(config: RunConfig, outdir: Path, quiet=False):
    params = config.model_params()
    field = reduced_field(params, NONPAIRWISE)
    rows = []
    max_diff = 0.0
    for word in all_words(params.M):
        closed = word_eigenvalues(word, params)
        jac = jacobian_fd(field, equilibrium_state(word, params.N))
        for sigma in range(params.M):
            fd = jac[sigma, sigma]
            diff = abs(closed[sigma] - fd)
            max_diff = max(max_diff, diff)
            rows.append([word, f"psi_{sigma + 1}", _fmt(closed[sigma]), _fmt(fd), _fmt(diff)])
    header = ["word", "coordinate", "closed_form", "finite_difference", "abs_difference"]
    _write_csv(outdir / "eigen.csv", header, rows)
    if not quiet:
        widths = [max(len(r[i]) for r in rows + [header]) for i in range(5)]
        print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for r in rows:
            print("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    summary = {"max_abs_difference": max_diff}
    return EXIT_OK, ["eigen.csv"], summary


def _cmd_indices(config: RunConfig, outdir: Path, quiet=False):
    params = config.model_params()
    bad = (StabilityClass.NOT_APPLICABLE, StabilityClass.BOUNDARY)
    if params.M == 3:
        report = classify_m3(params)
        payload = {"cycles": [report.to_json_dict()]}
        code = EXIT_PRECONDITION if report.stability_class in bad else EXIT_OK
        summary = {"class": report.stability_class.value}
    elif params.M == 4:
        net = network_report(params)
        payload = net.to_json_dict()
        code = EXIT_PRECONDITION if net.network_class in bad else EXIT_OK
        summary = {"network_class": net.network_class.value}
        for name, rep in net.cycles.items():
            summary[f"class_{name}"] = rep.stability_class.value
    else:
        raise ConfigError("indices requires M = 3 or M = 4")
    _write_json(outdir / "indices.json", payload)
    if not quiet:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return code, ["indices.json"], summary


def _cmd_simulate(config: RunConfig, outdir: Path, quiet=False):
    params = config.model_params()
    sim, sub = config["sim"], config["simulate"]
    word = _default_word(params, sub["word"])
    x0 = lift_phases(equilibrium_state(word, params.N), np.zeros(params.M), params.N)
    rng = noise_stream(sim["seed"], 1)
    x0 = x0 + rng.uniform(-sub["perturb"], sub["perturb"], size=x0.shape)
    field = full_field(params, NONPAIRWISE)
    stride = sub["record_stride"]
    if sim["eta"] > 0:
        traj = integrate_em(field, x0, sim["dt"], sim["t"], sim["eta"], sim["seed"],
                            record_every=stride)
    else:
        traj = integrate_rk4(field, x0, sim["dt"], sim["t"], record_every=stride)
    psi = reduce_phases(traj.states, params.M, params.N)
    reduced = Trajectory(traj.times, psi, traj.dt, seed=traj.seed, eta=traj.eta)
    reduced.to_csv(outdir / "trajectory.csv")
    itin = itinerary(reduced)
    _write_json(outdir / "itinerary.json", {
        "symbols": itin.symbols,
        "entries": itin.entries,
        "exits": itin.exits,
    })
    if not quiet:
        print(f"simulated T={_fmt(sim['t'])} with {len(itin.symbols)} itinerary symbols")
    return EXIT_OK, ["trajectory.csv", "itinerary.json"], {"n_symbols": len(itin.symbols)}


def _cmd_basin(config: RunConfig, outdir: Path, quiet=False):
    params = config.model_params()
    sub = config["basin"]
    cyc = _default_cycle(params, sub["cycle"])
    est = basin_fraction(
        params, cyc, sub["epsilon"], sub["n"], sub["t_max"],
        seed=config["sim"]["seed"], connection=sub["connection"],
    )
    payload = {
        "cycle": est.target,
        "epsilon": est.epsilon,
        "n": est.n,
        "fraction": est.fraction,
        "ci95": list(est.ci95),
        "seed": est.seed,
        "t_max": est.t_max,
        "center": [float(v) for v in est.center],
        "params": config.to_json_dict()["model"],
    }
    _write_json(outdir / "basin.json", payload)
    if not quiet:
        print(f"attracted fraction {est.fraction:.4f} (95% CI {est.ci95[0]:.4f}..{est.ci95[1]:.4f})")
    return EXIT_OK, ["basin.json"], {"fraction": est.fraction}


def _cmd_wedge(config: RunConfig, outdir: Path, quiet=False):
    params = config.model_params()
    if params.M != 4:
        raise ConfigError("wedge requires M = 4")
    sub = config["wedge"]
    grid = wedge_map(params, sub["resolution"], sub["t_max"])
    grid.to_csv(outdir / "wedge.csv")
    fractions = grid.class_fractions()
    if not quiet:
        print(", ".join(f"{k}: {v:.3f}" for k, v in fractions.items()))
    return EXIT_OK, ["wedge.csv"], fractions


def _cmd_freq(config: RunConfig, outdir: Path, quiet=False):
    params = config.model_params()
    sub = config["freq"]
    word = _default_word(params, sub["word"])
    profile = average_frequencies(params, word=word, T=sub["horizon"])
    rows = []
    for sigma in range(params.M):
        for k in range(params.N):
            rows.append([str(sigma + 1), str(k + 1), _fmt(profile.omega[sigma, k])])
    _write_csv(outdir / "freq.csv", ["sigma", "k", "Omega"], rows)
    if not quiet:
        print("per-population frequencies:",
              " ".join(_fmt(v) for v in profile.per_population))
    summary = {f"Omega_{s + 1}": float(profile.per_population[s]) for s in range(params.M)}
    return EXIT_OK, ["freq.csv"], summary


def _cmd_sweep(config: RunConfig, outdir: Path, quiet=False):
    sub = config.require("sweep")
    inner = sub["command"]
    if inner not in COMMANDS or inner == "sweep":
        raise ConfigError(f"sweep.command must be one of {[c for c in COMMANDS if c != 'sweep']}")
    grids = [(sub["parameter"], np.linspace(sub["start"], sub["stop"], sub["num"]))]
    if sub["parameter2"]:
        grids.append((sub["parameter2"], np.linspace(sub["start2"], sub["stop2"], sub["num2"])))
    points = [(v,) for v in grids[0][1]]
    if len(grids) == 2:
        points = [(v1, v2) for v1 in grids[0][1] for v2 in grids[1][1]]
    rows_done = 0
    path = outdir / "sweep.csv"
    with open(path, "w", encoding="utf-8") as fh:
        header_written = False
        for values in points:
            cfg = config
            for (param_name, _), v in zip(grids, values):
                cfg = cfg.override(param_name, float(v))
            _, _, summary = _run_command(inner, cfg, outdir, quiet=True, write=False)
            row = {name: float(v) for (name, _), v in zip(grids, values)}
            row.update(summary)
            if not header_written:
                fh.write(",".join(row.keys()) + "\n")
                header_written = True
            fh.write(",".join(_cell(v) for v in row.values()) + "\n")
            fh.flush()
            rows_done += 1
    if not quiet:
        print(f"swept {rows_done} grid points -> {path.name}")
    return EXIT_OK, ["sweep.csv"], {"points": rows_done}


_DISPATCH = {
    "eigen": _cmd_eigen,
    "indices": _cmd_indices,
    "simulate": _cmd_simulate,
    "basin": _cmd_basin,
    "wedge": _cmd_wedge,
    "freq": _cmd_freq,
    "sweep": _cmd_sweep,
}


def _run_command(command: str, config: RunConfig, outdir: Path, quiet=False, write=True):
    if write:
        outdir.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[command](config, outdir, quiet)
    # summary-only evaluation (used by sweep): artifacts go to a scratch buffer
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        return _DISPATCH[command](config, Path(tmp), quiet=True)


def dispatch(command: str, config: RunConfig, outdir) -> int:
    """Runs one subcommand, writes its artifacts and the manifest, and returns
    the exit code."""
    if command not in _DISPATCH:
        raise ConfigError(f"unknown subcommand {command!r}; expected one of {COMMANDS}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config.to_json_dict(),
        "artifacts": [],
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    try:
        code, artifacts, _ = _DISPATCH[command](config, outdir, quiet=False)
        manifest["artifacts"] = artifacts
    except Exception as exc:
        # flush a manifest naming whatever was produced before the failure
        manifest["artifacts"] = sorted(
            p.name for p in outdir.iterdir() if p.name != "manifest.json"
        )
        manifest["error"] = str(exc)
        _write_json(outdir / "manifest.json", manifest)
        raise
    _write_json(outdir / "manifest.json", manifest)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="hetsync",
        description="Heteroclinic cycles and networks of localized frequency synchrony",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="path to an INI config file")
    ap.add_argument("--outdir", default="hetsync-out", help="directory for output artifacts")
    args = ap.parse_args(argv)
    try:
        config = load_config(args.config)
        return dispatch(args.command, config, args.outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition not met: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
