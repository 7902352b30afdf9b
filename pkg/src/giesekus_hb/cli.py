"""Command-line driver: JSON configuration in, CSV/JSON tables out.

Subcommands::

    giesekus-hb solve     --config run.json --out results/
    giesekus-hb integrate --config run.json --out results/
    giesekus-hb sweep     --axis frequency --jobs 4 --override strain_amplitudes=[0.1]
    giesekus-hb converge  --override H_values=[3,4,5,6,7,8]
    giesekus-hb compare   --override H=2

Exit codes are 0 on success, 2 for configuration errors (nothing is written)
and 3 for solver failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .analysis import (InsufficientDataError, compare_hb_ni, convergence_errors, evaluate_waveform,
                       fit_decay, harmonic_intensities, leading_moduli, moduli_from_coefficients,
                       residual_error, LEADING_MODULI)
from .core import HarmonicSpectrum, Loading, ModelParams, SpectralSolution, Waveform, derived_groups
from .hb_solver import HBSolveError, SolverOptions, ladder_solve
from .ivp_solver import IntegratorOptions, IVPError, solve_ivp

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (exit code 2)."""


class SolverFailure(RuntimeError):
    """A computation did not produce a result (exit code 3)."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs. Serialized as one JSON document.

    ``solver`` and ``integrator`` are nested sections mirroring
    :class:`SolverOptions` and :class:`IntegratorOptions`. ``seed`` is
    reserved; no current workflow draws random numbers.
    """

    modulus: float = 1.0
    relaxation_time: float = 1.0
    alpha: float = 0.3
    solvent_viscosity: float = 0.0
    strain_amplitudes: tuple[float, ...] = (0.1,)
    angular_frequencies: tuple[float, ...] = (1.0,)
    H: int = 5
    H_values: tuple[int, ...] = (3, 4, 5, 6, 7, 8, 9, 10, 11, 12)
    H_ref: int = 30
    initial_guess: str = "maos"
    waveform_points: int = 1000
    repeats: int = 3
    output_dir: str = "out"
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        try:
            for name in ("modulus", "relaxation_time", "alpha", "solvent_viscosity"):
                set_(name, _number(getattr(self, name), name))
            set_("strain_amplitudes", tuple(_number(x, "strain_amplitudes") for x in _seq(self.strain_amplitudes)))
            set_("angular_frequencies", tuple(_number(x, "angular_frequencies") for x in _seq(self.angular_frequencies)))
            for name in ("H", "H_ref", "waveform_points", "repeats", "seed"):
                set_(name, _integer(getattr(self, name), name))
            set_("H_values", tuple(_integer(x, "H_values") for x in _seq(self.H_values)))
            if isinstance(self.solver, dict):
                set_("solver", SolverOptions(**self.solver))
            if isinstance(self.integrator, dict):
                set_("integrator", IntegratorOptions(**self.integrator))
            self.model_params()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if any(not x > 0 for x in self.strain_amplitudes):
            raise ConfigError("strain_amplitudes must be > 0")
        if any(not x > 0 for x in self.angular_frequencies):
            raise ConfigError("angular_frequencies must be > 0")
        if self.initial_guess != "maos":
            raise ConfigError(f"initial_guess must be 'maos', got {self.initial_guess!r}")
        if self.waveform_points < 2 or self.waveform_points % 2:
            raise ConfigError("waveform_points must be a positive even integer")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    def model_params(self) -> ModelParams:
        return ModelParams(self.modulus, self.relaxation_time, self.alpha, self.solvent_viscosity)

    def grid(self) -> list[Loading]:
        return [Loading(g, w) for g, w in itertools.product(self.strain_amplitudes, self.angular_frequencies)]

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        return json.loads(json.dumps(d))  # tuples become lists

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        for section, opts in (("solver", SolverOptions), ("integrator", IntegratorOptions)):
            sub = data.get(section)
            if sub is None:
                continue
            if not isinstance(sub, dict):
                raise ConfigError(f"{section} must be an object")
            names = {f.name for f in dataclasses.fields(opts)}
            bad = sorted(set(sub) - names)
            if bad:
                raise ConfigError(f"unknown {section} keys: {', '.join(bad)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)


def _seq(x):
    if isinstance(x, (int, float)):
        return (x,)
    if isinstance(x, (str, bytes)) or not hasattr(x, "__iter__"):
        raise ConfigError(f"expected a list of numbers, got {x!r}")
    return tuple(x)


def _number(x, name) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {x!r}")
    if not math.isfinite(x):
        raise ConfigError(f"{name}: must be finite")
    return float(x)


def _integer(x, name) -> int:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or x != int(x):
        raise ConfigError(f"{name}: expected an integer, got {x!r}")
    return int(x)


def apply_overrides(data: dict[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    """Apply ``key=value`` pairs; dotted keys reach nested sections, values parse as JSON."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = data
        *parents, leaf = key.split(".")
        for p in parents:
            target = target.setdefault(p, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override {key!r}: {p} is not a section")
        target[leaf] = value
    return data


def load_config(path: str | None, overrides: Sequence[str] = (), out: str | None = None) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
    data = apply_overrides(data, overrides)
    if out is not None:
        data["output_dir"] = out
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# output


def fmt(x) -> str:
    """17 significant digits for floats; integers and strings verbatim."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return "" if x is None else str(x)


SCHEMA: dict[str, dict[str, Any]] = {
    "coefficients.csv": {
        "columns": ["index", "real", "imag", "channel"],
        "description": "Complex Fourier coefficients (Pa) of sigma_11 (A), sigma_22 (B) and sigma_12 (C) "
                       "at nonnegative harmonics; negative harmonics are the conjugates.",
    },
    "spectrum.csv": {
        "columns": ["n", "G_storage", "G_loss", "F_storage", "F_loss", "S_storage", "S_loss"],
        "description": "Harmonic moduli (Pa). Shear moduli use odd n and normal-stress moduli even n; "
                       "entries at the other parity are exactly zero. At n = 0 the loss column holds "
                       "the mean normal-stress difference over gamma0^2.",
    },
    "waveform.csv": {
        "columns": ["t", "strain", "strain_rate", "sigma11", "sigma22", "sigma12", "N1", "N2"],
        "description": "One steady period on t_i = i T / N_t; stresses in Pa, t in s.",
    },
    "sweep.csv": {
        "columns": ["gamma0", "omega", "De", "Wi", "H", *LEADING_MODULI,
                    "I3_over_I1", "I5_over_I1", "N1_I2_over_I0", "N1_I4_over_I0",
                    "iterations", "eps_r", "error"],
        "description": "One row per grid point sorted by the sweep axis. Failed points carry nan in "
                       "numeric columns and the failure message in 'error'.",
    },
    "convergence.csv": {
        "columns": ["gamma0", "omega", "H", "H_ref", "xi_G", "xi_F", "xi_S"],
        "description": "Sup-norm waveform distance of each truncation from the H_ref solution (Pa).",
    },
    "compare.csv": {
        "columns": ["gamma0", "omega", "H", "eps_r_HB", "eps_r_NI", "time_HB", "time_NI",
                    "speedup", "max_coefficient_difference", "cycles_used", "error"],
        "description": "HB versus time integration. Times are medians in s and are not reproducible "
                       "byte for byte. The coefficient difference is the largest relative difference "
                       "over the leading moduli.",
    },
}


class OutputWriter:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.written: list[str] = []

    def ensure(self):
        self.root.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, rows: Sequence[Sequence[Any]]):
        self.ensure()
        with open(self.root / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SCHEMA[name]["columns"])
            for row in rows:
                w.writerow([fmt(x) for x in row])
        self.written.append(name)

    def json(self, name: str, obj: Any):
        self.ensure()
        (self.root / name).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        self.written.append(name)

    def finish(self, config: RunConfig):
        self.json("config.json", config.to_dict())
        schema = {k: v for k, v in SCHEMA.items() if k in self.written}
        self.json("schema.json", {"float_format": "%.17g", "files": schema})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def coefficient_rows(solution: SpectralSolution):
    rows = []
    for channel, harmonics, X in (("A", solution.even_harmonics, solution.A),
                                  ("B", solution.even_harmonics, solution.B),
                                  ("C", solution.odd_harmonics, solution.C)):
        rows += [(int(n), float(x.real), float(x.imag), channel) for n, x in zip(harmonics, X)]
    return rows


def spectrum_rows(spectrum: HarmonicSpectrum):
    n_top = int(max(spectrum.odd_harmonics.max(), spectrum.even_harmonics.max()))
    rows = []
    for n in range(n_top + 1):
        g = spectrum.shear(n) if n in spectrum.odd_harmonics else (0.0, 0.0)
        f = spectrum.first_normal(n) if n in spectrum.even_harmonics else (0.0, 0.0)
        s = spectrum.second_normal(n) if n in spectrum.even_harmonics else (0.0, 0.0)
        rows.append((n, *g, *f, *s))
    return rows


def waveform_rows(wave: Waveform):
    wave = wave.scaled(False)
    strain = wave.loading.strain_amplitude * np.sin(wave.phase)
    rate = wave.loading.strain_amplitude * wave.loading.angular_frequency * np.cos(wave.phase)
    cols = (wave.times, strain, rate, wave.sigma11, wave.sigma22, wave.sigma12, wave.N1, wave.N2)
    return list(zip(*(c.tolist() for c in cols)))


def _loading_info(config: RunConfig, loading: Loading) -> dict[str, float]:
    De, Wi = derived_groups(config.model_params(), loading)
    return {"gamma0": loading.strain_amplitude, "omega": loading.angular_frequency, "De": De, "Wi": Wi}


# ---------------------------------------------------------------------------
# commands


def _single_loading(config: RunConfig) -> Loading:
    grid = config.grid()
    if len(grid) != 1:
        raise ConfigError(f"this command needs exactly one (gamma0, omega) pair, got {len(grid)}")
    return grid[0]


def _check_H(H: int):
    if H < 2:
        raise ConfigError(f"H={H} is too small: the MAOS initial guess carries the third harmonic, "
                          "so H must be >= 2")


def cmd_solve(config: RunConfig) -> int:
    loading = _single_loading(config)
    _check_H(config.H)
    params = config.model_params()
    try:
        sol = ladder_solve(params, loading, config.H, config.solver)
    except HBSolveError as exc:
        raise SolverFailure(str(exc)) from exc
    report = residual_error(sol, config.waveform_points, source="HB")
    out = OutputWriter(config.output_dir)
    out.csv("coefficients.csv", coefficient_rows(sol))
    out.csv("spectrum.csv", spectrum_rows(moduli_from_coefficients(sol)))
    out.csv("waveform.csv", waveform_rows(evaluate_waveform(sol, config.waveform_points)))
    out.json("residual.json", {**_loading_info(config, loading), "H": config.H, "eps_r": report.eps_r,
                               "rms": dict(zip(("s11", "s22", "s12"), report.rms)), "N_t": report.N_t,
                               "newton_iterations": sol.iterations,
                               "newton_residual": sol.residual_norm})
    out.finish(config)
    return EXIT_OK


def cmd_integrate(config: RunConfig) -> int:
    loading = _single_loading(config)
    params = config.model_params()
    options = dataclasses.replace(config.integrator, resample_count=config.waveform_points)
    try:
        res = solve_ivp(params, loading, options)
    except IVPError as exc:
        raise SolverFailure(f"{type(exc).__name__}: {exc}") from exc
    report = residual_error(res.solution, config.waveform_points, source="NI")
    out = OutputWriter(config.output_dir)
    out.csv("coefficients.csv", coefficient_rows(res.solution))
    out.csv("waveform.csv", waveform_rows(res.waveform))
    out.json("residual.json", {**_loading_info(config, loading), "eps_r": report.eps_r,
                               "rms": dict(zip(("s11", "s22", "s12"), report.rms)), "N_t": report.N_t,
                               "n_max": res.analysis.n_max, "parity_leakage": res.analysis.leakage})
    out.json("timing.json", {"cycles_used": res.cycles_used, "wall_time": res.wall_time})
    out.finish(config)
    return EXIT_OK


def _nan_row(n):
    return [math.nan] * n


def _intensity_columns(spectrum: HarmonicSpectrum):
    I = harmonic_intensities(spectrum)

    def get(channel, n):
        try:
            return I.ratio(channel, n)
        except KeyError:
            return math.nan

    return [get("shear", 3), get("shear", 5), get("N1", 2), get("N1", 4)]


def _sweep_point(args):
    config_dict, gamma0, omega = args
    config = RunConfig.from_dict(config_dict)
    params, loading = config.model_params(), Loading(gamma0, omega)
    De, Wi = derived_groups(params, loading)
    head = [gamma0, omega, De, Wi, config.H]
    try:
        sol = ladder_solve(params, loading, config.H, config.solver)
    except HBSolveError as exc:
        return head + _nan_row(len(LEADING_MODULI) + 4) + [-1, math.nan, str(exc)]
    spectrum = moduli_from_coefficients(sol)
    lead = leading_moduli(spectrum)
    eps = residual_error(sol, config.waveform_points).eps_r
    return head + [lead[k] for k in LEADING_MODULI] + _intensity_columns(spectrum) + [sol.iterations, eps, ""]


def _run_parallel(fn: Callable, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _grid_or_fail(config: RunConfig) -> list[Loading]:
    grid = config.grid()
    if not grid:
        raise ConfigError("the (gamma0, omega) grid is empty")
    return grid


def cmd_sweep(config: RunConfig, axis: str = "frequency", jobs: int = 1) -> int:
    if axis not in ("frequency", "amplitude"):
        raise ConfigError(f"axis must be 'frequency' or 'amplitude', got {axis!r}")
    grid = _grid_or_fail(config)
    _check_H(config.H)
    tasks = [(config.to_dict(), L.strain_amplitude, L.angular_frequency) for L in grid]
    rows = _run_parallel(_sweep_point, tasks, jobs)
    key = (lambda r: (r[1], r[0])) if axis == "frequency" else (lambda r: (r[0], r[1]))
    rows.sort(key=key)
    out = OutputWriter(config.output_dir)
    out.csv("sweep.csv", rows)
    out.finish(config)
    failed = sum(1 for r in rows if r[-1])
    if failed == len(rows):
        raise SolverFailure(f"all {failed} sweep points failed; first error: {rows[0][-1]}")
    if failed:
        logger.warning("%d of %d sweep points failed", failed, len(rows))
    return EXIT_OK


def _converge_point(args):
    config_dict, gamma0, omega = args
    config = RunConfig.from_dict(config_dict)
    params, loading = config.model_params(), Loading(gamma0, omega)
    try:
        ref = ladder_solve(params, loading, config.H_ref, config.solver)
    except HBSolveError as exc:
        return {"reference_error": str(exc)}
    try:
        sols = [ladder_solve(params, loading, H, config.solver) for H in config.H_values]
    except HBSolveError as exc:
        return {"truncation_error": str(exc)}
    study = convergence_errors(sols, ref, config.solver.tolerance)
    rows = [[gamma0, omega, int(H), config.H_ref, g, f, s]
            for H, g, f, s in zip(study.H_values, study.xi_G, study.xi_F, study.xi_S)]
    fit: dict[str, Any] = {"gamma0": gamma0, "omega": omega, "H_ref": config.H_ref}
    try:
        fits = fit_decay(study)
        fit["channels"] = {ch: {"m": f.m, "m_per_H": f.m_per_H, "u": f.u, "r_squared": f.r_squared,
                                "n_points": f.n_points} for ch, f in fits.items()}
    except InsufficientDataError as exc:
        fit["error"] = str(exc)
    return {"rows": rows, "fit": fit}


def cmd_converge(config: RunConfig, jobs: int = 1) -> int:
    grid = _grid_or_fail(config)
    Hs = config.H_values
    if len(Hs) < 3:
        raise ConfigError(f"H_values needs at least 3 entries for the decay fit, got {len(Hs)}")
    if any(b <= a for a, b in zip(Hs, Hs[1:])):
        raise ConfigError("H_values must be strictly increasing")
    _check_H(Hs[0])
    if Hs[-1] >= config.H_ref:
        raise ConfigError(f"max(H_values)={Hs[-1]} must be below H_ref={config.H_ref}")
    tasks = [(config.to_dict(), L.strain_amplitude, L.angular_frequency) for L in grid]
    results = _run_parallel(_converge_point, tasks, jobs)
    for L, r in zip(grid, results):
        for key in ("reference_error", "truncation_error"):
            if key in r:
                raise SolverFailure(f"gamma0={L.strain_amplitude:g}, omega={L.angular_frequency:g}: {r[key]}")
    rows = sorted((row for r in results for row in r["rows"]), key=lambda x: (x[0], x[1], x[2]))
    fits = sorted((r["fit"] for r in results), key=lambda f: (f["gamma0"], f["omega"]))
    out = OutputWriter(config.output_dir)
    out.csv("convergence.csv", rows)
    out.json("fit.json", {"abscissa": {"shear": "2H-1", "N1": "2H-2", "N2": "2H-2"}, "points": fits})
    out.finish(config)
    return EXIT_OK


def _compare_point(args):
    config_dict, gamma0, omega = args
    config = RunConfig.from_dict(config_dict)
    params, loading = config.model_params(), Loading(gamma0, omega)
    head = [gamma0, omega, config.H]
    try:
        c = compare_hb_ni(params, loading, config.H, config.solver, config.integrator, config.repeats)
    except Exception as exc:  # ComparisonError or a validation failure inside either path
        return head + _nan_row(6) + [-1, str(exc)]
    return head + [c.hb_report.eps_r, c.ni_report.eps_r, c.hb_time, c.ni_time, c.speedup,
                   c.max_relative_difference, c.cycles_used, ""]


def cmd_compare(config: RunConfig, jobs: int = 1) -> int:
    grid = _grid_or_fail(config)
    _check_H(config.H)
    tasks = [(config.to_dict(), L.strain_amplitude, L.angular_frequency) for L in grid]
    # timings are the point of this command, so points run one at a time unless asked otherwise
    rows = _run_parallel(_compare_point, tasks, jobs)
    rows.sort(key=lambda r: (r[0], r[1]))
    out = OutputWriter(config.output_dir)
    out.csv("compare.csv", rows)
    out.finish(config)
    failed = sum(1 for r in rows if r[-1])
    if failed == len(rows):
        raise SolverFailure(f"all {failed} comparison points failed; first error: {rows[0][-1]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="giesekus-hb",
                                     description="Harmonic-balance and time-integration solvers for "
                                                 "the Giesekus model in oscillatory shear.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "harmonic-balance solution at one point"),
                        ("integrate", "time-integration reference at one point"),
                        ("sweep", "harmonic-balance moduli over a (gamma0, omega) grid"),
                        ("converge", "truncation-error decay against a high-H reference"),
                        ("compare", "accuracy and wall time of both paths")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON configuration file (defaults apply if omitted)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for grid commands")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a config value; dotted keys for sections, JSON values")
        if name == "sweep":
            p.add_argument("--axis", choices=("frequency", "amplitude"), default="frequency")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        config = load_config(args.config, args.override, args.out)
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "integrate":
            return cmd_integrate(config)
        if args.command == "sweep":
            return cmd_sweep(config, args.axis, args.jobs)
        if args.command == "converge":
            return cmd_converge(config, args.jobs)
        return cmd_compare(config, args.jobs)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
