"""Command-line front end: configuration, sweep orchestration, serialization.

Config files are flat ``key = value`` documents with ``#`` comments and
dotted keys (``params.lambda = 0.2``).  Unknown keys are rejected.  Every
run writes a result envelope: the full configuration travels with the
data, as commented header lines in CSV or as a ``config`` object in JSON.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, kernels, moments, oracle, response
from .fluorescence import fluorescence_spectrum
from .params import KernelPolicy, at_detuning, figure2_defaults

COMMANDS = ("transmission", "fluorescence", "population", "polaritons",
            "estimate-n", "oracle-check")
SWEEP_VARIABLES = ("delta_c", "omega", "n_molecules")
FORMATS = ("csv", "json")


class ConfigError(Exception):
    """Invalid configuration; message carries field/line context."""


@dataclass(frozen=True)
class SweepSpec:
    variable: str = "delta_c"
    start: float | None = None
    stop: float | None = None
    points: int | None = None
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep.variable must be one of "
                              f"{SWEEP_VARIABLES}, got {self.variable!r}")
        if self.values is not None:
            if len(self.values) < 1:
                raise ConfigError("sweep.values must be nonempty")
            return
        if self.start is None and self.stop is None and self.points is None:
            return  # command default grid
        if None in (self.start, self.stop, self.points):
            raise ConfigError(
                "sweep requires all of start/stop/points (or values)")
        if self.points < 2:
            raise ConfigError(f"sweep.points must be >= 2, got {self.points}")
        if not self.stop > self.start:
            raise ConfigError(
                f"sweep.stop must exceed sweep.start, got "
                f"[{self.start}, {self.stop}]")

    def grid(self, default: np.ndarray) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        if self.points is None:
            return default
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class OracleOptions:
    quantity: str = "steady"      # steady | fluorescence
    photon_cutoff: int = 2
    vib_cutoff: int = 2
    frame: str = "polaron"
    tau_max: float | None = None

    def __post_init__(self):
        if self.quantity not in ("steady", "fluorescence"):
            raise ConfigError("oracle.quantity must be 'steady' or "
                              f"'fluorescence', got {self.quantity!r}")


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams = field(default_factory=figure2_defaults)
    policy: KernelPolicy = field(default_factory=KernelPolicy)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    inner: SweepSpec = field(default_factory=lambda: SweepSpec("delta_c"))
    order: str = "first"
    include_intermolecular: bool = True
    oracle: OracleOptions = field(default_factory=OracleOptions)
    output_path: str = "-"
    output_format: str = "csv"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got "
                              f"{self.command!r}")
        if self.order not in ("first", "second"):
            raise ConfigError(f"order must be 'first' or 'second', got "
                              f"{self.order!r}")
        if self.output_format not in FORMATS:
            raise ConfigError(f"output.format must be one of {FORMATS}, "
                              f"got {self.output_format!r}")


@dataclass
class ResultEnvelope:
    """Config snapshot plus a labeled table and run provenance."""

    config: dict[str, str]
    columns: list[str]
    units: list[str]
    rows: list[tuple]
    summary: dict[str, object]
    warnings: tuple[str, ...]
    version: str
    wall_time_s: float


# -- configuration parsing ----------------------------------------------------

_PARAM_KEYS = {
    "n_molecules": int, "lambda": float, "nu": float, "omega00": float,
    "omega_c": float, "omega_l": float, "g": float, "kappa1": float,
    "kappa2": float, "gamma_electronic": float, "gamma_phi": float,
    "gamma_vib": float, "eta": float,
}
_POLICY_KEYS = {"tail_tol": float, "k_max_hard": int, "total_order_cap": int}
_SWEEP_KEYS = {"variable": str, "start": float, "stop": float, "points": int,
               "values": str}
_ORACLE_KEYS = {"quantity": str, "photon_cutoff": int, "vib_cutoff": int,
                "frame": str, "tau_max": float}
_TOP_KEYS = {"command": str, "order": str, "include_intermolecular": bool}
_OUTPUT_KEYS = {"path": str, "format": str}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_scalar(raw: str, kind, key: str, line_no: int):
    try:
        if kind is bool:
            return _parse_bool(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: bad value for {key!r}: {exc}")


def parse_config_pairs(text: str) -> dict[str, tuple[str, int]]:
    """Parse the flat key=value document into {key: (raw value, line)}."""
    pairs: dict[str, tuple[str, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"line {line_no}, column {len(line) - len(line.lstrip()) + 1}:"
                f" expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if key in pairs:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        pairs[key] = (raw.strip(), line_no)
    return pairs


def config_from_pairs(pairs: dict[str, tuple[str, int]],
                      command: str | None = None) -> RunConfig:
    params_kw: dict = {}
    policy_kw: dict = {}
    sweep_kw: dict = {}
    inner_kw: dict = {}
    oracle_kw: dict = {}
    top_kw: dict = {}
    out_kw: dict = {}
    unknown = []
    for key, (raw, line_no) in pairs.items():
        group, _, leaf = key.partition(".")
        if key in _TOP_KEYS:
            top_kw[key] = _parse_scalar(raw, _TOP_KEYS[key], key, line_no)
        elif group == "params" and leaf in _PARAM_KEYS:
            name = "lam" if leaf == "lambda" else leaf
            params_kw[name] = _parse_scalar(raw, _PARAM_KEYS[leaf], key,
                                            line_no)
        elif group == "policy" and leaf in _POLICY_KEYS:
            policy_kw[leaf] = _parse_scalar(raw, _POLICY_KEYS[leaf], key,
                                            line_no)
        elif group in ("sweep", "inner") and leaf in _SWEEP_KEYS:
            target = sweep_kw if group == "sweep" else inner_kw
            if leaf == "values":
                try:
                    target[leaf] = tuple(float(v) for v in raw.split(",") if
                                         v.strip())
                except ValueError as exc:
                    raise ConfigError(f"line {line_no}: bad sweep.values: "
                                      f"{exc}")
            else:
                target[leaf] = _parse_scalar(raw, _SWEEP_KEYS[leaf], key,
                                             line_no)
        elif group == "oracle" and leaf in _ORACLE_KEYS:
            oracle_kw[leaf] = _parse_scalar(raw, _ORACLE_KEYS[leaf], key,
                                            line_no)
        elif group == "output" and leaf in _OUTPUT_KEYS:
            out_kw[leaf] = raw
        else:
            unknown.append(f"{key!r} (line {line_no})")
    if unknown:
        raise ConfigError("unknown configuration keys: " + ", ".join(unknown))
    if command is not None:
        top_kw["command"] = command
    if "command" not in top_kw:
        raise ConfigError("no command given (positional argument or "
                          "'command = ...' in the config)")
    try:
        params = figure2_defaults(**params_kw)
        policy = KernelPolicy(**policy_kw)
    except ValueError as exc:
        raise ConfigError(str(exc))
    return RunConfig(
        command=top_kw["command"],
        params=params,
        policy=policy,
        sweep=SweepSpec(**sweep_kw),
        inner=SweepSpec(**inner_kw),
        order=top_kw.get("order", "first"),
        include_intermolecular=top_kw.get("include_intermolecular", True),
        oracle=OracleOptions(**oracle_kw),
        output_path=out_kw.get("path", "-"),
        output_format=out_kw.get("format", "csv"),
    )


def parse_config(text: str, command: str | None = None) -> RunConfig:
    return config_from_pairs(parse_config_pairs(text), command)


def serialize_config(config: RunConfig) -> str:
    """Emit the flat key=value form; parse_config round-trips it."""
    lines = [f"command = {config.command}",
             f"order = {config.order}",
             f"include_intermolecular = {config.include_intermolecular}"]
    for leaf in _PARAM_KEYS:
        name = "lam" if leaf == "lambda" else leaf
        lines.append(f"params.{leaf} = {getattr(config.params, name)!r}")
    for leaf in _POLICY_KEYS:
        lines.append(f"policy.{leaf} = {getattr(config.policy, leaf)!r}")
    for group, spec in (("sweep", config.sweep), ("inner", config.inner)):
        lines.append(f"{group}.variable = {spec.variable}")
        if spec.values is not None:
            lines.append(f"{group}.values = "
                         + ",".join(repr(v) for v in spec.values))
        elif spec.points is not None:
            lines.append(f"{group}.start = {spec.start!r}")
            lines.append(f"{group}.stop = {spec.stop!r}")
            lines.append(f"{group}.points = {spec.points!r}")
    oc = config.oracle
    lines.append(f"oracle.quantity = {oc.quantity}")
    lines.append(f"oracle.photon_cutoff = {oc.photon_cutoff}")
    lines.append(f"oracle.vib_cutoff = {oc.vib_cutoff}")
    lines.append(f"oracle.frame = {oc.frame}")
    if oc.tau_max is not None:
        lines.append(f"oracle.tau_max = {oc.tau_max!r}")
    lines.append(f"output.path = {config.output_path}")
    lines.append(f"output.format = {config.output_format}")
    return "\n".join(lines) + "\n"


# -- execution ----------------------------------------------------------------

def _workers() -> int:
    env = os.environ.get("HTC_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"HTC_THREADS must be an integer, got {env!r}")
    return max(1, os.cpu_count() or 1)


def _map_ordered(fn, items):
    """Order-preserving map, parallel across processes when allowed."""
    items = list(items)
    workers = min(_workers(), len(items))
    if workers <= 1 or len(items) < 4:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _oracle_steady_point(task):
    params, delta_c, photon_cutoff, vib_cutoff, frame = task
    cfg = oracle.HilbertConfig(n_molecules=params.n_molecules,
                               photon_cutoff=photon_cutoff,
                               vib_cutoff=vib_cutoff, frame=frame)
    p = at_detuning(params, delta_c)
    liou = oracle.build_liouvillian(p, cfg)
    obs = oracle.steady_observables(oracle.steady_state(liou), p)
    return (abs(oracle.oracle_transmission(obs, p)) ** 2,
            params.n_molecules * obs.p_m)


def _spectrum_rows(series: response.SpectrumSeries) -> list[tuple]:
    rows = []
    for x, v, f in zip(series.grid, series.values, series.flags):
        if np.iscomplexobj(series.values):
            rows.append((float(x), float(np.real(v)), float(np.imag(v)),
                         float(abs(v) ** 2), int(f)))
        else:
            rows.append((float(x), float(v), int(f)))
    return rows


def _run_transmission(config: RunConfig):
    params, policy = config.params, config.policy
    inner_default = response.default_detuning_grid(params)
    if config.sweep.variable == "n_molecules":
        n_values = config.sweep.grid(np.arange(1.0, 201.0))
        grid = config.inner.grid(inner_default)
        rows = []
        for n in n_values:
            series = response.transmission(
                params.replace(n_molecules=int(round(n))), policy, grid,
                config.order)
            for x, v, f in zip(series.grid, series.values, series.flags):
                rows.append((int(round(n)), float(x), float(abs(v) ** 2),
                             int(f)))
        return (["n", "delta_c", "abs_T_sq", "flag"],
                ["1", "Gamma", "1", "enum"], rows, {})
    if config.sweep.variable != "delta_c":
        raise ConfigError("transmission sweeps delta_c or n_molecules")
    series = response.transmission(params, policy,
                                   config.sweep.grid(inner_default),
                                   config.order)
    peaks = response.detect_peaks(series)
    summary = {"n_peaks": len(peaks),
               "peak_positions": [p for p, _ in peaks]}
    return (["delta_c", "re_T", "im_T", "abs_T_sq", "flag"],
            ["Gamma", "1", "1", "1", "enum"], _spectrum_rows(series), summary)


def _run_fluorescence(config: RunConfig):
    params, policy = config.params, config.policy
    default = response.default_emission_grid(params)
    if config.sweep.variable == "n_molecules":
        n_values = config.sweep.grid(np.arange(1.0, 201.0))
        grid = config.inner.grid(default) if config.inner.variable == "omega" \
            else default
        rows = []
        for n in n_values:
            series = fluorescence_spectrum(
                params.replace(n_molecules=int(round(n))), policy, grid,
                config.include_intermolecular)
            rows.extend((int(round(n)), float(x), float(v), int(f))
                        for x, v, f in zip(series.grid, series.values,
                                           series.flags))
        return (["n", "omega", "s", "flag"], ["1", "Gamma", "1", "enum"],
                rows, {})
    if config.sweep.variable not in ("omega", "delta_c"):
        raise ConfigError("fluorescence sweeps omega or n_molecules")
    series = fluorescence_spectrum(params, policy,
                                   config.sweep.grid(default),
                                   config.include_intermolecular)
    peaks = response.detect_peaks(series)
    return (["omega", "s", "flag"], ["Gamma", "1", "enum"],
            _spectrum_rows(series),
            {"n_peaks": len(peaks), "peak_positions": [p for p, _ in peaks]})


def _run_population(config: RunConfig):
    params, policy = config.params, config.policy
    grid = config.sweep.grid(response.default_detuning_grid(params))
    if config.sweep.variable != "delta_c":
        raise ConfigError("population sweeps delta_c")
    rows = []
    for dc in grid:
        p = at_detuning(params, dc)
        try:
            if config.order == "first":
                sm = moments.solve_m1(p, policy,
                                      config.include_intermolecular)
            else:
                sm = moments.solve_m2(p, policy)
            rows.append((float(dc), float(sm.n_c), float(sm.p_m),
                         float(moments.total_population(sm, p.n_molecules)),
                         0))
        except (kernels.KernelError, moments.SingularSystemError):
            rows.append((float(dc), float("nan"), float("nan"),
                         float("nan"), 1))
    unit = moments.p1_closed_form(
        params.replace(lam=0.0, omega_l=params.omega00,
                       omega_c=params.omega00), policy)
    return (["delta_c", "n_c", "p_m", "p_total", "flag"],
            ["Gamma", "1", "1", "1", "enum"], rows,
            {"p1_unit": unit})


def _run_polaritons(config: RunConfig):
    params, policy = config.params, config.policy
    if config.sweep.variable == "n_molecules":
        n_values = config.sweep.grid(np.arange(1.0, 401.0))
    else:
        n_values = np.array([float(params.n_molecules)])
    rows = []
    for n in n_values:
        modes = response.polariton_modes(
            params.replace(n_molecules=int(round(n))), policy)
        rows.append((int(round(n)), modes.omega_minus, modes.omega_plus,
                     modes.gamma_minus, modes.gamma_plus))
    return (["n", "omega_minus", "omega_plus", "gamma_minus", "gamma_plus"],
            ["1", "Gamma", "Gamma", "Gamma", "Gamma"], rows, {})


def _run_estimate_n(config: RunConfig):
    params, policy = config.params, config.policy
    grid = config.inner.grid(response.default_detuning_grid(params))
    series = response.transmission(params, policy, grid, config.order)
    peaks = response.detect_peaks(series)
    if not peaks:
        raise moments.SingularSystemError("estimate-n: no peaks detected",
                                          float("nan"))
    omega_minus = peaks[0][0]
    n_est = response.estimate_n(omega_minus, params.g)
    n_true = params.n_molecules
    rows = [(n_true, float(omega_minus), float(n_est),
             float(abs(n_est - n_true) / n_true))]
    return (["n_true", "omega_minus", "n_est", "rel_err"],
            ["1", "Gamma", "1", "1"], rows,
            {"n_est": float(n_est)})


def _run_oracle_check(config: RunConfig):
    params, policy = config.params, config.policy
    oc = config.oracle
    if oc.quantity == "steady":
        grid = config.sweep.grid(
            np.linspace(-0.3 * params.nu, 0.3 * params.nu, 41))
        tasks = [(params, float(dc), oc.photon_cutoff, oc.vib_cutoff,
                  oc.frame) for dc in grid]
        oracle_vals = _map_ordered(_oracle_steady_point, tasks)
        series = response.transmission(params, policy, grid, config.order)
        rows, devs = [], []
        for dc, tv, (ot, op) in zip(grid, series.abs_squared, oracle_vals):
            p = at_detuning(params, dc)
            sm = moments.solve_m1(p, policy, config.include_intermolecular)
            pa = moments.total_population(sm, p.n_molecules)
            dev = abs(tv - ot) / ot if ot else float("nan")
            devs.append(dev)
            rows.append((float(dc), float(tv), float(ot), float(pa),
                         float(op), float(dev)))
        return (["delta_c", "abs_T_sq_analytic", "abs_T_sq_oracle",
                 "p_total_analytic", "p_total_oracle", "rel_dev_T"],
                ["Gamma", "1", "1", "1", "1", "1"], rows,
                {"max_rel_dev_T": float(np.nanmax(devs))})
    # fluorescence comparison; the analytic relation is one-sided, the
    # regression spectrum two-sided, an exact factor 2 apart
    grid = config.sweep.grid(
        np.linspace(-1.5 * params.nu, 1.0 * params.nu, 601))
    cfg = oracle.HilbertConfig(n_molecules=params.n_molecules,
                               photon_cutoff=oc.photon_cutoff,
                               vib_cutoff=oc.vib_cutoff, frame=oc.frame)
    analytic = fluorescence_spectrum(params, policy, grid,
                                     config.include_intermolecular)
    reg = oracle.regression_spectrum(params, cfg, grid, tau_max=oc.tau_max)
    rows = [(float(w), float(sa), float(so / 2.0))
            for w, sa, so in zip(grid, analytic.values, reg.values)]
    return (["omega", "s_analytic", "s_oracle"], ["Gamma", "1", "1"], rows,
            {"oracle_scale_note":
             "s_oracle halved: two-sided vs one-sided convention"})


def run(config: RunConfig) -> ResultEnvelope:
    """Dispatch a validated configuration and wrap the result."""
    t0 = time.perf_counter()
    runner = {
        "transmission": _run_transmission,
        "fluorescence": _run_fluorescence,
        "population": _run_population,
        "polaritons": _run_polaritons,
        "estimate-n": _run_estimate_n,
        "oracle-check": _run_oracle_check,
    }[config.command]
    columns, units, rows, summary = runner(config)
    snapshot = {}
    for line in serialize_config(config).splitlines():
        key, _, val = line.partition(" = ")
        snapshot[key] = val
    return ResultEnvelope(
        config=snapshot,
        columns=columns,
        units=units,
        rows=rows,
        summary=summary,
        warnings=config.params.validity_warnings(),
        version=__version__,
        wall_time_s=time.perf_counter() - t0,
    )


# -- serialization ------------------------------------------------------------

def _format_cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def envelope_to_csv(env: ResultEnvelope) -> str:
    lines = [f"# htc {env.version}"]
    for key, val in env.config.items():
        lines.append(f"# {key} = {val}")
    for key, val in sorted(env.summary.items()):
        lines.append(f"# summary.{key} = {val}")
    for warning in env.warnings:
        lines.append(f"# warning: {warning}")
    lines.append("# units: " + ",".join(env.units))
    lines.append(",".join(env.columns))
    for row in env.rows:
        lines.append(",".join(_format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def envelope_to_json(env: ResultEnvelope) -> str:
    payload = {
        "version": env.version,
        "config": env.config,
        "columns": env.columns,
        "units": env.units,
        "rows": [[v for v in row] for row in env.rows],
        "summary": env.summary,
        "warnings": list(env.warnings),
        "wall_time_s": env.wall_time_s,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_envelope(env: ResultEnvelope, path: str, fmt: str):
    text = envelope_to_csv(env) if fmt == "csv" else envelope_to_json(env)
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htc",
        description="Spectra of vibrationally dressed molecular ensembles "
                    "in a driven cavity.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--out", default=None, help="output path ('-' for "
                        "stdout)")
    parser.add_argument("--format", choices=FORMATS, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}")
        pairs = parse_config_pairs(text)
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, raw = item.partition("=")
            pairs[key.strip()] = (raw.strip(), 0)
        config = config_from_pairs(pairs, command=args.command)
        if args.out is not None:
            config = dataclasses.replace(config, output_path=args.out)
        if args.format is not None:
            config = dataclasses.replace(config, output_format=args.format)
    except ConfigError as exc:
        print(f"htc: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        env = run(config)
    except (kernels.KernelError, moments.SingularSystemError,
            oracle.ConvergenceError, ValueError) as exc:
        print(f"htc: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"htc: configuration error: {exc}", file=sys.stderr)
        return 2
    write_envelope(env, config.output_path, config.output_format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
