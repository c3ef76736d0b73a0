"""Command line entry point: ``nlocal <command> [options]``.

Options may also come from a JSON file (``--config``); explicit flags win.
Frequencies are given in MHz or GHz as the flag names say.
Exit codes: 0 success, 1 numerical failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .dynamics import (
    DriveSpec,
    IntegratorConfig,
    LindbladSpec,
    evolve_lindblad,
    resonant_frequency,
)
from .fit import FitConfig, fit_model
from .hamiltonian import (
    SpinSystemSpec,
    SpuriousDistribution,
    SpuriousModel,
    TargetSet,
    coupling_free_spec,
    default_spec,
    sample_spurious,
)
from .io import read_csv, write_csv, write_json
from .spectroscopy import SpectroscopySweep, generate_sweep
from .threshold import (
    analytic_bound,
    mean_cos,
    scaling_rows,
    scaling_slope,
    scaling_study,
    sensitivity_rows,
    spurious_sensitivity,
    threshold_scan,
)
from .units import ghz, mhz, to_mhz

SCHEMA_VERSION = 1
COMMANDS = ("sweep", "fit", "threshold", "scaling", "spurious", "dynamics", "bound")

COMMON_DEFAULTS = {
    "n": 4,
    "delta_ghz": 2.0,
    "epsilon_max_ghz": 10.0,
    "coupling_max_mhz": 300.0,
    "M_mhz": 50.0,
    "eta": 0.5,
    "grid_points": 21,
    "output_dir": ".",
    "jobs": None,
}

COMMAND_DEFAULTS = {
    "sweep": {"noise_mhz": 0.0, "distribution": "symmetric_uniform", "target_set": "all_non_nlocal_parameters"},
    "fit": {"noise_mhz": 0.0, "sweep": None, "starts": 4, "distribution": "symmetric_uniform",
            "target_set": "all_non_nlocal_parameters"},
    "threshold": {"sigma_min_mhz": 0.5, "sigma_max_mhz": 50.0, "sigma_points": 12, "realizations": 10, "head": 5,
                  "distribution": "symmetric_uniform", "target_set": "all_non_nlocal_parameters"},
    "scaling": {"n_list": [3, 4, 5], "sigma_min_mhz": 0.5, "sigma_max_mhz": 50.0, "sigma_points": 12,
                "realizations": 10, "head": 5, "distribution": "symmetric_uniform",
                "target_set": "all_non_nlocal_parameters"},
    "spurious": {"eta_grid": [0.0, 0.5, 1.0, 2.0, 3.0, 4.0], "sigma_mhz": 5.0, "realizations": 10,
                 "distribution": "positive_uniform", "target_set": "couplings_only"},
    "dynamics": {"n_list": None, "t2": [100.0], "t_end": 1000.0, "sample_interval": 1.0, "couplings": False,
                 "timeseries": True},
    "bound": {},
}


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with option values (flags override)")
    common.add_argument("--seed", type=int, help="master seed (fallback: NLOCAL_SEED, then 0)")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--jobs", type=int, help="worker processes (default: available CPUs)")
    common.add_argument("--n", type=int)
    common.add_argument("--delta-ghz", dest="delta_ghz", type=float)
    common.add_argument("--epsilon-max-ghz", dest="epsilon_max_ghz", type=float)
    common.add_argument("--coupling-max-mhz", dest="coupling_max_mhz", type=float)
    common.add_argument("--M-mhz", dest="M_mhz", type=float)
    common.add_argument("--eta", type=float)
    common.add_argument("--grid-points", dest="grid_points", type=int)

    spurious_opts = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    spurious_opts.add_argument("--distribution", choices=[d.value for d in SpuriousDistribution])
    spurious_opts.add_argument("--target-set", dest="target_set", choices=[t.value for t in TargetSet])

    sigma_opts = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    sigma_opts.add_argument("--sigma-min-mhz", dest="sigma_min_mhz", type=float)
    sigma_opts.add_argument("--sigma-max-mhz", dest="sigma_max_mhz", type=float)
    sigma_opts.add_argument("--sigma-points", dest="sigma_points", type=int)
    sigma_opts.add_argument("--realizations", type=int)
    sigma_opts.add_argument("--head", type=int)

    parser = argparse.ArgumentParser(prog="nlocal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common, spurious_opts], help="transition-energy variation sweep", argument_default=argparse.SUPPRESS)
    p.add_argument("--noise-mhz", dest="noise_mhz", type=float)

    p = sub.add_parser("fit", parents=[common, spurious_opts], help="fit n-local and (n-1)-local models", argument_default=argparse.SUPPRESS)
    p.add_argument("--noise-mhz", dest="noise_mhz", type=float)
    p.add_argument("--sweep", help="sweep CSV written by the sweep command (JSON sidecar required)")
    p.add_argument("--starts", type=int)

    sub.add_parser("threshold", parents=[common, spurious_opts, sigma_opts], help="critical noise amplitude", argument_default=argparse.SUPPRESS)

    p = sub.add_parser("scaling", parents=[common, spurious_opts, sigma_opts], help="critical noise vs n", argument_default=argparse.SUPPRESS)
    p.add_argument("--n-list", dest="n_list", type=_int_list)

    p = sub.add_parser("spurious", parents=[common, spurious_opts], help="deviations vs spurious amplitude", argument_default=argparse.SUPPRESS)
    p.add_argument("--eta-grid", dest="eta_grid", type=_float_list)
    p.add_argument("--sigma-mhz", dest="sigma_mhz", type=float)
    p.add_argument("--realizations", type=int)

    p = sub.add_parser("dynamics", parents=[common], help="driven-coupler Lindblad dynamics", argument_default=argparse.SUPPRESS)
    p.add_argument("--n-list", dest="n_list", type=_int_list, help="run every n in the list (overrides --n)")
    p.add_argument("--t2", type=_float_list, help="coherence time(s) in ns, comma separated")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--sample-interval", dest="sample_interval", type=float)
    p.add_argument("--couplings", action="store_true", default=argparse.SUPPRESS, help="random lower-locality couplings (default: none)")
    p.add_argument("--no-timeseries", dest="timeseries", action="store_false", default=argparse.SUPPRESS)

    sub.add_parser("bound", parents=[common], help="analytic sub-local deviation bound", argument_default=argparse.SUPPRESS)
    return parser


def _env_seed() -> int:
    raw = os.environ.get("NLOCAL_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"NLOCAL_SEED must be an integer, got {raw!r}") from exc


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    """Defaults, then the config file, then explicit flags. Unknown keys are rejected."""
    allowed = {**COMMON_DEFAULTS, **COMMAND_DEFAULTS[command]}
    allowed_keys = set(allowed) | {"seed", "command", "schema_version"}
    unknown = sorted(set(file_values) - allowed_keys)
    if unknown:
        raise ConfigError(f"unknown config field(s) for {command}: {', '.join(unknown)}")
    if file_values.get("command", command) != command:
        raise ConfigError(f"config file is for command {file_values['command']!r}, not {command!r}")
    if file_values.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {file_values['schema_version']!r}")
    merged = {**allowed, **{k: v for k, v in file_values.items() if k not in ("command", "schema_version")}}
    merged.update(flag_values)
    if merged.get("seed") is None:
        merged["seed"] = _env_seed()
    if not isinstance(merged["seed"], int) or isinstance(merged["seed"], bool):
        raise ConfigError("seed must be an integer")
    if merged["jobs"] is None:
        merged["jobs"] = _default_jobs()
    if merged["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    merged["command"] = command
    return merged


def _base_spec(cfg: dict, n: int | None = None) -> SpinSystemSpec:
    return default_spec(
        cfg["n"] if n is None else n,
        cfg["seed"],
        delta=ghz(cfg["delta_ghz"]),
        epsilon_max=ghz(cfg["epsilon_max_ghz"]),
        coupling_max=mhz(cfg["coupling_max_mhz"]),
        M=mhz(cfg["M_mhz"]),
    )


def _sigma_grid(cfg: dict) -> np.ndarray:
    if not 0 < cfg["sigma_min_mhz"] < cfg["sigma_max_mhz"]:
        raise ConfigError("need 0 < sigma_min_mhz < sigma_max_mhz")
    return np.geomspace(cfg["sigma_min_mhz"], cfg["sigma_max_mhz"], cfg["sigma_points"]) * 1e-3


def _spurious_model(cfg: dict) -> SpuriousModel:
    return SpuriousModel(cfg["eta"], cfg["distribution"], cfg["target_set"], seed=cfg["seed"])


def _cmd_sweep(cfg: dict, out: Path) -> list[Path]:
    spec = sample_spurious(_base_spec(cfg), _spurious_model(cfg))
    sweep = generate_sweep(spec, cfg["grid_points"], mhz(cfg["noise_mhz"]), cfg["seed"])
    path = out / "sweep.csv"
    sweep.write(path)
    return [path, path.with_suffix(".json")]


def _load_sweep(path: Path) -> tuple[SpectroscopySweep, SpinSystemSpec]:
    from .hamiltonian import FieldConfiguration

    sidecar = json.loads(path.with_suffix(".json").read_text())
    if sidecar.get("spec") is None:
        raise ConfigError(f"{path.with_suffix('.json')} has no spec")
    spec = SpinSystemSpec.from_dict(sidecar["spec"])
    rows = read_csv(path)
    masks = list(dict.fromkeys(int(r["config_bitmask"]) for r in rows))
    grid = np.array(list(dict.fromkeys(float(r["epsilon_GHz"]) for r in rows)))
    values = np.array([float(r["delta_E_MHz"]) for r in rows]).reshape(len(masks), len(grid))
    configs = [FieldConfiguration.from_bitmask(m, spec.n) for m in masks]
    clean = generate_sweep(spec, len(grid), configurations=configs)
    sweep = SpectroscopySweep(spec.n, configs, ghz(grid), mhz(values), clean.clean,
                              mhz(sidecar.get("noise_sigma_MHz", 0.0)), sidecar.get("seed"), spec)
    return sweep, replace(spec, spurious={}, coupler_on=False)


def _cmd_fit(cfg: dict, out: Path) -> list[Path]:
    if cfg["sweep"]:
        sweep, base = _load_sweep(Path(cfg["sweep"]))
    else:
        base = _base_spec(cfg)
        spec = sample_spurious(base, _spurious_model(cfg))
        sweep = generate_sweep(spec, cfg["grid_points"], mhz(cfg["noise_mhz"]), cfg["seed"])
    n = base.n
    config = FitConfig(starts=cfg["starts"], seed=cfg["seed"], eta=cfg["eta"], target_set=TargetSet(cfg["target_set"]))
    paths = []
    for k in (n, n - 1):
        outcome = fit_model(sweep, base, k, config)
        path = out / f"fit_k{k}.json"
        write_json(path, outcome.to_dict())
        paths.append(path)
        print(f"k={k} deviation_vs_clean={to_mhz(outcome.deviation_vs_clean):.6g} MHz converged={outcome.converged}")
    return paths


def _scan_kwargs(cfg: dict) -> dict:
    return {
        "sigma_grid": _sigma_grid(cfg),
        "realizations": cfg["realizations"],
        "eta": cfg["eta"],
        "distribution": SpuriousDistribution(cfg["distribution"]),
        "target_set": TargetSet(cfg["target_set"]),
        "head": cfg["head"],
        "grid_points": cfg["grid_points"],
    }


def _cmd_threshold(cfg: dict, out: Path) -> list[Path]:
    curve = threshold_scan(_base_spec(cfg), seed=cfg["seed"], jobs=cfg["jobs"], **_scan_kwargs(cfg))
    path = out / "threshold.csv"
    curve.write(path)
    flag = " (outside sigma grid)" if curve.out_of_range else ""
    print(f"sigma_c = {curve.sigma_c_mhz:.6g} MHz{flag}")
    return [path, path.with_suffix(".json")]


def _cmd_scaling(cfg: dict, out: Path) -> list[Path]:
    curves = scaling_study(cfg["n_list"], seed=cfg["seed"], spec_factory=lambda n: _base_spec(cfg, n),
                           jobs=cfg["jobs"], **_scan_kwargs(cfg))
    paths = []
    for n, curve in curves.items():
        path = out / f"threshold_n{n}.csv"
        curve.write(path)
        paths += [path, path.with_suffix(".json")]
    path = out / "scaling.csv"
    write_csv(path, ["n", "sigma_c_MHz"], scaling_rows(curves))
    summary = {"sigma_c_MHz": {str(n): c.sigma_c_mhz for n, c in curves.items()}}
    if len(curves) > 1:
        summary["log_slope"] = scaling_slope({n: c.sigma_c for n, c in curves.items()})
    write_json(out / "scaling.json", summary)
    return paths + [path, out / "scaling.json"]


def _cmd_spurious(cfg: dict, out: Path) -> list[Path]:
    points = spurious_sensitivity(
        _base_spec(cfg), cfg["eta_grid"], cfg["sigma_mhz"] * 1e-3, cfg["realizations"], cfg["seed"],
        distribution=SpuriousDistribution(cfg["distribution"]), target_set=TargetSet(cfg["target_set"]),
        grid_points=cfg["grid_points"], jobs=cfg["jobs"],
    )
    path = out / "spurious.csv"
    write_csv(path, ["eta", "dev_nlocal_MHz", "dev_sublocal_MHz"], sensitivity_rows(points))
    return [path]


def _cmd_dynamics(cfg: dict, out: Path) -> list[Path]:
    n_list = cfg["n_list"] or [cfg["n"]]
    t2_list = cfg["t2"] if isinstance(cfg["t2"], list) else [cfg["t2"]]
    integrator = IntegratorConfig(sample_interval=cfg["sample_interval"])
    rows, paths = [], []
    for n in n_list:
        if cfg["couplings"]:
            spec = _base_spec(cfg, n)
        else:
            spec = coupling_free_spec(n, delta=ghz(cfg["delta_ghz"]), epsilon_max=ghz(cfg["epsilon_max_ghz"]),
                                      M=mhz(cfg["M_mhz"]))
        drive = DriveSpec(M=mhz(cfg["M_mhz"]), omega=resonant_frequency(spec))
        for t2 in t2_list:
            report = evolve_lindblad(spec, drive, LindbladSpec(float(t2)), cfg["t_end"], config=integrator)
            rows.append((n, float(t2), report.contrast))
            print(f"n={n} T2={t2:g} ns contrast={report.contrast:.6g}")
            if cfg["timeseries"]:
                path = out / f"dynamics_n{n}_T2_{t2:g}.csv"
                header = ["t_ns"] + [f"pop_{m}" for m in range(1 << n)]
                write_csv(path, header, ([t, *p] for t, p in zip(report.time_grid, report.populations)))
                paths.append(path)
    path = out / "contrast.csv"
    write_csv(path, ["n", "T2_ns", "contrast"], rows)
    return paths + [path]


def _cmd_bound(cfg: dict, out: Path) -> list[Path]:
    delta, emax, M = ghz(cfg["delta_ghz"]), ghz(cfg["epsilon_max_ghz"]), mhz(cfg["M_mhz"])
    value = analytic_bound(cfg["n"], M, delta, emax)
    path = out / "bound.json"
    write_json(path, {"n": cfg["n"], "mean_cos": mean_cos(delta, emax), "bound_MHz": to_mhz(value)})
    print(f"bound = {to_mhz(value):.6g} MHz")
    return [path]


HANDLERS = {
    "sweep": _cmd_sweep,
    "fit": _cmd_fit,
    "threshold": _cmd_threshold,
    "scaling": _cmd_scaling,
    "spurious": _cmd_spurious,
    "dynamics": _cmd_dynamics,
    "bound": _cmd_bound,
}


def _load_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def run(argv=None) -> int:
    parser = _parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    command = args.pop("command")
    try:
        file_values = _load_file(args.pop("config")) if "config" in args else {}
        cfg = resolve_config(command, file_values, args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2

    out = Path(cfg["output_dir"])
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs = HANDLERS[command](cfg, out)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg,
        "seed": cfg["seed"],
        "version": __version__,
        "backend": kernels.BACKEND,
        "wall_time_s": time.perf_counter() - start,
        "outputs": sorted(str(p.relative_to(out)) for p in outputs),
    }
    write_json(out / "manifest.json", manifest)
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
