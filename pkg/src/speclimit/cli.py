"""Command line driver.

Subcommands cover the full workflow: simulate spectra, subtract
current-on from current-off data, fit spectral models, extract
Bayesian upper limits (forbidden-line and continuum analyses),
evaluate upgrade sensitivity budgets, and print the physical
constants in use.

Every run is driven by a JSON config whose resolved form (after
--seed/--cl overrides) is hashed into the report, so identical
configs produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .constants import CODATA2018, Exposure, constants_table
from .csl import TargetMaterial, lambda_from_alpha
from .errors import (
    ConfigError,
    DegenerateMapError,
    FitError,
    ScanRangeError,
    SpectrumFormatError,
    ToolkitError,
)
from .fileio import (
    canonical_config_hash,
    format_number,
    load_config,
    load_spectrum,
    write_report,
    write_residual,
    write_spectrum,
    write_table,
)
from .limits import FitProblem, bayesian_upper_limit, fit_minimize, parameter_uncertainties
from .pep import PepRunConfig, PepTransition, pep_upper_limit
from .projection import ImprovementBudget, budget_report_rows, reference_budget
from .spectra import (
    DetectorResponse,
    EnergyGrid,
    OneOverEContinuum,
    PolynomialBackground,
    SpectralModel,
    model_description,
    model_from_description,
    simulate_spectrum,
    subtract_spectra,
)

__all__ = ["main"]

_FLAT_PRIOR_NOTE = "flat in the signal amplitude, zero below zero"


def _require(config: dict, key: str, kind: str):
    if key not in config:
        raise ConfigError(f"{kind} config requires '{key}'")
    return config[key]


def _resolve_path(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def _build_grid(entry: dict) -> EnergyGrid:
    if "edges" in entry:
        return EnergyGrid(np.asarray(entry["edges"], dtype=float))
    for key in ("lo_kev", "hi_kev", "n_bins"):
        if key not in entry:
            raise ConfigError(f"grid needs 'edges' or lo_kev/hi_kev/n_bins, missing {key!r}")
    return EnergyGrid.uniform(float(entry["lo_kev"]), float(entry["hi_kev"]),
                              int(entry["n_bins"]))


def _build_response(entry: dict) -> DetectorResponse:
    if "fwhm_kev_at_ref" not in entry:
        raise ConfigError("response requires 'fwhm_kev_at_ref'")
    efficiency = entry.get("efficiency", 1.0)
    if isinstance(efficiency, list):
        efficiency = tuple(efficiency)
    return DetectorResponse(
        fwhm_kev_at_ref=float(entry["fwhm_kev_at_ref"]),
        reference_energy_kev=float(entry.get("reference_energy_kev", 8.0)),
        resolution_model=entry.get("resolution_model", "constant"),
        efficiency=efficiency,
    )


def _parse_ref(entry) -> tuple:
    """Config form of a parameter reference: [component, attr] or
    [component, "coefficients", index]."""
    if not isinstance(entry, (list, tuple)) or len(entry) not in (2, 3):
        raise ConfigError(
            f"parameter reference must be [component, attr] or "
            f"[component, 'coefficients', index], got {entry!r}"
        )
    if len(entry) == 2:
        return int(entry[0]), str(entry[1])
    return int(entry[0]), str(entry[1]), int(entry[2])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_cli_config(args, expected_kind: str) -> tuple[dict, Path]:
    path = Path(args.config)
    config = load_config(path)
    kind = config.get("kind")
    if kind != expected_kind:
        raise ConfigError(
            f"{path}: config kind {kind!r} does not match command {expected_kind!r}"
        )
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "cl", None) is not None:
        config["confidence_level"] = args.cl
    return config, path.parent


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    config, _ = _load_cli_config(args, "simulate")
    out = _out_dir(args)
    grid = _build_grid(_require(config, "grid", "simulate"))
    model = model_from_description(_require(config, "model", "simulate"))
    exposure_cfg = config.get("exposure", {"mass_kg": 1.0, "live_time_days": 1.0})
    exposure = Exposure(mass_kg=float(exposure_cfg["mass_kg"]),
                        live_time_days=float(exposure_cfg["live_time_days"]))
    seed = int(config.get("seed", 0))
    config["seed"] = seed
    acquisition_days = float(config.get("acquisition_days", exposure.live_time_days))
    tag = config.get("tag", "simulated")
    config_hash = canonical_config_hash(config)

    spectrum = simulate_spectrum(model, grid, seed, exposure=exposure,
                                 acquisition_days=acquisition_days, tag=tag)
    spectrum_path = write_spectrum(out / "spectrum.txt", spectrum,
                                   extra_header={"config-hash": config_hash})
    write_report(out / "report.txt", [
        ("command", "simulate"),
        ("config-hash", config_hash),
        ("seed", seed),
        ("tag", tag),
        ("bins", grid.n_bins),
        ("energy-lo-kev", grid.lo_kev),
        ("energy-hi-kev", grid.hi_kev),
        ("mass-kg", exposure.mass_kg),
        ("live-time-days", exposure.live_time_days),
        ("acquisition-days", acquisition_days),
        ("total-counts", int(spectrum.total_counts)),
        ("spectrum-file", spectrum_path.name),
    ])
    print(f"wrote {spectrum_path}")
    print(f"total counts: {int(spectrum.total_counts)}")
    return 0


def _cmd_subtract(args) -> int:
    out = _out_dir(args)
    on = load_spectrum(Path(args.on))
    off = load_spectrum(Path(args.off))
    ratio = None if args.ratio is None else float(args.ratio)
    residual = subtract_spectra(on, off, ratio=ratio)
    config_hash = canonical_config_hash(
        {"kind": "subtract", "on": args.on, "off": args.off, "ratio": ratio}
    )
    residual_path = write_residual(out / "residual.txt", residual,
                                   extra_header={"config-hash": config_hash})
    write_report(out / "report.txt", [
        ("command", "subtract"),
        ("config-hash", config_hash),
        ("on-file", args.on),
        ("off-file", args.off),
        ("normalization-ratio", residual.normalization_ratio),
        ("bins", residual.grid.n_bins),
        ("residual-file", residual_path.name),
    ])
    print(f"wrote {residual_path}")
    return 0


def _cmd_fit(args) -> int:
    config, base = _load_cli_config(args, "fit")
    out = _out_dir(args)
    spectrum = load_spectrum(_resolve_path(base, _require(config, "spectrum", "fit")))
    model = model_from_description(_require(config, "model", "fit"))
    free = tuple(_parse_ref(entry) for entry in _require(config, "free", "fit"))
    signal = _parse_ref(config["signal"]) if "signal" in config else free[0]
    statistic = config.get("statistic", "chi2")
    seed = int(config.get("seed", 0))
    config["seed"] = seed
    config_hash = canonical_config_hash(config)

    problem = FitProblem.from_spectrum(spectrum, model, free=free, signal=signal,
                                       statistic=statistic)
    result = fit_minimize(problem, seed=seed)
    rows = [
        ("command", "fit"),
        ("config-hash", config_hash),
        ("statistic", statistic),
        ("statistic-value", result.statistic),
        ("bins", spectrum.grid.n_bins),
        ("free-parameters", len(free)),
        ("converged", str(result.converged).lower()),
        ("restarts", result.n_restarts),
        ("evaluations", result.n_evaluations),
    ]
    for name, value in result.by_name(problem).items():
        rows.append((f"fit.{name}", value))
    try:
        uncertainties = parameter_uncertainties(problem, result.values)
    except FitError:
        rows.append(("uncertainties", "unavailable (degenerate curvature)"))
    else:
        for ref, value in zip(problem.free, uncertainties):
            rows.append((f"uncertainty.{problem.parameter_name(ref)}", value))
    write_report(out / "report.txt", rows)

    fitted = problem.with_values(result.values)
    (out / "fitted_model.json").write_text(
        json.dumps(model_description(fitted), sort_keys=True, indent=2) + "\n"
    )
    print(f"{statistic} = {format_number(result.statistic)} "
          f"over {spectrum.grid.n_bins} bins")
    return 0


def _limit_csl(args, config: dict, base: Path) -> int:
    out = _out_dir(args)
    spectrum = load_spectrum(_resolve_path(base, _require(config, "spectrum", "limit")))
    cl = float(config.get("confidence_level", 0.95))
    statistic = config.get("statistic", "chi2")
    seed = int(config.get("seed", 0))
    config["seed"] = seed
    grid_rtol = float(config.get("grid_rtol", 1e-3))
    config_hash = canonical_config_hash(config)

    background_cfg = config.get("background", {})
    coefficients = tuple(float(c) for c in background_cfg.get("coefficients", [0.0]))
    response = _build_response(config.get("response", {"fwhm_kev_at_ref": 0.3}))
    target_cfg = config.get("target", {})
    target = TargetMaterial.from_table(
        target_cfg.get("element", "Ge"),
        quasi_free_electrons=target_cfg.get("quasi_free_electrons"),
    )
    correlation_length_m = float(
        config.get("correlation_length_m", CODATA2018.correlation_length_default_m)
    )
    efficiency = float(config.get("detection_efficiency", 1.0))
    if not 0.0 < efficiency <= 1.0:
        raise ConfigError("detection_efficiency must lie in (0, 1]")

    model = SpectralModel(
        components=(OneOverEContinuum(alpha=1.0), PolynomialBackground(coefficients)),
        response=response,
    )
    free = ((0, "alpha"),) + tuple(
        (1, "coefficients", k) for k in range(len(coefficients))
    )
    problem = FitProblem.from_spectrum(spectrum, model, free=free,
                                       signal=(0, "alpha"), statistic=statistic)
    limit = bayesian_upper_limit(problem, cl, seed=seed, grid_rtol=grid_rtol)

    # the fitted amplitude counts only detected photons; undo the
    # detection efficiency before mapping back to a collapse rate
    alpha_bound = limit.upper_bound / efficiency
    lam = lambda_from_alpha(alpha_bound, target, spectrum.exposure,
                            correlation_length_m=correlation_length_m,
                            mass_proportional=False)
    lam_mass = lambda_from_alpha(alpha_bound, target, spectrum.exposure,
                                 correlation_length_m=correlation_length_m,
                                 mass_proportional=True)
    write_report(out / "report.txt", [
        ("command", "limit"),
        ("analysis", "csl"),
        ("config-hash", config_hash),
        ("confidence-level", cl),
        ("statistic", statistic),
        ("method", limit.method),
        ("prior", _FLAT_PRIOR_NOTE),
        ("target-element", target.element),
        ("quasi-free-electrons-per-atom", target.quasi_free_electrons_per_atom),
        ("exposure-kg-day", spectrum.exposure.product_kg_day),
        ("correlation-length-m", correlation_length_m),
        ("detection-efficiency", efficiency),
        ("continuum-amplitude-upper-bound", alpha_bound),
        ("best-fit-amplitude", limit.metadata["best_signal"]),
        ("statistic-min", limit.metadata["statistic_min"]),
        ("lambda-upper-bound-per-s", lam),
        ("lambda-mass-proportional-upper-bound-per-s", lam_mass),
        ("mass-mode-ratio", lam_mass / lam),
        ("scan-points", limit.metadata["scan_points"]),
    ])
    write_table(out / "scan.dat", ("amplitude", "profiled_statistic"),
                (limit.scan[:, 0], limit.scan[:, 1]),
                header_lines=(f"config-hash: {config_hash}",))
    print(f"lambda upper bound at {format_number(cl)} CL: {format_number(lam)} 1/s")
    print(f"mass-proportional: {format_number(lam_mass)} 1/s")
    return 0


def _limit_pep(args, config: dict, base: Path) -> int:
    out = _out_dir(args)
    on = load_spectrum(_resolve_path(base, _require(config, "on", "limit")))
    off = load_spectrum(_resolve_path(base, _require(config, "off", "limit")))
    ratio = config.get("ratio")
    residual = subtract_spectra(on, off, ratio=None if ratio is None else float(ratio))

    transition_cfg = config.get("transition", {})
    transition = PepTransition(
        normal_energy_kev=float(transition_cfg.get("normal_energy_kev", 8.0)),
        shift_kev=float(transition_cfg.get("shift_kev", 0.30)),
    )
    response = _build_response(_require(config, "response", "limit"))
    run_cfg = _require(config, "run", "limit")
    for key in ("current_a", "duration_s", "geometric_acceptance", "detection_efficiency"):
        if key not in run_cfg:
            raise ConfigError(f"limit config run section requires '{key}'")
    run = PepRunConfig(
        current_a=float(run_cfg["current_a"]),
        duration_s=float(run_cfg["duration_s"]),
        geometric_acceptance=float(run_cfg["geometric_acceptance"]),
        detection_efficiency=float(run_cfg["detection_efficiency"]),
        capture_cascade_factor=float(run_cfg.get("capture_cascade_factor", 0.1)),
        capture_opportunities=float(run_cfg.get("capture_opportunities", 1.0)),
    )
    cl = float(config.get("confidence_level", 0.95))
    window_multiple = float(config.get("window_fwhm_multiple", 1.5))
    grid_rtol = float(config.get("grid_rtol", 1e-3))
    config["seed"] = int(config.get("seed", 0))
    config_hash = canonical_config_hash(config)

    limit = pep_upper_limit(residual, transition, response, run, cl,
                            window_fwhm_multiple=window_multiple,
                            grid_rtol=grid_rtol)
    window_lo, window_hi = limit.metadata["window_kev"]
    write_residual(out / "residual.txt", residual,
                   extra_header={"config-hash": config_hash})
    write_report(out / "report.txt", [
        ("command", "limit"),
        ("analysis", "pep"),
        ("config-hash", config_hash),
        ("confidence-level", cl),
        ("method", limit.method),
        ("prior", _FLAT_PRIOR_NOTE),
        ("forbidden-energy-kev", transition.forbidden_energy_kev),
        ("window-lo-kev", window_lo),
        ("window-hi-kev", window_hi),
        ("window-bins", limit.metadata["window_bins"]),
        ("normalization-ratio", residual.normalization_ratio),
        ("new-electrons", run.new_electron_count),
        ("unit-yield-counts", limit.metadata["unit_yield_counts"]),
        ("excess-counts-upper-bound", limit.metadata["counts_upper_bound"]),
        ("beta2-over-2-upper-bound", limit.upper_bound),
        ("best-fit-beta2-over-2", limit.metadata["best_signal"]),
        ("scan-points", limit.metadata["scan_points"]),
    ])
    write_table(out / "scan.dat", ("beta2_over_2", "profiled_statistic"),
                (limit.scan[:, 0], limit.scan[:, 1]),
                header_lines=(f"config-hash: {config_hash}",))
    print(f"beta^2/2 upper bound at {format_number(cl)} CL: "
          f"{format_number(limit.upper_bound)}")
    return 0


def _cmd_limit(args) -> int:
    config, base = _load_cli_config(args, "limit")
    analysis = _require(config, "analysis", "limit")
    if analysis == "csl":
        return _limit_csl(args, config, base)
    if analysis == "pep":
        return _limit_pep(args, config, base)
    raise ConfigError(f"unknown limit analysis {analysis!r}, expected 'csl' or 'pep'")


def _cmd_project(args) -> int:
    if args.config is not None:
        config = load_config(Path(args.config))
        if config.get("kind") != "project":
            raise ConfigError(f"{args.config}: config kind must be 'project'")
        budget = ImprovementBudget.from_mapping(config)
    else:
        config = {"kind": "project", "budget": "reference"}
        budget = reference_budget()
    config_hash = canonical_config_hash(config)

    rows = [("command", "project"), ("config-hash", config_hash)]
    for name, value in budget.linear_factors:
        rows.append((f"linear.{name}", str(value)))
    for name, (lo, hi) in budget.background_factors:
        rows.append((f"background.{name}", str(lo) if lo == hi else f"{lo} - {hi}"))
    headline = budget_report_rows(budget)
    rows.extend(tuple(line.split(": ", 1)) for line in headline)

    for line in headline:
        print(line)
    if args.out is not None:
        out = _out_dir(args)
        write_report(out / "report.txt", rows)
        print(f"wrote {out / 'report.txt'}")
    return 0


def _cmd_constants(args) -> int:
    table = constants_table()
    print(table, end="")
    if args.out is not None:
        out = _out_dir(args)
        (out / "report.txt").write_text(table)
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speclimit",
        description="Forward modelling and upper-limit extraction for "
                    "low-background X-ray spectra.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a Poisson spectrum from a model")
    p.add_argument("--config", required=True, help="JSON config with kind 'simulate'")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("subtract", help="subtract a current-off spectrum from a "
                                        "current-on spectrum")
    p.add_argument("--on", required=True, help="current-on spectrum file")
    p.add_argument("--off", required=True, help="current-off spectrum file")
    p.add_argument("--ratio", type=float, default=None,
                   help="normalization ratio; defaults to the acquisition-time ratio")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_subtract)

    p = sub.add_parser("fit", help="fit a spectral model to a spectrum file")
    p.add_argument("--config", required=True, help="JSON config with kind 'fit'")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("limit", help="Bayesian upper limit (csl or pep analysis)")
    p.add_argument("--config", required=True, help="JSON config with kind 'limit'")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--cl", type=float, default=None,
                   help="override the config confidence level")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_limit)

    p = sub.add_parser("project", help="evaluate an upgrade sensitivity budget")
    p.add_argument("--config", default=None,
                   help="JSON config with kind 'project'; omit for the "
                        "built-in reference budget")
    p.add_argument("--out", default=None, help="optional output directory")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("constants", help="print the physical constants in use")
    p.add_argument("--out", default=None, help="optional output directory")
    p.set_defaults(func=_cmd_constants)

    return parser


def _stage_for(err: BaseException) -> str:
    if isinstance(err, ConfigError):
        return "config"
    if isinstance(err, (SpectrumFormatError, OSError)):
        return "io"
    if isinstance(err, FitError):
        return "fit"
    if isinstance(err, (ScanRangeError, DegenerateMapError)):
        return "limit"
    return "build"


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ToolkitError, OSError) as err:
        print(f"speclimit: error [{_stage_for(err)}]: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
