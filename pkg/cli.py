#!/usr/bin/env python3
"""
Command line for the Raman echo simulator.

Usage:
    raman-echo run --config run.json --out results/ [--per-group] [--svg]
    raman-echo preset fig3 --out results/fig3
    raman-echo sweep --config run.json --param omega_c --values 150,500,1000 --out sweep/

Exit status: 0 on success, 2 on configuration errors, 3 on numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from dynamics import IntegrationError
from echo_analysis import SweepResult, sweep_coupling, sweep_readout_area
from ensemble import run_ensemble
from pulses import PRESET_NAMES, PulseLabel, SequenceError, khz
from report import atomic_write_text, build_echo_report, sweep_csv, write_run_outputs
from run_config import ConfigError, RunConfig, parse_config, preset_config, serialize_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SWEEP_PARAMETERS = ("omega_c", "c2_area")


def _resolve_version() -> str:
    pyproject = Path(__file__).parent / "pyproject.toml"
    if pyproject.exists():
        try:
            import tomllib
        except ModuleNotFoundError:
            try:
                import tomli as tomllib  # type: ignore[no-redef]
            except ModuleNotFoundError:
                tomllib = None
        if tomllib is not None:
            with open(pyproject, "rb") as f:
                v = tomllib.load(f).get("project", {}).get("version")
            if v:
                return v
    try:
        from importlib.metadata import version
        return version("raman-echo-sim")
    except Exception:
        return "dev"


__version__ = _resolve_version()


def _load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([("<file>", f"cannot read {path}: {exc.strerror or exc}")]) from None
    return parse_config(text)


def _print_summary(report: dict, out_dir: Path) -> None:
    print("=" * 72)
    print(f"  Raman echo run: {report['name']}")
    print("=" * 72)
    events = report["events"]
    if not events:
        print("  No echoes detected.")
    for event in events:
        flag = "inverted" if event["inverted"] else "not inverted"
        print(f"  {event['kind']:<16} t = {event['time_us']:9.3f} us   amplitude {event['amplitude']:.6g}   ({flag})")
    predicted = report.get("predicted")
    if predicted:
        print(f"  Predicted: T_E1 = {predicted['t_e1_us']:.3f} us, T_E2 = {predicted['t_e2_us']:.3f} us")
    readout = report.get("readout")
    if readout:
        print(f"  Readout: peak |Im rho13| = {readout['peak_im_rho13']:.4g}, depletion = {readout['depletion']:.3f}")
    geometry = report.get("geometry")
    if geometry:
        print(f"  Geometry: {geometry['class']} (mismatch {geometry['mismatch']:.3g} rad/m)")
    print(f"  Outputs in {out_dir}")


def run_command(
    cfg: RunConfig,
    out_dir: Path,
    *,
    per_group: bool = False,
    svg: bool = False,
    workers: int | None = None,
    as_json: bool = False,
) -> int:
    """Integrate the configured ensemble, analyse it and write all outputs."""
    seq = cfg.to_sequence()
    spec = cfg.ensemble_spec()
    params = cfg.atom_params()
    interval = cfg.output.sample_interval_us
    per_group = per_group or cfg.output.per_group
    svg = svg or cfg.output.svg

    traj = run_ensemble(seq, spec, params, interval, per_group=per_group, workers=workers)
    reference = None
    if seq.find(PulseLabel.C2) is not None:
        logger.info("C2 present; running the no-readout reference")
        reference = run_ensemble(seq.without(PulseLabel.C2), spec, params, interval, workers=workers)
    report = build_echo_report(cfg.name, traj, seq, reference=reference, geometry=cfg.beam_geometry())
    write_run_outputs(
        out_dir, traj, seq, report,
        names=cfg.output.model_dump(include={"series_csv", "per_group_csv", "report_json", "plot_svg"}),
        per_group=per_group,
        svg=svg,
    )
    if as_json:
        print(report.to_json(), end="")
    else:
        _print_summary(report.to_dict(), out_dir)
    return EXIT_OK


def preset_command(name: str, out_dir: Path, *, svg: bool = False, workers: int | None = None, as_json: bool = False) -> int:
    """Write the preset's config.json next to its outputs, then run it."""
    cfg = preset_config(name)
    atomic_write_text(out_dir / "config.json", serialize_config(cfg))
    return run_command(cfg, out_dir, svg=svg, workers=workers, as_json=as_json)


def _parse_values(raw: str) -> list[float]:
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError([("--values", f"not a comma-separated list of numbers: {raw!r}")]) from None
    if not values:
        raise ConfigError([("--values", "needs at least one value")])
    return values


def sweep_command(cfg: RunConfig, param: str, values: list[float], out_dir: Path, *, workers: int | None = None) -> int:
    """omega_c values are kHz applied to the D pulse; c2_area values are radians."""
    seq = cfg.to_sequence()
    spec = cfg.ensemble_spec()
    params = cfg.atom_params()
    result: SweepResult
    if param == "omega_c":
        template = seq.find(PulseLabel.D) or next((p for p in seq.pulses if p.probe and p.coupling), None)
        if template is None:
            raise ConfigError([("sequence", "omega_c sweeps need a two-leg data pulse")])
        swept = sweep_coupling(template, [khz(v) for v in values], spec, params, workers=workers)
        best = values[swept.values.index(swept.argbest)]
        result = SweepResult("omega_c_khz", values, swept.objectives, best, swept.secondary)
    elif param == "c2_area":
        if seq.find(PulseLabel.C2) is None:
            raise ConfigError([("sequence", "c2_area sweeps need a C2 pulse")])
        result = sweep_readout_area(values, seq, spec, params, cfg.output.sample_interval_us, workers=workers)
    else:
        raise ConfigError([("--param", f"unknown sweep parameter {param!r}")])

    atomic_write_text(out_dir / "sweep.csv", sweep_csv(result))
    atomic_write_text(out_dir / cfg.output.report_json, _sweep_report(cfg.name, result))
    print(f"  Sweep {result.parameter}: {len(values)} value(s), argbest = {result.argbest:.6g}")
    print(f"  Outputs in {out_dir}")
    return EXIT_OK


def _sweep_report(name: str, result: SweepResult) -> str:
    return json.dumps({"name": name, "sweep": result.to_dict()}, indent=2) + "\n"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raman-echo",
        description="Simulate doubly rephased Raman echoes in an inhomogeneously broadened lambda medium.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Threads for ensemble integration (default: RAMAN_ECHO_WORKERS or 1)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a configuration file")
    run.add_argument("--config", required=True, help="Path to a RunConfig JSON file")
    run.add_argument("--out", required=True, help="Output directory")
    run.add_argument("--per-group", action="store_true", help="Also write the per-group CSV")
    run.add_argument("--svg", action="store_true", help="Also write an SVG plot")
    run.add_argument("--json", action="store_true", help="Print the report JSON instead of a summary")

    preset = sub.add_parser("preset", help="Materialize and run a figure preset")
    preset.add_argument("name", choices=PRESET_NAMES)
    preset.add_argument("--out", required=True, help="Output directory")
    preset.add_argument("--svg", action="store_true", help="Also write an SVG plot")
    preset.add_argument("--json", action="store_true", help="Print the report JSON instead of a summary")

    sweep = sub.add_parser("sweep", help="Sweep one parameter of a configuration")
    sweep.add_argument("--config", required=True, help="Path to a RunConfig JSON file")
    sweep.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    sweep.add_argument("--values", required=True, help="Comma-separated values (kHz for omega_c, rad for c2_area)")
    sweep.add_argument("--out", required=True, help="Output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s [%(name)s] %(message)s",
    )

    try:
        if args.command == "run":
            return run_command(
                _load_config(args.config), Path(args.out),
                per_group=args.per_group, svg=args.svg, workers=args.workers, as_json=args.json,
            )
        if args.command == "preset":
            return preset_command(args.name, Path(args.out), svg=args.svg, workers=args.workers, as_json=args.json)
        return sweep_command(
            _load_config(args.config), args.param, _parse_values(args.values), Path(args.out), workers=args.workers,
        )
    except ConfigError as exc:
        for path, message in exc.diagnostics:
            print(f"Error: {path}: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except SequenceError as exc:
        for violation in exc.violations:
            print(f"Error: {violation}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        where = f" (t={exc.time_us} us, group {exc.group_index})" if exc.time_us is not None else ""
        print(f"Error: integration failed{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
