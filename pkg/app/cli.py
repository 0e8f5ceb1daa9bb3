"""
Command-line front end.

    python -m app [--config PATH] [--seed N] [--workers N] [--out PATH] [-v] <command> ...

Commands: build, run, mc, analyze, fidelity, rb-extract, export-ltspice, serve.
Exit codes: 0 success, 2 configuration or input error, 3 solver error.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from . import analysis, artifacts, topology
from .exceptions import NetlistError, QsimError, SolverError
from .montecarlo import run_ensemble
from .netlist import emit_netlist, parse_netlist, validate
from .schemas import (
    ExperimentConfig,
    FidelityInput,
    RbMatrixFile,
    SweepPlan,
    as_complex,
)
from .sweep import run_sweep

load_dotenv()

WORKERS_ENV = "QSIM_WORKERS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Configuration problems reported with exit code 2."""


# ============================================================================
# Helpers
# ============================================================================

def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for error in exc.errors():
        path = ".".join(str(part) for part in error["loc"]) or "<root>"
        lines.append(f"  {path}: {error['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Read --config (JSON) and apply --seed; defaults when no file is given."""
    data = {}
    if args.config:
        path = Path(args.config)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    config = ExperimentConfig.model_validate(data)
    if args.seed is not None:
        variation = config.variation.model_copy(update={"seed": args.seed})
        config = config.model_copy(update={"variation": variation})
    return config


def effective_config(config: ExperimentConfig) -> dict:
    return json.loads(config.model_dump_json())


def resolve_sweep(config: ExperimentConfig, args: argparse.Namespace) -> SweepPlan:
    data = config.sweep.model_dump()
    overrides = {
        "f_min": getattr(args, "f_min", None),
        "f_max": getattr(args, "f_max", None),
        "n_coarse": getattr(args, "points", None),
        "spacing": getattr(args, "spacing", None),
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    refine = dict(data["refine"])
    if getattr(args, "no_refine", False):
        refine["enabled"] = False
    if getattr(args, "min_points", None) is not None:
        refine["min_points_per_fwhm"] = args.min_points
    if getattr(args, "max_depth", None) is not None:
        refine["max_depth"] = args.max_depth
    data["refine"] = refine
    return SweepPlan.model_validate(data)


def output_path(args: argparse.Namespace, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


# ============================================================================
# Commands
# ============================================================================

def cmd_build(args: argparse.Namespace) -> int:
    config = load_config(args)
    netlist = topology.build_array(config.array, config.qubit, config.drive)
    diagnostics = validate(netlist)
    out = output_path(args, "circuit.cir")
    out.write_text(emit_netlist(netlist), encoding="utf-8")
    print(f"netlist: {out} ({len(netlist.elements)} elements, {netlist.n_nodes} nodes)")

    table = topology.nominal_table(config.array, config.qubit)
    for u, values in topology.table_derived_elements(table, limit=4):
        print(f"unit {u}: r_q={values.r_q:.6g} ohm  l_q={values.l_q:.6g} H  "
              f"r_r={values.r_r:.6g} ohm  l_r={values.l_r:.6g} H")
    if len(table.units) > 4:
        print(f"... {len(table.units) - 4} more units")

    p = config.qubit
    g = topology.coupling_strength(p.c_g, p.c_q, p.c_r, p.f_q, p.f_r)
    check = topology.check_dispersive(g, p.f_q, p.f_r)
    level = topology.drive_current(config.drive)
    print(f"g/2pi = {g / 1e9:.4f} GHz")
    print(f"dispersive: delta={check.delta / 1e9:.6g} GHz  ratio={check.ratio:.6g}  "
          f"{'ok' if check.ok else 'NOT dispersive'}")
    print(f"drive: I={level.i:.4g} A  P={level.p:.4g} W  n={level.n_photons:.4g}")
    for diagnostic in diagnostics:
        print(f"diagnostic: {diagnostic.code}: {diagnostic.message}")
    return EXIT_CONFIG if diagnostics else EXIT_OK


def _read_netlist(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read netlist {path}: {exc}") from exc
    return parse_netlist(text)


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args)
    netlist = _read_netlist(args.netlist)
    if not netlist.probes:
        raise NetlistError("no probes")
    plan = resolve_sweep(config, args)
    spectrum = run_sweep(netlist, plan, workers=args.workers)
    out = output_path(args, "spectrum.csv")
    artifacts.write_spectrum_csv(spectrum, out)
    print(f"spectrum: {out} ({len(spectrum.freqs)} points, {len(spectrum.probes)} probes)")
    return EXIT_OK


def cmd_mc(args: argparse.Namespace) -> int:
    config = load_config(args)
    out_dir = output_path(args, config.name)
    (out_dir / "spectra").mkdir(parents=True, exist_ok=True)
    (out_dir / "reports").mkdir(parents=True, exist_ok=True)

    base = topology.build_array(config.array, config.qubit, config.drive)
    (out_dir / "netlist.cir").write_text(emit_netlist(base), encoding="utf-8")

    ensemble = run_ensemble(config.array, config.qubit, config.drive, config.variation,
                            config.sweep, workers=args.workers)
    settings = config.analysis
    n_qubits = settings.n_qubits_for_fidelity or config.array.n_qubits
    outcome = analysis.analyse_ensemble(ensemble, settings, n_qubits)

    spectrum_paths: List[Optional[str]] = []
    report_paths: List[Optional[str]] = []
    for run, report in zip(ensemble.runs, outcome.reports):
        spectrum_name = None
        if run.spectrum is not None:
            spectrum_name = f"spectra/run_{run.sample_id:04d}.{args.format}"
            if args.format == "npz":
                artifacts.write_spectrum_npz(run.spectrum, out_dir / spectrum_name)
            else:
                artifacts.write_spectrum_csv(run.spectrum, out_dir / spectrum_name)
        report_name = f"reports/run_{run.sample_id:04d}.json"
        artifacts.write_json(report, out_dir / report_name)
        spectrum_paths.append(spectrum_name)
        report_paths.append(report_name)

    summary = outcome.summary
    artifacts.write_json(summary, out_dir / "summary.json")

    digests = {"config": artifacts.text_digest(config.model_dump_json())}
    if args.config:
        digests["config_file"] = artifacts.file_digest(args.config)
    manifest = ensemble.manifest(effective_config(config), spectrum_paths, report_paths, digests)
    artifacts.write_json(manifest, out_dir / "manifest.json")

    print(f"ensemble: {out_dir} ({summary.n_runs} runs, {summary.n_failed} failed)")
    if summary.spread is not None:
        print(f"infidelity: min={summary.minimum:.4g}  max={summary.maximum:.4g}  spread={summary.spread:.4g}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    config = load_config(args)
    try:
        spectrum = artifacts.read_spectrum_csv(args.spectrum)
    except OSError as exc:
        raise ConfigError(f"cannot read spectrum {args.spectrum}: {exc}") from exc
    settings = config.analysis
    boundary = args.band_boundary
    if boundary is None:
        boundary = topology.band_boundary(config.array, config.qubit)
    probe = args.probe or spectrum.probes[0]
    peaks = analysis.peaks_with_settings(spectrum, settings, boundary, probe)
    n_qubits = settings.n_qubits_for_fidelity or config.array.n_qubits
    report = analysis.build_report(0, peaks, n_qubits, settings.tau_op_s, settings.aggregation)
    out = output_path(args, "report.json")
    artifacts.write_json(report, out)
    for peak in peaks:
        print(f"{peak.band:9s} f={peak.f_peak / 1e9:.6f} GHz  fwhm={peak.fwhm_hz / 1e6:.6g} MHz  "
              f"Q={peak.q_p:.5g}  T1m={peak.t1_m:.5g} s{'' if peak.resolved else '  (unresolved)'}")
    if report.infidelity.value is not None:
        print(f"infidelity: {report.infidelity.value:.6g}")
    print(f"report: {out}")
    return EXIT_OK


def cmd_fidelity(args: argparse.Namespace) -> int:
    result = analysis.fidelity(FidelityInput(
        n_qubits=args.n_qubits, tau_op=args.tau_op, gamma1=args.gamma1, gamma2=args.gamma2,
    ))
    print(f"prefactor: {result.prefactor:.10g}")
    print(f"infidelity: {result.infidelity:.10g}")
    print(f"fidelity: {result.f:.10g}{'  (saturated)' if result.saturated else ''}")
    return EXIT_OK


def cmd_rb_extract(args: argparse.Namespace) -> int:
    try:
        data = json.loads(Path(args.matrix).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read matrix file {args.matrix}: {exc}") from exc
    matrix = RbMatrixFile.model_validate(data)
    t_f = args.t_f if args.t_f is not None else matrix.t_f
    if t_f is None:
        raise ConfigError("t_f missing: pass --t-f or put t_f in the matrix file")
    rho = analysis.RbDensityMatrix(
        a=matrix.a, c=matrix.c, b=complex(matrix.re_b, matrix.im_b), t_f=t_f,
        alpha0=as_complex(matrix.alpha0), beta0=as_complex(matrix.beta0),
    )
    result = analysis.rb_extract(rho)
    print(f"gamma1: {result.gamma1:.12g} 1/s")
    print(f"gamma2: {result.gamma2:.12g} 1/s")
    print(f"delta_omega: {result.delta_omega:.12g} rad/s")
    if result.gamma1 > 0:
        print(f"t1: {1.0 / result.gamma1:.12g} s")
    for flag in result.flags:
        print(f"flag: {flag}")
    return EXIT_OK


def cmd_export_ltspice(args: argparse.Namespace) -> int:
    config = load_config(args)
    if args.netlist:
        netlist = _read_netlist(args.netlist)
    else:
        netlist = topology.build_array(config.array, config.qubit, config.drive)
    out = output_path(args, "circuit.net")
    out.write_text(emit_netlist(netlist, "ltspice", resolve_sweep(config, args)), encoding="utf-8")
    print(f"ltspice netlist: {out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================

def _add_sweep_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--f-min", type=float, help="Lowest frequency (Hz)")
    parser.add_argument("--f-max", type=float, help="Highest frequency (Hz)")
    parser.add_argument("--points", type=int, help="Coarse grid points")
    parser.add_argument("--spacing", choices=["linear", "log"])
    parser.add_argument("--no-refine", action="store_true", help="Skip refinement around resonances")
    parser.add_argument("--min-points", type=int, help="Points required inside each peak width")
    parser.add_argument("--max-depth", type=int, help="Refinement rounds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsim",
        description="Frequency-domain simulator for superconducting qubit readout circuits.",
    )
    parser.add_argument("--config", help="Experiment config (JSON)")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed (overrides the config)")
    parser.add_argument("--workers", type=int, help=f"Worker processes (default: {WORKERS_ENV} or 1)")
    parser.add_argument("--out", help="Output file or directory")
    parser.add_argument("-v", "--verbose", default=logging.INFO, help="Be verbose",
                        action="store_const", dest="loglevel", const=logging.DEBUG)
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("build", help="Write the netlist described by the config").set_defaults(handler=cmd_build)

    run = commands.add_parser("run", help="AC sweep of a netlist into a spectrum CSV")
    run.add_argument("netlist", help="Native netlist (.cir)")
    _add_sweep_flags(run)
    run.set_defaults(handler=cmd_run)

    mc = commands.add_parser("mc", help="Monte Carlo ensemble with analysis reports")
    mc.add_argument("--format", choices=["csv", "npz"], default="csv", help="Spectrum file format")
    mc.set_defaults(handler=cmd_mc)

    analyze = commands.add_parser("analyze", help="Peaks and infidelity of a spectrum CSV")
    analyze.add_argument("spectrum", help="Spectrum CSV written by 'run'")
    analyze.add_argument("--probe", help="Probe to analyse (default: first)")
    analyze.add_argument("--band-boundary", type=float, help="Qubit/resonator boundary (Hz)")
    analyze.set_defaults(handler=cmd_analyze)

    fid = commands.add_parser("fidelity", help="Decoherence-limited fidelity")
    fid.add_argument("--n-qubits", type=int, required=True)
    fid.add_argument("--tau-op", type=float, required=True, help="Operating time (s)")
    fid.add_argument("--gamma1", type=float, required=True, help="1/s")
    fid.add_argument("--gamma2", type=float, help="1/s")
    fid.set_defaults(handler=cmd_fidelity)

    rb = commands.add_parser("rb-extract", help="Relaxation rates from a density matrix")
    rb.add_argument("matrix", help="JSON with a, c, re_b, im_b, alpha0, beta0")
    rb.add_argument("--t-f", type=float, help="Final time (s)")
    rb.set_defaults(handler=cmd_rb_extract)

    export = commands.add_parser("export-ltspice", help="LTspice deck of a netlist or config")
    export.add_argument("netlist", nargs="?", help="Native netlist (default: build from config)")
    _add_sweep_flags(export)
    export.set_defaults(handler=cmd_export_ltspice)

    serve = commands.add_parser("serve", help="Run the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.loglevel, format="%(levelname)s %(name)s: %(message)s")
    if args.workers is None:
        setting = os.getenv(WORKERS_ENV, "1")
        try:
            args.workers = int(setting)
        except ValueError:
            print(f"error: {WORKERS_ENV} must be an integer, got '{setting}'", file=sys.stderr)
            return EXIT_CONFIG
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {format_validation_error(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, NetlistError, QsimError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
