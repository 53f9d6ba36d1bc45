"""Operator command line: validate, render, analyze, serve.

Exit codes are stable for scripting: 0 success, 2 parameter/validation
failure, 3 I/O failure, 4 runtime failure.  All randomness flows from the
config's seed (overridable with --seed); nothing is time-seeded, so a
default run is reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .circuit import simulate_schedule, simulate_trace
from .config import ConfigError, parse_session_config
from .params import StimMode, ValidationError, validate_params
from .trace import (
    TraceParseError,
    band_energy_ratio,
    detect_pulses,
    fft_spectrum,
    measure_duty_and_freq,
    read_trace_csv,
    write_trace_csv,
)
from .waveforms import TRNS_BANDWIDTH_HZ, gen_trns, generate_schedule, params_meta

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_RUNTIME = 4

DEFAULT_SAMPLE_RATE_HZ = 10_000.0


class _CliFailure(Exception):
    """Command failure with a stable exit code."""

    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_config(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _CliFailure(EXIT_IO, f"cannot read {path}: {exc}")
    try:
        return parse_session_config(text)
    except ConfigError as exc:
        raise _CliFailure(EXIT_VALIDATION, f"{path}: {exc}")


def cmd_validate(args: argparse.Namespace) -> int:
    stim, circuit = _load_config(args.config)
    try:
        vp = validate_params(stim)
    except ValidationError as exc:
        for violation in exc.violations:
            print(f"violation: {violation}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{args.config}: OK")
    for key, value in params_meta(vp).items():
        print(f"  {key} = {value}")
    print(f"  warmup_s = {vp.warmup_s!r}")
    print(f"  total_s = {vp.total_s!r}")
    print(f"  r_body_ohm = {circuit.r_body_ohm!r}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    stim, circuit = _load_config(args.config)
    if args.seed is not None:
        stim = replace(stim, seed=args.seed)
    try:
        vp = validate_params(stim)
    except ValidationError as exc:
        for violation in exc.violations:
            print(f"violation: {violation}", file=sys.stderr)
        return EXIT_VALIDATION

    rate = args.sample_rate
    try:
        if vp.mode is StimMode.TRNS:
            trace = simulate_trace(gen_trns(vp, rate), circuit)
        else:
            trace = simulate_schedule(generate_schedule(vp), circuit, rate)
    except ValueError as exc:
        return _fail(EXIT_VALIDATION, str(exc))

    try:
        write_trace_csv(trace, args.out)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write {args.out}: {exc}")
    print(f"{args.out}: {len(trace)} samples at {rate:g} Hz "
          f"({trace.duration_s:g} s)")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        trace = read_trace_csv(args.trace)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read {args.trace}: {exc}")
    except TraceParseError as exc:
        return _fail(EXIT_IO, f"{args.trace}: {exc}")

    print(f"{args.trace}: {len(trace)} samples at {trace.sample_rate_Hz:g} Hz "
          f"({trace.duration_s:g} s)")
    mode = trace.meta.get("mode", "?")
    print(f"  mode = {mode}")

    pulses = detect_pulses(trace, args.threshold_mA)
    print(f"  pulses detected (threshold {args.threshold_mA:g} mA): {len(pulses)}")
    if len(pulses) >= 2:
        measurements = measure_duty_and_freq(pulses)
        duties = np.array([m[0] for m in measurements])
        freqs = np.array([m[1] for m in measurements])
        print(f"  duty_pct: median {np.median(duties):.3f} "
              f"min {duties.min():.3f} max {duties.max():.3f}")
        print(f"  freq_Hz:  median {np.median(freqs):.4f} "
              f"min {freqs.min():.4f} max {freqs.max():.4f}")
        amps = np.array([p.amplitude_mA for p in pulses])
        print(f"  amplitude_mA: median {np.median(amps):.3f} max {amps.max():.3f}")

    compliant = trace.channels.get("compliant")
    if compliant is not None and len(compliant):
        bad = np.flatnonzero(compliant == 0.0)
        if len(bad):
            print(f"  compliance violations: {len(bad)} samples "
                  f"({len(bad) / len(compliant) * 100:.2f} %)")
            for lo, hi in _runs(bad):
                print(f"    saturated {lo / trace.sample_rate_Hz:.4f} s "
                      f".. {(hi + 1) / trace.sample_rate_Hz:.4f} s")
        else:
            print("  compliance violations: none")

    if args.fft:
        spectrum = fft_spectrum(trace, "actual_mA")
        ratio = band_energy_ratio(spectrum, args.cutoff_Hz)
        print(f"  band energy <= {args.cutoff_Hz:g} Hz: {ratio:.4f}")
    return EXIT_OK


def _runs(indices: np.ndarray, limit: int = 20):
    """Contiguous index runs as (first, last) pairs, at most ``limit``."""
    runs = []
    start = prev = int(indices[0])
    for idx in indices[1:]:
        idx = int(idx)
        if idx != prev + 1:
            runs.append((start, prev))
            start = idx
        prev = idx
    runs.append((start, prev))
    return runs[:limit]


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    token = None
    if args.unblind_token_env:
        token = os.environ.get(args.unblind_token_env)
        if token is None:
            return _fail(
                EXIT_VALIDATION,
                f"environment variable {args.unblind_token_env} is not set")
    host, _, port = args.listen.rpartition(":")
    try:
        port_no = int(port)
    except ValueError:
        return _fail(EXIT_VALIDATION, f"bad --listen address {args.listen!r}")
    app = create_app(unblind_token=token, console_dir=args.console_dir,
                     trace_dir=args.trace_dir)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=port_no,
                    log_level="warning")
    except (OSError, SystemExit) as exc:
        return _fail(EXIT_RUNTIME, f"server failed: {exc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tessim",
        description="Digital transcranial electrical stimulator twin",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a session config against limits")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("render", help="generate + simulate a config into a CSV trace")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output trace CSV path")
    p.add_argument("--sample-rate", type=float, default=DEFAULT_SAMPLE_RATE_HZ,
                   dest="sample_rate", help="render rate in Hz (default 10000)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's RNG seed")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("analyze", help="measure pulses / spectrum of a trace CSV")
    p.add_argument("trace")
    p.add_argument("--fft", action="store_true",
                   help="report band energy below --cutoff-Hz")
    p.add_argument("--cutoff-Hz", type=float, default=TRNS_BANDWIDTH_HZ,
                   dest="cutoff_Hz")
    p.add_argument("--threshold-mA", type=float, default=0.05,
                   dest="threshold_mA", help="pulse detection threshold")
    p.add_argument("--report", action="store_true",
                   help="(kept for compatibility; the report is always printed)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="run the control service")
    p.add_argument("--listen", default="127.0.0.1:8321",
                   help="host:port to bind (default 127.0.0.1:8321)")
    p.add_argument("--unblind-token-env", default=None,
                   help="name of the env var holding the unblind token")
    p.add_argument("--console-dir", default=None,
                   help="directory of built console assets to serve at /ui")
    p.add_argument("--trace-dir", default=None,
                   help="flush per-session telemetry CSVs here on shutdown")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CliFailure as exc:
        return _fail(exc.code, str(exc))
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # last-resort: stable nonzero exit
        return _fail(EXIT_RUNTIME, f"unexpected failure: {exc}")


if __name__ == "__main__":
    sys.exit(main())
