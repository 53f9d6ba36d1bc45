"""Sampled current traces: the software stand-in for the bench oscilloscope.

A :class:`Trace` is a uniformly sampled record of one rendered session:
commanded current, the current actually delivered by the output stage, the
resulting load voltage, and a per-sample compliance flag.  This module
owns trace persistence (a strict CSV format) and the measurement side of
the loop: pulse detection, duty/frequency measurement, and FFT band-energy
checks.

CSV format (the interchange contract):

* ``#``-prefixed ``key = value`` metadata lines first,
* then the exact header ``t_s,commanded_mA,actual_mA,v_body_V,compliant``,
* one row per sample, decimal point, no thousands separators,
* ``compliant`` written as 0/1.

Floats are written with shortest round-trip ``repr``, so write -> read is
exact for all finite values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

CHANNEL_NAMES = ("commanded_mA", "actual_mA", "v_body_V", "compliant")
CSV_HEADER = "t_s,commanded_mA,actual_mA,v_body_V,compliant"

# Pulse detection defaults: half of the smallest intensity step, with a
# one-sample hysteresis so single-sample dropouts do not split a pulse.
DEFAULT_PULSE_THRESHOLD_MA = 0.05


class TraceParseError(ValueError):
    """A malformed trace file; carries the 1-based offending line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass
class Trace:
    """Uniformly sampled multi-channel record of one session."""

    sample_rate_Hz: float
    channels: dict[str, np.ndarray]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sample_rate_Hz <= 0:
            raise ValueError("sample_rate_Hz must be positive")
        lengths = {len(c) for c in self.channels.values()}
        if len(lengths) > 1:
            raise ValueError(f"channels differ in length: {sorted(lengths)}")

    def __len__(self) -> int:
        for c in self.channels.values():
            return len(c)
        return 0

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_Hz

    def times_s(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate_Hz

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(
                f"trace has no channel {name!r}; present: {sorted(self.channels)}"
            ) from None

    def is_complete(self) -> bool:
        """True when all four canonical channels are present."""
        return all(name in self.channels for name in CHANNEL_NAMES)


@dataclass
class DetectedPulse:
    """One above-threshold run in a trace, in trace time."""

    t_start_s: float
    duration_s: float
    polarity: int
    amplitude_mA: float


@dataclass
class Spectrum:
    """One-sided power spectrum; the sum of magnitudes equals sum(x**2)."""

    bin_width_Hz: float
    magnitudes: np.ndarray

    def frequencies_Hz(self) -> np.ndarray:
        return np.arange(len(self.magnitudes)) * self.bin_width_Hz


def _format_float(x: float) -> str:
    # repr of a Python float is the shortest string that parses back exactly
    return repr(float(x))


def write_trace_csv(trace: Trace, destination) -> None:
    """Write ``trace`` to ``destination`` (path or open text file)."""
    if not trace.is_complete():
        missing = [n for n in CHANNEL_NAMES if n not in trace.channels]
        raise ValueError(f"trace is missing channels {missing}; "
                         "run it through the output stage first")
    if hasattr(destination, "write"):
        _write_trace(trace, destination)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            _write_trace(trace, fh)


def _write_trace(trace: Trace, fh: TextIO) -> None:
    meta = dict(trace.meta)
    meta["sample_rate_Hz"] = _format_float(trace.sample_rate_Hz)
    for key, value in meta.items():
        fh.write(f"# {key} = {value}\n")
    fh.write(CSV_HEADER + "\n")
    n = len(trace)
    cols = [trace.channels[name] for name in CHANNEL_NAMES[:3]]
    compliant = trace.channels["compliant"]
    rate = trace.sample_rate_Hz
    for k in range(n):
        fh.write(
            f"{_format_float(k / rate)},"
            f"{_format_float(cols[0][k])},"
            f"{_format_float(cols[1][k])},"
            f"{_format_float(cols[2][k])},"
            f"{1 if compliant[k] else 0}\n"
        )


def read_trace_csv(source) -> Trace:
    """Read a trace written by :func:`write_trace_csv`.

    Raises :class:`TraceParseError` naming the offending line for any
    malformed metadata line, header, or row.
    """
    if hasattr(source, "read"):
        return _read_trace(source)
    with open(source, "r", encoding="utf-8") as fh:
        return _read_trace(fh)


def _read_trace(fh: TextIO) -> Trace:
    meta: dict[str, str] = {}
    lines = iter(enumerate(fh, start=1))
    header_seen = False
    line_no = 0
    for line_no, raw in lines:
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                raise TraceParseError(line_no, f"metadata line without '=': {line!r}")
            key, _, value = body.partition("=")
            meta[key.strip()] = value.strip()
            continue
        if line != CSV_HEADER:
            raise TraceParseError(
                line_no, f"expected header {CSV_HEADER!r}, got {line!r}")
        header_seen = True
        break
    if not header_seen:
        raise TraceParseError(line_no or 1, "missing column header")

    try:
        rate = float(meta["sample_rate_Hz"])
    except KeyError:
        raise TraceParseError(1, "missing '# sample_rate_Hz = ...' metadata") from None
    except ValueError:
        raise TraceParseError(
            1, f"bad sample_rate_Hz value {meta['sample_rate_Hz']!r}") from None

    columns: list[list[float]] = [[], [], [], []]
    for line_no, raw in lines:
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise TraceParseError(
                line_no, f"expected 5 columns, got {len(parts)}")
        try:
            values = [float(part) for part in parts]
        except ValueError as exc:
            raise TraceParseError(line_no, f"unparseable value: {exc}") from None
        if values[4] not in (0.0, 1.0):
            raise TraceParseError(line_no, f"compliant must be 0 or 1, got {parts[4]}")
        for i in range(4):
            columns[i].append(values[i + 1])

    channels = {
        name: np.asarray(col, dtype=np.float64)
        for name, col in zip(CHANNEL_NAMES, columns)
    }
    meta.pop("sample_rate_Hz", None)
    return Trace(sample_rate_Hz=rate, channels=channels, meta=meta)


def detect_pulses(
    trace: Trace,
    threshold_mA: float = DEFAULT_PULSE_THRESHOLD_MA,
    channel: str = "actual_mA",
) -> list[DetectedPulse]:
    """Find contiguous runs of ``|signal| >= threshold`` as pulses.

    Runs separated by a single below-threshold sample are merged (one
    sample of hysteresis).  Pulse amplitude is the run's median absolute
    value; polarity follows the sign of the run median.
    """
    if threshold_mA <= 0:
        raise ValueError("threshold_mA must be positive")
    x = trace.channel(channel)
    if len(x) == 0:
        return []
    mask = np.abs(x) >= threshold_mA
    edges = np.flatnonzero(np.diff(np.concatenate(([False], mask, [False]))))
    starts, ends = edges[0::2], edges[1::2]

    merged: list[tuple[int, int]] = []
    for s, e in zip(starts, ends):
        if merged and s - merged[-1][1] <= 1:
            merged[-1] = (merged[-1][0], e)
        else:
            merged.append((s, e))

    rate = trace.sample_rate_Hz
    pulses = []
    for s, e in merged:
        run = x[s:e]
        signed_median = float(np.median(run))
        pulses.append(DetectedPulse(
            t_start_s=s / rate,
            duration_s=(e - s) / rate,
            polarity=1 if signed_median >= 0 else -1,
            amplitude_mA=float(np.median(np.abs(run))),
        ))
    return pulses


def measure_duty_and_freq(
    pulses: Iterable[DetectedPulse],
) -> list[tuple[float, float]]:
    """Per consecutive pulse pair, the (duty %, frequency Hz) it realizes.

    The pulse period is the spacing of consecutive start times and the ON
    time is the earlier pulse's duration, so ``n`` pulses give ``n - 1``
    measurements.
    """
    seq = list(pulses)
    if len(seq) < 2:
        raise ValueError("need at least 2 pulses to measure duty and frequency")
    out = []
    for a, b in zip(seq, seq[1:]):
        period_s = b.t_start_s - a.t_start_s
        if period_s <= 0:
            raise ValueError("pulses are not strictly ordered in time")
        out.append((100.0 * a.duration_s / period_s, 1.0 / period_s))
    return out


def fft_spectrum(trace: Trace, channel: str = "commanded_mA") -> Spectrum:
    """One-sided power spectrum of one channel.

    No zero padding is applied; the transform runs at the channel's natural
    length.  Normalization is chosen so that ``sum(magnitudes)`` equals the
    time-domain energy ``sum(x**2)`` (Parseval).
    """
    x = np.asarray(trace.channel(channel), dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("channel must hold at least 2 samples")
    spectrum = np.fft.rfft(x)
    power = np.abs(spectrum) ** 2 / n
    # interior bins carry both halves of the two-sided spectrum
    power[1:] *= 2.0
    if n % 2 == 0:
        power[-1] /= 2.0  # Nyquist bin is unpaired
    return Spectrum(bin_width_Hz=trace.sample_rate_Hz / n, magnitudes=power)


def band_energy_ratio(spectrum: Spectrum, cutoff_Hz: float) -> float:
    """Fraction of total spectral power in bins at or below ``cutoff_Hz``."""
    freqs = spectrum.frequencies_Hz()
    nyquist = freqs[-1] + spectrum.bin_width_Hz / 2
    if cutoff_Hz < 0 or cutoff_Hz > nyquist:
        raise ValueError(
            f"cutoff {cutoff_Hz} Hz outside the spectrum's range 0..{nyquist:.6g} Hz")
    total = float(np.sum(spectrum.magnitudes))
    if total == 0.0:
        return 0.0
    in_band = float(np.sum(spectrum.magnitudes[freqs <= cutoff_Hz]))
    return in_band / total
