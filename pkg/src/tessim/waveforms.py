"""Event-exact schedule generation for the five stimulation modes.

Every schedule is a pure, deterministic function of a validated
prescription: all timing lives in integer microseconds (frequencies are
converted to periods with round-half-up), random per-pulse draws come from
a PCG64 generator seeded from the prescription, and amplitudes are
quantized to the 0.1 mA DAC lattice.  Regenerating with the same
parameters yields a bit-identical schedule.

Mode summary:

* tDCS: stepped 0.1 mA ramp up, constant plateau, mirrored ramp down,
  all current in the forward direction.
* tPCS: monophasic pulse train; each pulse period drawn uniformly (in
  period) between the configured frequency bounds; duty fixed.
* CES: biphasic train, strict polarity alternation, patterned as
  continuous / random / frequency-sweep / burst.
* MET: the CES engine with fixed narrow-pulse constants (microampere
  average delivery).
* tRNS: band-limited Gaussian noise, produced directly as a sampled
  trace (no event structure).

SHAM sessions zero every amplitude whose event starts inside the dose
window; ramps and all timing are untouched, so blinded records are
indistinguishable outside the dose.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import cheby2, sosfilt

from .params import (
    INTENSITY_STEP_MA,
    PulsePattern,
    StimMode,
    ValidatedParams,
)
from .trace import Trace

log = logging.getLogger(__name__)

US_PER_S = 1_000_000

GENERATOR_VERSION = "1"
RNG_ALGORITHM = "pcg64"

# Frequency-sweep pattern: entries per half cycle (lowest to highest bound).
FM_STEPS_DEFAULT = 16

# Noise synthesis: 4th-order low-pass, stopband edge at 300 Hz.  A
# Chebyshev type II design puts the full 40 dB floor right at the band
# edge, which keeps well over 95 % of the delivered energy below 300 Hz
# (a Butterworth corner at 300 Hz would leak ~10 % above it).
TRNS_BANDWIDTH_HZ = 300.0
TRNS_FILTER_ORDER = 4
TRNS_FILTER_STOP_DB = 40.0
TRNS_MIN_SAMPLE_RATE_HZ = 2000.0


@dataclass(frozen=True)
class OutputEvent:
    """One commanded output interval.

    Signed current is ``polarity * amplitude_mA``; events in a schedule
    are sorted and non-overlapping.
    """

    t_start_us: int
    duration_us: int
    polarity: int
    amplitude_mA: float


@dataclass(frozen=True)
class EventSchedule:
    """A full session's worth of output events plus generation metadata."""

    params: ValidatedParams
    events: tuple[OutputEvent, ...]
    total_duration_us: int
    meta: dict[str, str]


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def period_us_from_freq(freq_Hz: float) -> int:
    """Convert a frequency to an integer-microsecond period, round half up."""
    if freq_Hz <= 0:
        raise ValueError("frequency must be positive")
    return round_half_up(US_PER_S / freq_Hz)


def duty_cycle_pct(t_on_us: float, t_off_us: float) -> float:
    """Duty cycle in percent: 100 * T_ON / (T_ON + T_OFF)."""
    if t_on_us <= 0:
        raise ValueError("t_on_us must be positive")
    if t_off_us < 0:
        raise ValueError("t_off_us must be non-negative")
    return 100.0 * t_on_us / (t_on_us + t_off_us)


def pulse_frequency_Hz(t_on_us: float, t_off_us: float) -> float:
    """Pulse repetition frequency: the inverse of the period T_ON + T_OFF."""
    period = t_on_us + t_off_us
    if period <= 0:
        raise ValueError("pulse period must be positive")
    return US_PER_S / period


def warmup_us(p: ValidatedParams) -> int:
    return round_half_up(p.warmup_s * US_PER_S)


def dose_us(p: ValidatedParams) -> int:
    return round_half_up(p.dose_s * US_PER_S)


def total_duration_us(p: ValidatedParams) -> int:
    return 2 * warmup_us(p) + dose_us(p)


def intensity_envelope(t_s: float, p: ValidatedParams) -> float:
    """Commanded current level at ``t_s`` seconds from session start.

    Piecewise linear: ramp up over the warm-up, hold the plateau over the
    dose, mirror the ramp down over the cool-down.  For SHAM sessions the
    plateau reads zero while both ramps run unchanged.  This is the
    unblinded level; blinded display values are the session engine's job.
    """
    tw = warmup_us(p)
    td = dose_us(p)
    total = 2 * tw + td
    t_us = t_s * US_PER_S
    if t_us < 0 or t_us > total:
        raise ValueError(f"t={t_s} s outside the session 0..{total / US_PER_S} s")
    if t_us < tw:
        return p.intensity_mA * (t_us / tw)
    if t_us < tw + td:
        return 0.0 if p.sham else p.intensity_mA
    if tw == 0:
        return 0.0
    return p.intensity_mA * ((total - t_us) / tw)


def _in_dose(t_us: int, tw: int, td: int) -> bool:
    return tw <= t_us < tw + td


def _event_amplitude(t_start_us: int, p: ValidatedParams, tw: int, td: int) -> float:
    """Amplitude for a pulse starting at ``t_start_us``: the envelope
    sampled at the pulse start, quantized to the DAC lattice.

    Ramp quantization is done in exact integer arithmetic (the intensity
    lies on the 0.1 mA lattice) so round-half-up ties are well defined.
    """
    if _in_dose(t_start_us, tw, td):
        return 0.0 if p.sham else p.intensity_mA
    if tw == 0:
        return 0.0
    total = 2 * tw + td
    pos = t_start_us if t_start_us < tw else total - t_start_us
    n = int(round(p.intensity_mA / INTENSITY_STEP_MA))
    steps = (2 * n * pos + tw) // (2 * tw)
    return steps * INTENSITY_STEP_MA


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _schedule_meta(p: ValidatedParams, max_pulse_freq_Hz: float) -> dict[str, str]:
    return {
        "generator_version": GENERATOR_VERSION,
        "rng": RNG_ALGORITHM,
        "random_period_law": "uniform-in-period",
        "max_pulse_freq_Hz": repr(float(max_pulse_freq_Hz)),
    }


def gen_tdcs(p: ValidatedParams) -> EventSchedule:
    """Direct-current schedule: stepped ramps around a constant plateau.

    The ramp is discretized in 0.1 mA amplitude steps of equal duration
    (the DAC cannot resolve finer), giving ``intensity / 0.1`` steps each
    way.  All events flow forward (polarity +1).
    """
    if p.mode is not StimMode.TDCS:
        raise ValueError(f"gen_tdcs needs TDCS mode, got {p.mode}")
    tw = warmup_us(p)
    td = dose_us(p)
    total = 2 * tw + td
    n_steps = int(round(p.intensity_mA / INTENSITY_STEP_MA))

    events: list[OutputEvent] = []

    def add(start: int, end: int, amp: float) -> None:
        if end > start:
            events.append(OutputEvent(start, end - start, 1, amp))

    for k in range(1, n_steps + 1):
        lo = round_half_up((k - 1) * tw / n_steps)
        hi = round_half_up(k * tw / n_steps)
        add(lo, hi, k * INTENSITY_STEP_MA)

    add(tw, tw + td, 0.0 if p.sham else p.intensity_mA)

    for k in range(1, n_steps + 1):
        lo = tw + td + round_half_up((k - 1) * tw / n_steps)
        hi = tw + td + round_half_up(k * tw / n_steps)
        add(lo, hi, (n_steps - k + 1) * INTENSITY_STEP_MA)

    return EventSchedule(p, tuple(events), total, _schedule_meta(p, 0.0))


def _legal_period_band_us(freq_lo_Hz: float, freq_hi_Hz: float) -> tuple[int, int]:
    """Integer periods whose realized frequency stays inside [lo, hi]."""
    lo_us = math.ceil(US_PER_S / freq_hi_Hz - 1e-9)
    hi_us = math.floor(US_PER_S / freq_lo_Hz + 1e-9)
    return lo_us, hi_us


def _draw_period_us(rng: np.random.Generator, p: ValidatedParams) -> int:
    """One per-pulse period, uniform in period between the bounds.

    The draw is rounded to integer microseconds, then clamped into the
    band of integers whose realized frequency stays inside [lo, hi].  If
    the band holds no integer (bounds closer than the 1 us quantum), the
    nearest integer is used and the realized frequency deviates by at
    most one quantum.
    """
    p_min = US_PER_S / p.freq_hi_Hz
    p_max = US_PER_S / p.freq_lo_Hz
    draw = rng.uniform(p_min, p_max)
    period = round_half_up(draw)
    band_lo, band_hi = _legal_period_band_us(p.freq_lo_Hz, p.freq_hi_Hz)
    if band_lo <= band_hi:
        period = min(max(period, band_lo), band_hi)
    return max(period, 1)


def _pulse_on_us(period_us: int, duty_pct: float) -> int:
    return max(1, round_half_up(period_us * duty_pct / 100.0))


def gen_tpcs(p: ValidatedParams) -> EventSchedule:
    """Monophasic pulse train with per-pulse random period, fixed duty.

    Periods are drawn independently and uniformly in *period* between
    1/freq_hi and 1/freq_lo; each pulse is ON for ``duty_pct`` percent of
    its own period, and its amplitude follows the intensity envelope at
    the pulse start.
    """
    if p.mode is not StimMode.TPCS:
        raise ValueError(f"gen_tpcs needs TPCS mode, got {p.mode}")
    tw, td = warmup_us(p), dose_us(p)
    total = 2 * tw + td
    rng = _rng(p.seed)

    events: list[OutputEvent] = []
    t = 0
    while t < total:
        period = _draw_period_us(rng, p)
        on = min(_pulse_on_us(period, p.duty_pct), total - t)
        if on > 0:
            events.append(OutputEvent(t, on, 1, _event_amplitude(t, p, tw, td)))
        t += period

    return EventSchedule(p, tuple(events), total, _schedule_meta(p, p.freq_hi_Hz))


def fm_schedule(freq_lo_Hz: float, freq_hi_Hz: float,
                n_steps: int = FM_STEPS_DEFAULT) -> list[float]:
    """One triangular frequency-sweep cycle.

    ``n_steps`` linearly spaced frequencies rise from the lower bound to
    the upper bound, then fall back with both repeated endpoints dropped,
    so a cycle holds ``2 * n_steps - 2`` entries and repeats seamlessly.
    Each entry governs exactly one pulse period.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    if freq_lo_Hz > freq_hi_Hz:
        raise ValueError("freq_lo_Hz must not exceed freq_hi_Hz")
    ascending = np.linspace(freq_lo_Hz, freq_hi_Hz, n_steps).tolist()
    return ascending + ascending[-2:0:-1]


def _ces_period_iter(p: ValidatedParams, rng: np.random.Generator):
    """Yield (period_us, on_us) pairs according to the CES pattern."""
    if p.pattern is PulsePattern.CONTINUOUS:
        period = period_us_from_freq(p.freq_lo_Hz)
        on = _pulse_on_us(period, p.duty_pct)
        while True:
            yield period, on
    elif p.pattern is PulsePattern.RANDOM:
        while True:
            period = _draw_period_us(rng, p)
            yield period, _pulse_on_us(period, p.duty_pct)
    elif p.pattern is PulsePattern.FM:
        cycle = [period_us_from_freq(f) for f in fm_schedule(p.freq_lo_Hz, p.freq_hi_Hz)]
        i = 0
        while True:
            period = cycle[i % len(cycle)]
            yield period, _pulse_on_us(period, p.duty_pct)
            i += 1
    else:
        raise ValueError(f"no period law for pattern {p.pattern}")


def gen_ces(p: ValidatedParams) -> EventSchedule:
    """Biphasic patterned pulse train with strict polarity alternation.

    Successive pulses flip direction (+1, -1, ...) as driven through the
    H-bridge.  Timing follows the configured pattern; burst packs
    ``chain_count`` pulses at the upper frequency bound into the start of
    each burst period, then stays silent to the period's end.
    """
    if p.mode not in (StimMode.CES, StimMode.MET):
        raise ValueError(f"gen_ces needs CES or MET mode, got {p.mode}")
    tw, td = warmup_us(p), dose_us(p)
    total = 2 * tw + td
    rng = _rng(p.seed)

    if p.pattern is PulsePattern.CONTINUOUS and p.freq_lo_Hz != p.freq_hi_Hz:
        log.warning(
            "continuous pattern with a non-degenerate frequency range: "
            "using the lower bound %.6g Hz", p.freq_lo_Hz)

    events: list[OutputEvent] = []
    polarity = 1

    def add_pulse(t: int, on_us: int) -> None:
        nonlocal polarity
        on = min(on_us, total - t)
        if on > 0:
            events.append(OutputEvent(t, on, polarity, _event_amplitude(t, p, tw, td)))
        polarity = -polarity

    if p.pattern is PulsePattern.BURST:
        if p.burst is None:
            raise ValueError("burst pattern requires burst configuration")
        burst_period = period_us_from_freq(p.burst.burst_freq_Hz)
        pulse_period = period_us_from_freq(p.freq_hi_Hz)
        on = _pulse_on_us(pulse_period, p.duty_pct)
        window = 0
        while window < total:
            # chain pulses never spill into the silent tail or the next
            # window, even when rounding lands the config on the
            # feasibility boundary
            bound = min(total, window + burst_period)
            for i in range(p.burst.chain_count):
                t = window + i * pulse_period
                if t >= bound:
                    break
                add_pulse(t, on)
            window += burst_period
        max_freq = p.freq_hi_Hz
    else:
        periods = _ces_period_iter(p, rng)
        t = 0
        while t < total:
            period, on = next(periods)
            add_pulse(t, on)
            t += period
        max_freq = (p.freq_lo_Hz if p.pattern is PulsePattern.CONTINUOUS
                    else p.freq_hi_Hz)

    return EventSchedule(p, tuple(events), total, _schedule_meta(p, max_freq))


def gen_met(p: ValidatedParams) -> EventSchedule:
    """Micro-current schedule: the CES engine with the fixed MET constants.

    Validation already substitutes the device constants (0.5 Hz, 1 % duty,
    continuous), so the time-averaged delivered magnitude is
    ``intensity * 1 %`` -- microamperes for every legal intensity.
    """
    if p.mode is not StimMode.MET:
        raise ValueError(f"gen_met needs MET mode, got {p.mode}")
    return gen_ces(p)


def generate_schedule(p: ValidatedParams) -> EventSchedule:
    """Dispatch to the mode's generator (event-structured modes only)."""
    if p.mode is StimMode.TDCS:
        return gen_tdcs(p)
    if p.mode is StimMode.TPCS:
        return gen_tpcs(p)
    if p.mode is StimMode.CES:
        return gen_ces(p)
    if p.mode is StimMode.MET:
        return gen_met(p)
    raise ValueError("noise mode has no event structure; use gen_trns")


def _envelope_fraction(p: ValidatedParams, t_us: np.ndarray) -> np.ndarray:
    """Vectorized envelope normalized to the plateau (sham-aware)."""
    tw = warmup_us(p)
    td = dose_us(p)
    total = 2 * tw + td
    frac = np.zeros_like(t_us, dtype=np.float64)
    if tw > 0:
        rising = t_us < tw
        frac[rising] = t_us[rising] / tw
        falling = t_us >= tw + td
        frac[falling] = np.maximum(total - t_us[falling], 0) / tw
    plateau = (t_us >= tw) & (t_us < tw + td)
    frac[plateau] = 0.0 if p.sham else 1.0
    return frac


def trns_filter_sos(sample_rate_Hz: float) -> np.ndarray:
    """The band-limiting filter: Chebyshev II low-pass, 40 dB floor at 300 Hz."""
    return cheby2(TRNS_FILTER_ORDER, TRNS_FILTER_STOP_DB,
                  TRNS_BANDWIDTH_HZ, fs=sample_rate_Hz, output="sos")


def gen_trns(p: ValidatedParams, sample_rate_Hz: float) -> Trace:
    """Band-limited random noise stimulation as a sampled trace.

    Seeded Gaussian white noise is low-pass filtered so its energy sits
    below 300 Hz, scaled so the plateau RMS equals the prescribed
    intensity, and shaped by the intensity envelope.  The result carries
    only the commanded channel; the output stage fills in the rest.
    """
    if p.mode is not StimMode.TRNS:
        raise ValueError(f"gen_trns needs TRNS mode, got {p.mode}")
    if sample_rate_Hz < TRNS_MIN_SAMPLE_RATE_HZ:
        raise ValueError(
            f"sample rate {sample_rate_Hz} Hz too low to carry "
            f"{TRNS_BANDWIDTH_HZ} Hz content; need at least "
            f"{TRNS_MIN_SAMPLE_RATE_HZ} Hz")

    tw, td = warmup_us(p), dose_us(p)
    total = 2 * tw + td
    n = int(round(total * sample_rate_Hz / US_PER_S))
    t_us = np.arange(n, dtype=np.float64) * (US_PER_S / sample_rate_Hz)

    if p.intensity_mA == 0.0 or n == 0:
        signal = np.zeros(n)
    else:
        white = _rng(p.seed).standard_normal(n)
        shaped = sosfilt(trns_filter_sos(sample_rate_Hz), white)
        i0 = int(math.ceil(tw * sample_rate_Hz / US_PER_S - 1e-9))
        i1 = int(math.ceil((tw + td) * sample_rate_Hz / US_PER_S - 1e-9))
        plateau = shaped[i0:i1] if i1 > i0 else shaped
        rms = float(np.sqrt(np.mean(plateau**2))) if len(plateau) else 0.0
        if rms == 0.0:
            signal = np.zeros(n)
        else:
            signal = shaped * (p.intensity_mA / rms) * _envelope_fraction(p, t_us)

    meta = params_meta(p)
    meta.update({
        "generator_version": GENERATOR_VERSION,
        "rng": RNG_ALGORITHM,
        "noise_filter": (
            f"cheby2(order={TRNS_FILTER_ORDER}, stop={TRNS_FILTER_STOP_DB} dB, "
            f"edge={TRNS_BANDWIDTH_HZ} Hz)"
        ),
    })
    return Trace(sample_rate_Hz=sample_rate_Hz,
                 channels={"commanded_mA": signal}, meta=meta)


def params_meta(p: ValidatedParams) -> dict[str, str]:
    """Prescription echo for trace/schedule metadata."""
    meta = {
        "mode": p.mode.value,
        "intensity_mA": repr(p.intensity_mA),
        "dose_s": repr(p.dose_s),
        "ramp_rate_mA_per_min": repr(p.ramp_rate_mA_per_min),
        "freq_lo_Hz": repr(p.freq_lo_Hz),
        "freq_hi_Hz": repr(p.freq_hi_Hz),
        "duty_pct": repr(p.duty_pct),
        "pattern": p.pattern.value,
        "sham": "true" if p.sham else "false",
        "seed": str(p.seed),
    }
    if p.burst is not None:
        meta["burst_freq_Hz"] = repr(p.burst.burst_freq_Hz)
        meta["chain_count"] = str(p.burst.chain_count)
    return meta
