"""Stimulation prescriptions and their validation.

A :class:`StimParams` describes one full session: the mode, the target
intensity, the warm-up/dose/cool-down timing, the pulse frequency and duty
ranges, an optional CES pattern, the SHAM flag, and the RNG seed.  Raw
parameters are checked against the device's hard limits by
:func:`validate_params`, which collects *every* violation instead of
stopping at the first one -- a rejected prescription should tell the
operator everything that is wrong with it.

Hard limits (the legal lattice):

* intensity: 0.1 to 4.0 mA in 0.1 mA steps
* basic pulse frequency: 0.5 to 1000 Hz
* duty cycle: 10 to 90 %
* burst frequency: 1 to 20 Hz, pulse chains of 2 to 15
* the burst period must be at least twice the longest basic pulse period,
  and long enough to hold the whole chain
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace


INTENSITY_MIN_MA = 0.1
INTENSITY_MAX_MA = 4.0
INTENSITY_STEP_MA = 0.1
FREQ_MIN_HZ = 0.5
FREQ_MAX_HZ = 1000.0
DUTY_MIN_PCT = 10.0
DUTY_MAX_PCT = 90.0
BURST_FREQ_MIN_HZ = 1.0
BURST_FREQ_MAX_HZ = 20.0
CHAIN_COUNT_MIN = 2
CHAIN_COUNT_MAX = 15
SEED_MAX = 2**64 - 1

# Micro-current therapy runs the biphasic engine with fixed, device-internal
# constants: 0.5 Hz basic pulses at 1 % duty (20 ms wide).  A 2.0 mA setting
# then averages 20 uA, keeping the delivered dose in the microampere regime.
MET_FREQ_HZ = 0.5
MET_DUTY_PCT = 1.0

# Intensity lattice comparisons allow this much absolute slack after rounding.
_LATTICE_TOL = 1e-9


class StimMode(enum.Enum):
    """The five supported stimulation methods."""

    TDCS = "tdcs"
    TPCS = "tpcs"
    CES = "ces"
    MET = "met"
    TRNS = "trns"


class PulsePattern(enum.Enum):
    """CES pulse patterning (other modes ignore this)."""

    CONTINUOUS = "continuous"
    RANDOM = "random"
    FM = "fm"
    BURST = "burst"


@dataclass(frozen=True)
class BurstConfig:
    """Burst pattern knobs: burst repetition rate and pulses per chain."""

    burst_freq_Hz: float
    chain_count: int


@dataclass(frozen=True)
class StimParams:
    """One session prescription, as entered by the operator (unchecked)."""

    mode: StimMode
    intensity_mA: float
    dose_s: float
    ramp_rate_mA_per_min: float = 1.0
    freq_lo_Hz: float = 100.0
    freq_hi_Hz: float = 100.0
    duty_pct: float = 50.0
    pattern: PulsePattern = PulsePattern.CONTINUOUS
    burst: BurstConfig | None = None
    sham: bool = False
    seed: int = 0


@dataclass(frozen=True)
class Violation:
    """One validation failure: the field, the offending value, the rule."""

    field: str
    value: object
    message: str

    def __str__(self) -> str:
        return f"{self.field}={self.value!r}: {self.message}"


class ValidationError(ValueError):
    """Raised by :func:`validate_params` carrying the full violation list."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "; ".join(str(v) for v in violations)
        super().__init__(f"{len(violations)} parameter violation(s): {lines}")


@dataclass(frozen=True)
class ValidatedParams:
    """A prescription that passed every check, with normalized fields.

    ``intensity_mA`` is snapped exactly onto the 0.1 mA lattice.  For MET
    the user's frequency/duty/pattern entries are replaced by the fixed
    device constants.  Only code paths that already hold a validated
    prescription should construct this directly.
    """

    mode: StimMode
    intensity_mA: float
    dose_s: float
    ramp_rate_mA_per_min: float
    freq_lo_Hz: float
    freq_hi_Hz: float
    duty_pct: float
    pattern: PulsePattern
    burst: BurstConfig | None
    sham: bool
    seed: int

    @property
    def warmup_s(self) -> float:
        """Ramp-up duration: intensity divided by the ramp rate."""
        return self.intensity_mA / self.ramp_rate_mA_per_min * 60.0

    @property
    def cooldown_s(self) -> float:
        """Ramp-down duration, mirror of the warm-up."""
        return self.warmup_s

    @property
    def total_s(self) -> float:
        return self.warmup_s + self.dose_s + self.cooldown_s

    def without_sham(self) -> ValidatedParams:
        """The same prescription with SHAM blinding removed."""
        return replace(self, sham=False)


_INTENSITY_RULE = (
    f"must be within {INTENSITY_MIN_MA} to {INTENSITY_MAX_MA} mA "
    f"in {INTENSITY_STEP_MA} mA steps"
)


def snap_to_intensity_step(value_mA: float) -> float:
    """Snap a current value onto the 0.1 mA lattice (round half up)."""
    return math.floor(value_mA / INTENSITY_STEP_MA + 0.5) * INTENSITY_STEP_MA


def _on_intensity_lattice(value: float) -> bool:
    return (
        INTENSITY_MIN_MA - _LATTICE_TOL <= value <= INTENSITY_MAX_MA + _LATTICE_TOL
        and abs(value - snap_to_intensity_step(value)) <= _LATTICE_TOL
    )


def check_intensity_setpoint(value_mA: float) -> Violation | None:
    """Check one intensity value against the legal lattice (None if OK)."""
    if not _on_intensity_lattice(value_mA):
        return Violation("intensity_mA", value_mA, _INTENSITY_RULE)
    return None


def check_params(p: StimParams) -> list[Violation]:
    """Collect every rule violation in ``p`` (empty list means valid)."""
    v: list[Violation] = []

    if not _on_intensity_lattice(p.intensity_mA):
        v.append(Violation("intensity_mA", p.intensity_mA, _INTENSITY_RULE))

    if not p.dose_s > 0:
        v.append(Violation("dose_s", p.dose_s, "dose duration must be positive"))

    if not p.ramp_rate_mA_per_min > 0:
        v.append(Violation(
            "ramp_rate_mA_per_min", p.ramp_rate_mA_per_min,
            "ramp rate must be positive",
        ))

    if not 0 <= p.seed <= SEED_MAX:
        v.append(Violation("seed", p.seed, "seed must fit in 64 unsigned bits"))

    # MET substitutes its own frequency/duty/pattern, so the user-facing
    # range rules below do not apply to it.
    if p.mode is not StimMode.MET:
        if not FREQ_MIN_HZ <= p.freq_lo_Hz <= FREQ_MAX_HZ:
            v.append(Violation(
                "freq_lo_Hz", p.freq_lo_Hz,
                f"must be within {FREQ_MIN_HZ} to {FREQ_MAX_HZ} Hz",
            ))
        if not FREQ_MIN_HZ <= p.freq_hi_Hz <= FREQ_MAX_HZ:
            v.append(Violation(
                "freq_hi_Hz", p.freq_hi_Hz,
                f"must be within {FREQ_MIN_HZ} to {FREQ_MAX_HZ} Hz",
            ))
        if p.freq_lo_Hz > p.freq_hi_Hz:
            v.append(Violation(
                "freq_lo_Hz", p.freq_lo_Hz,
                f"lower frequency bound exceeds upper bound {p.freq_hi_Hz}",
            ))
        if not DUTY_MIN_PCT <= p.duty_pct <= DUTY_MAX_PCT:
            v.append(Violation(
                "duty_pct", p.duty_pct,
                f"must be within {DUTY_MIN_PCT} to {DUTY_MAX_PCT} %",
            ))
        v.extend(_check_burst(p))

    return v


def _check_burst(p: StimParams) -> list[Violation]:
    v: list[Violation] = []
    if p.pattern is not PulsePattern.BURST or p.mode is not StimMode.CES:
        return v
    if p.burst is None:
        v.append(Violation(
            "burst", None, "burst pattern requires burst configuration",
        ))
        return v

    b = p.burst
    if not BURST_FREQ_MIN_HZ <= b.burst_freq_Hz <= BURST_FREQ_MAX_HZ:
        v.append(Violation(
            "burst.burst_freq_Hz", b.burst_freq_Hz,
            f"must be within {BURST_FREQ_MIN_HZ} to {BURST_FREQ_MAX_HZ} Hz",
        ))
    if not CHAIN_COUNT_MIN <= b.chain_count <= CHAIN_COUNT_MAX:
        v.append(Violation(
            "burst.chain_count", b.chain_count,
            f"pulse chain count must be greater than unity and at most "
            f"{CHAIN_COUNT_MAX} (allowed {CHAIN_COUNT_MIN} to {CHAIN_COUNT_MAX})",
        ))

    # Timing feasibility checks need a valid frequency range to be meaningful.
    if not (FREQ_MIN_HZ <= p.freq_lo_Hz <= p.freq_hi_Hz <= FREQ_MAX_HZ):
        return v
    if b.burst_freq_Hz <= 0:
        return v

    burst_period_s = 1.0 / b.burst_freq_Hz
    max_pulse_period_s = 1.0 / p.freq_lo_Hz
    if burst_period_s < 2.0 * max_pulse_period_s:
        v.append(Violation(
            "burst.burst_freq_Hz", b.burst_freq_Hz,
            f"burst period {burst_period_s * 1e3:.1f} ms is shorter than twice "
            f"the maximum basic pulse period 2 x {max_pulse_period_s * 1e3:.1f} ms",
        ))
    if CHAIN_COUNT_MIN <= b.chain_count <= CHAIN_COUNT_MAX:
        if b.chain_count * max_pulse_period_s > burst_period_s:
            v.append(Violation(
                "burst.chain_count", b.chain_count,
                f"{b.chain_count} pulses of up to "
                f"{max_pulse_period_s * 1e3:.1f} ms do not fit in the "
                f"{burst_period_s * 1e3:.1f} ms burst period",
            ))
    return v


def validate_params(p: StimParams) -> ValidatedParams:
    """Check ``p`` against every rule and return the normalized prescription.

    Raises :class:`ValidationError` carrying *all* violations if any rule
    fails.
    """
    violations = check_params(p)
    if violations:
        raise ValidationError(violations)

    if p.mode is StimMode.MET:
        freq_lo = freq_hi = MET_FREQ_HZ
        duty = MET_DUTY_PCT
        pattern = PulsePattern.CONTINUOUS
        burst = None
    else:
        freq_lo, freq_hi = p.freq_lo_Hz, p.freq_hi_Hz
        duty = p.duty_pct
        # Patterning exists only in CES mode; elsewhere it is inert.
        pattern = p.pattern if p.mode is StimMode.CES else PulsePattern.CONTINUOUS
        burst = p.burst if pattern is PulsePattern.BURST else None

    return ValidatedParams(
        mode=p.mode,
        intensity_mA=snap_to_intensity_step(p.intensity_mA),
        dose_s=p.dose_s,
        ramp_rate_mA_per_min=p.ramp_rate_mA_per_min,
        freq_lo_Hz=freq_lo,
        freq_hi_Hz=freq_hi,
        duty_pct=duty,
        pattern=pattern,
        burst=burst,
        sham=p.sham,
        seed=p.seed,
    )
