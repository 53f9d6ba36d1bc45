"""Numerical model of the transistor output stage.

The hardware path is: a PWM low-pass DAC produces the intensity voltage,
a common-emitter stage converts it to current through the emitter
resistor, two helper transistors buffer and gate the output, and a 30 V
rail bounds the voltage available to the load.  This module evaluates
that chain on a resistive load:

* ideal transconductance      i = (v_intensity - v_be_on) / r_e
* load voltage                v_body = i_out * r_body
* available voltage           v_supply - (v_cc - v_be_on - v_ce_sat)
* gating error                i = i_target - v_ce_sat / r_e
* output-impedance correction (the Early-voltage factor on the above)

All formulas clamp at zero where a real transistor would cut off, and the
stage saturates (reported, never thrown) when the load would need more
voltage than the rail can give.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trace import CHANNEL_NAMES, Trace
from .waveforms import US_PER_S, EventSchedule, params_meta


@dataclass(frozen=True)
class CircuitParams:
    """Output-stage constants.

    Defaults are ordinary small-signal BJT values (not measured from any
    particular board) chosen so the full 0.1-4.0 mA range is commandable:
    5 V logic rail, 0.6 V base-emitter drop, 0.2 V saturation drop, 1 kOhm
    emitter resistor, 100 V Early voltage, 10 kOhm test load.
    """

    v_supply_V: float = 30.0
    v_cc_V: float = 5.0
    v_be_on_V: float = 0.6
    v_ce_sat_V: float = 0.2
    r_e_ohm: float = 1000.0
    v_early_V: float = 100.0
    r_body_ohm: float = 10_000.0

    def __post_init__(self) -> None:
        for name in ("v_supply_V", "v_cc_V", "v_be_on_V", "v_ce_sat_V",
                     "r_e_ohm", "v_early_V", "r_body_ohm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.v_cc_V >= self.v_supply_V:
            raise ValueError("v_cc_V must be below v_supply_V")


@dataclass(frozen=True)
class CircuitOutput:
    """Resolved stage output for one commanded current."""

    i_actual_mA: float
    v_body_V: float
    compliant: bool
    headroom_V: float


def pwm_to_level(duty_pct: float, v_cc_V: float) -> float:
    """DC level out of the PWM averaging filter: v_cc * duty / 100."""
    if not 0.0 <= duty_pct <= 100.0:
        raise ValueError(f"PWM duty {duty_pct} outside 0..100 %")
    return v_cc_V * duty_pct / 100.0


def v2i_ideal(v_intensity_V: float, c: CircuitParams) -> float:
    """Ideal voltage-to-current conversion in mA, clamped at cutoff."""
    return max(0.0, (v_intensity_V - c.v_be_on_V) / c.r_e_ohm) * 1000.0


def available_voltage(c: CircuitParams) -> float:
    """Voltage left for the load after the buffer stage's fixed drops."""
    return c.v_supply_V - (c.v_cc_V - c.v_be_on_V - c.v_ce_sat_V)


def i_out_with_error(i_target_mA: float, c: CircuitParams) -> float:
    """Target current minus the gating transistor's saturation error, in mA."""
    if i_target_mA < 0:
        raise ValueError("i_target_mA must be non-negative")
    return max(0.0, i_target_mA - c.v_ce_sat_V / c.r_e_ohm * 1000.0)


def i_out_early(i_target_mA: float, v_intensity_V: float, c: CircuitParams) -> float:
    """Output current with the finite-output-impedance correction, in mA.

    The gated current is scaled by
    ``1 + ((v_cc - v_be_on) - (v_intensity - v_be_on)) / v_early`` and the
    result clamps at zero last (cutoff wins over the correction).
    """
    if i_target_mA < 0:
        raise ValueError("i_target_mA must be non-negative")
    gated = i_target_mA - c.v_ce_sat_V / c.r_e_ohm * 1000.0
    correction = 1.0 + (
        (c.v_cc_V - c.v_be_on_V) - (v_intensity_V - c.v_be_on_V)
    ) / c.v_early_V
    return max(0.0, gated * correction)


def compliance_ceiling_V(c: CircuitParams) -> float:
    """Largest load voltage the stage can sustain.

    Normally the available voltage; never more than the rail minus the
    gating transistor's saturation drop, so the load always sits strictly
    below the supply.
    """
    return min(available_voltage(c), c.v_supply_V - c.v_ce_sat_V)


def open_loop_output_mA(i_target_mA: float, c: CircuitParams) -> float:
    """Raw stage output for a naive intensity setting (no calibration).

    The intensity voltage is recovered from the ideal conversion and the
    gating-error and output-impedance corrections are applied as they
    stand.  This is what the uncorrected hardware would deliver; the
    running device nulls these systematic terms in firmware (see
    :func:`resolve_output`).
    """
    v_intensity = c.v_be_on_V + i_target_mA / 1000.0 * c.r_e_ohm
    return i_out_early(i_target_mA, v_intensity, c)


def resolve_output(i_commanded_mA: float, c: CircuitParams) -> CircuitOutput:
    """Map one commanded (non-negative) current to the delivered output.

    The stage's systematic errors (the saturation-drop offset and the
    output-impedance correction) are fixed, known constants, and the
    controller pre-compensates its intensity setting for them, so the
    delivered current tracks the setpoint.  What the stage cannot do is
    exceed its voltage budget: if the load would need more than the
    compliance ceiling, the current clamps to ceiling / r_body and the
    sample is flagged non-compliant.  The load voltage therefore stays
    strictly below the supply rail for every input.
    """
    if i_commanded_mA < 0:
        raise ValueError("i_commanded_mA must be non-negative (sign is polarity)")
    ceiling = compliance_ceiling_V(c)
    v_body = i_commanded_mA * c.r_body_ohm / 1000.0
    compliant = v_body <= ceiling
    i_actual = i_commanded_mA
    if not compliant:
        i_actual = ceiling / c.r_body_ohm * 1000.0
        v_body = i_actual * c.r_body_ohm / 1000.0
    return CircuitOutput(
        i_actual_mA=i_actual,
        v_body_V=v_body,
        compliant=compliant,
        headroom_V=available_voltage(c) - v_body,
    )


def _resolve_array(i_commanded_mA: np.ndarray, c: CircuitParams):
    """Vectorized :func:`resolve_output` over non-negative commanded mA."""
    ceiling = compliance_ceiling_V(c)
    v_body = i_commanded_mA * c.r_body_ohm / 1000.0
    compliant = v_body <= ceiling
    i_clamped = ceiling / c.r_body_ohm * 1000.0
    i_actual = np.where(compliant, i_commanded_mA, i_clamped)
    v_body = i_actual * c.r_body_ohm / 1000.0
    return i_actual, v_body, compliant


def rasterize_schedule(schedule: EventSchedule, sample_rate_Hz: float) -> np.ndarray:
    """Signed commanded current sampled uniformly over the session."""
    n = int(round(schedule.total_duration_us * sample_rate_Hz / US_PER_S))
    commanded = np.zeros(n, dtype=np.float64)
    scale = sample_rate_Hz / US_PER_S
    for ev in schedule.events:
        i0 = math.ceil(ev.t_start_us * scale - 1e-9)
        i1 = math.ceil((ev.t_start_us + ev.duration_us) * scale - 1e-9)
        i0, i1 = max(i0, 0), min(i1, n)
        if i1 > i0:
            commanded[i0:i1] = ev.polarity * ev.amplitude_mA
    return commanded


def simulate_schedule(schedule: EventSchedule, c: CircuitParams,
                      sample_rate_Hz: float) -> Trace:
    """Render a schedule through the output-stage model into a full trace.

    The commanded channel is the rasterized schedule; each sample is
    resolved through the stage (sign restored from polarity) to give the
    actual current, load voltage, and compliance flag.
    """
    max_freq = float(schedule.meta.get("max_pulse_freq_Hz", "0") or 0)
    if sample_rate_Hz <= 0:
        raise ValueError("sample_rate_Hz must be positive")
    if sample_rate_Hz < 2.0 * max_freq:
        raise ValueError(
            f"sample rate {sample_rate_Hz} Hz undersamples pulses up to "
            f"{max_freq} Hz; need at least {2.0 * max_freq} Hz")
    commanded = rasterize_schedule(schedule, sample_rate_Hz)
    return simulate_commanded(commanded, schedule.params, c, sample_rate_Hz,
                              extra_meta=schedule.meta)


def simulate_commanded(commanded_mA: np.ndarray, params, c: CircuitParams,
                       sample_rate_Hz: float,
                       extra_meta: dict[str, str] | None = None) -> Trace:
    """Resolve a signed commanded-current series into a complete trace."""
    sign = np.sign(commanded_mA)
    i_actual, v_body, compliant = _resolve_array(np.abs(commanded_mA), c)
    meta = params_meta(params)
    if extra_meta:
        meta.update(extra_meta)
    meta.update(circuit_meta(c))
    channels = {
        "commanded_mA": np.asarray(commanded_mA, dtype=np.float64),
        "actual_mA": i_actual * sign,
        "v_body_V": v_body * sign,
        "compliant": compliant.astype(np.float64),
    }
    assert set(channels) == set(CHANNEL_NAMES)
    return Trace(sample_rate_Hz=sample_rate_Hz, channels=channels, meta=meta)


def simulate_trace(trace: Trace, c: CircuitParams) -> Trace:
    """Complete a commanded-only trace (noise mode) through the stage."""
    commanded = trace.channel("commanded_mA")
    sign = np.sign(commanded)
    i_actual, v_body, compliant = _resolve_array(np.abs(commanded), c)
    channels = {
        "commanded_mA": commanded,
        "actual_mA": i_actual * sign,
        "v_body_V": v_body * sign,
        "compliant": compliant.astype(np.float64),
    }
    meta = dict(trace.meta)
    meta.update(circuit_meta(c))
    return Trace(sample_rate_Hz=trace.sample_rate_Hz, channels=channels, meta=meta)


def circuit_meta(c: CircuitParams) -> dict[str, str]:
    return {
        "v_supply_V": repr(c.v_supply_V),
        "v_cc_V": repr(c.v_cc_V),
        "v_be_on_V": repr(c.v_be_on_V),
        "v_ce_sat_V": repr(c.v_ce_sat_V),
        "r_e_ohm": repr(c.r_e_ohm),
        "v_early_V": repr(c.v_early_V),
        "r_body_ohm": repr(c.r_body_ohm),
    }
