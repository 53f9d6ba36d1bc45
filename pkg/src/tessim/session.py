"""Live session lifecycle: the state machine a clinician drives.

A session is created Armed with its schedule pre-generated, started into
the warm-up, and then advanced purely by :meth:`Session.tick` calls --
the caller owns time, which makes every frame sequence a deterministic
function of (prescription, seed, tick sequence).  Phases follow the
elapsed clock: WarmUp until the ramp tops out, Dose until the prescribed
time has passed, CoolDown until the mirror ramp ends.

Telemetry is dual-channel.  ``displayed_mA`` is the blinded value: the
programmed waveform level, identical between a SHAM session and its
matched real session.  ``actual_mA`` is the unblinded delivered current,
which a SHAM session silently holds at zero for every event inside the
dose window.

Operator actions never step the current: an abort runs an accelerated
ramp (4 mA/min) from the present level down to zero, and an in-dose
intensity change glides to the new plateau at the standard 1 mA/min.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass

from .circuit import CircuitParams, resolve_output
from .params import (
    StimMode,
    StimParams,
    ValidatedParams,
    ValidationError,
    check_intensity_setpoint,
    snap_to_intensity_step,
    validate_params,
)
from .trace import Trace
from .waveforms import (
    EventSchedule,
    dose_us,
    gen_trns,
    generate_schedule,
    intensity_envelope,
    warmup_us,
)

ABORT_RATE_MA_PER_MIN = 4.0
ADJUST_RATE_MA_PER_MIN = 1.0

# Noise sessions pre-render their sample stream at this rate.
TRNS_SESSION_SAMPLE_RATE_HZ = 2000.0


class SessionState(enum.Enum):
    IDLE = "idle"
    ARMED = "armed"
    WARMUP = "warmup"
    DOSE = "dose"
    COOLDOWN = "cooldown"
    DONE = "done"
    ABORTED = "aborted"


ACTIVE_STATES = frozenset({
    SessionState.ARMED, SessionState.WARMUP,
    SessionState.DOSE, SessionState.COOLDOWN,
})


class SessionStateError(RuntimeError):
    """An operation was attempted in a state that does not allow it."""


@dataclass(frozen=True)
class TelemetryFrame:
    """One telemetry sample: blinded display plus unblinded ground truth."""

    t_ms: float
    state: SessionState
    displayed_mA: float
    actual_mA: float
    v_body_V: float
    compliant: bool


class Session:
    """One stimulation session bound to an output-stage configuration.

    Use :func:`create_session` to construct one from raw parameters.
    """

    def __init__(self, params: ValidatedParams, circuit: CircuitParams):
        self.params = params
        self.circuit = circuit
        self._display_params = params.without_sham()

        if params.mode is StimMode.TRNS:
            self._schedule: EventSchedule | None = None
            self._trace_actual: Trace | None = gen_trns(
                params, TRNS_SESSION_SAMPLE_RATE_HZ)
            self._trace_display = (
                self._trace_actual if not params.sham
                else gen_trns(self._display_params, TRNS_SESSION_SAMPLE_RATE_HZ))
        else:
            self._schedule = generate_schedule(params)
            self._sched_display = (
                self._schedule if not params.sham
                else generate_schedule(self._display_params))
            self._trace_actual = None
            self._starts = [ev.t_start_us for ev in self._schedule.events]
            self._starts_display = [ev.t_start_us
                                    for ev in self._sched_display.events]

        self._warmup_ms = warmup_us(params) / 1000.0
        self._dose_end_ms = (warmup_us(params) + dose_us(params)) / 1000.0
        self._total_ms = (2 * warmup_us(params) + dose_us(params)) / 1000.0

        self.state = SessionState.ARMED
        self._t_ms = 0.0
        # plateau trajectory (in-dose retargets glide at the adjust rate)
        self._level_anchor_mA = params.intensity_mA
        self._level_anchor_ms = self._warmup_ms
        self._level_target_mA = params.intensity_mA
        # abort ramp bookkeeping
        self._aborting = False
        self._abort_from_mA = 0.0
        self._abort_start_ms = 0.0

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        """Armed -> WarmUp; the session clock starts at zero."""
        if self.state is not SessionState.ARMED:
            raise SessionStateError(f"cannot start from {self.state.value}")
        self.state = SessionState.WARMUP
        self._t_ms = 0.0

    def reset(self) -> None:
        """Done/Aborted -> Idle."""
        if self.state not in (SessionState.DONE, SessionState.ABORTED):
            raise SessionStateError(f"cannot reset from {self.state.value}")
        self.state = SessionState.IDLE

    def arm(self) -> None:
        """Idle -> Armed, ready for a fresh run of the same prescription."""
        if self.state is not SessionState.IDLE:
            raise SessionStateError(f"cannot arm from {self.state.value}")
        self._t_ms = 0.0
        self._aborting = False
        self._level_anchor_mA = self.params.intensity_mA
        self._level_anchor_ms = self._warmup_ms
        self._level_target_mA = self.params.intensity_mA
        self.state = SessionState.ARMED

    def abort(self) -> None:
        """Begin the accelerated 4 mA/min ramp to zero; Aborted at its end.

        From Armed (no current flowing) the session is Aborted at once.
        Aborting an already-aborting session is a no-op.
        """
        if self.state not in ACTIVE_STATES:
            raise SessionStateError(f"cannot abort from {self.state.value}")
        if self._aborting:
            return
        if self.state is SessionState.ARMED:
            self.state = SessionState.ABORTED
            return
        self._aborting = True
        self._abort_from_mA = self._programmed_level_mA(self._t_ms)
        self._abort_start_ms = self._t_ms
        # the accelerated cool-down starts now, not at the next tick
        self.state = SessionState.COOLDOWN

    def set_intensity(self, new_mA: float) -> None:
        """Retarget the plateau during Dose via a 1 mA/min glide.

        The dose end time is unchanged.  Rejected (session untouched) if
        the session is not in Dose or the value is off the legal lattice.
        """
        if self.state is not SessionState.DOSE or self._aborting:
            raise SessionStateError(
                f"intensity can only be adjusted during dose "
                f"(state is {self.state.value})")
        violation = check_intensity_setpoint(new_mA)
        if violation is not None:
            raise ValidationError([violation])
        target = snap_to_intensity_step(new_mA)
        if target == self._level_target_mA:
            return
        self._level_anchor_mA = self._level_mA(self._t_ms)
        self._level_anchor_ms = self._t_ms
        self._level_target_mA = target

    def tick(self, dt_ms: float) -> TelemetryFrame:
        """Advance the clock by ``dt_ms`` and emit one telemetry frame."""
        if self.state in (SessionState.IDLE, SessionState.DONE,
                          SessionState.ABORTED):
            raise SessionStateError(f"cannot tick a {self.state.value} session")
        if dt_ms < 0:
            raise ValueError("dt_ms must be non-negative")
        if self.state is SessionState.ARMED:
            return TelemetryFrame(0.0, SessionState.ARMED, 0.0, 0.0, 0.0, True)

        self._t_ms += dt_ms
        t = min(self._t_ms, self._total_ms)
        self._update_state()
        return self._frame_at(t)

    # -- internals -------------------------------------------------------

    def _update_state(self) -> None:
        t = self._t_ms
        if self._aborting:
            if self._abort_level_mA(t) <= 0.0 or t >= self._total_ms:
                self.state = SessionState.ABORTED
            else:
                self.state = SessionState.COOLDOWN
            return
        if t >= self._total_ms:
            self.state = SessionState.DONE
        elif t >= self._dose_end_ms:
            self.state = SessionState.COOLDOWN
        elif t >= self._warmup_ms:
            self.state = SessionState.DOSE
        else:
            self.state = SessionState.WARMUP

    def _level_mA(self, t_ms: float) -> float:
        """Plateau-level trajectory including any in-dose retargets."""
        anchor, target = self._level_anchor_mA, self._level_target_mA
        if t_ms <= self._level_anchor_ms or anchor == target:
            return anchor
        moved = ADJUST_RATE_MA_PER_MIN * (t_ms - self._level_anchor_ms) / 60000.0
        if moved >= abs(target - anchor):
            return target
        return anchor + moved * (1 if target > anchor else -1)

    def _scale(self, t_ms: float) -> float:
        """Amplitude rescale factor for in-dose retargets."""
        intensity = self.params.intensity_mA
        if intensity == 0.0:
            return 1.0
        if t_ms < self._warmup_ms:
            return 1.0
        if t_ms < self._dose_end_ms:
            return self._level_mA(t_ms) / intensity
        return self._level_mA(self._dose_end_ms) / intensity

    def _abort_level_mA(self, t_ms: float) -> float:
        fallen = ABORT_RATE_MA_PER_MIN * (t_ms - self._abort_start_ms) / 60000.0
        return max(0.0, self._abort_from_mA - fallen)

    def _programmed_level_mA(self, t_ms: float) -> float:
        """The (non-sham) envelope level, retargets applied."""
        t_s = min(t_ms, self._total_ms) / 1000.0
        base = intensity_envelope(t_s, self._display_params)
        return base * self._scale(t_ms)

    def _lookup_event(self, starts: list[int], schedule: EventSchedule,
                      t_us: float) -> tuple[float, int]:
        i = bisect.bisect_right(starts, t_us) - 1
        if i >= 0:
            ev = schedule.events[i]
            if t_us < ev.t_start_us + ev.duration_us:
                return ev.amplitude_mA, ev.polarity
        return 0.0, 1

    def _instantaneous(self, t_ms: float, display: bool) -> float:
        """Signed commanded value at ``t_ms`` on one channel."""
        t_us = t_ms * 1000.0
        scale = self._scale(t_ms)
        cap = self._abort_level_mA(t_ms) if self._aborting else None

        if self.params.mode is StimMode.TRNS:
            trace = self._trace_display if display else self._trace_actual
            x = trace.channel("commanded_mA")
            idx = int(t_us * trace.sample_rate_Hz / 1_000_000)
            value = float(x[idx]) if 0 <= idx < len(x) else 0.0
            value *= scale
            if cap is not None and abs(value) > cap:
                value = cap if value >= 0 else -cap
            return value

        if display:
            amp, pol = self._lookup_event(self._starts_display,
                                          self._sched_display, t_us)
        else:
            amp, pol = self._lookup_event(self._starts, self._schedule, t_us)
        if scale != 1.0:
            amp = snap_to_intensity_step(amp * scale)
        if cap is not None:
            amp = min(amp, snap_to_intensity_step(cap))
        return amp * pol

    def _frame_at(self, t_ms: float) -> TelemetryFrame:
        commanded = self._instantaneous(t_ms, display=False)
        displayed = abs(self._instantaneous(t_ms, display=True))
        out = resolve_output(abs(commanded), self.circuit)
        sign = 1.0 if commanded >= 0 else -1.0
        return TelemetryFrame(
            t_ms=t_ms,
            state=self.state,
            displayed_mA=displayed,
            actual_mA=out.i_actual_mA * sign,
            v_body_V=out.v_body_V * sign,
            compliant=out.compliant,
        )


def create_session(p: StimParams, c: CircuitParams | None = None) -> Session:
    """Validate a prescription and return an Armed session.

    Raises :class:`~tessim.params.ValidationError` carrying the complete
    violation list if the prescription breaks any rule.
    """
    validated = validate_params(p)
    return Session(validated, c if c is not None else CircuitParams())
