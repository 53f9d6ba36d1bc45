"""Software twin of a digital transcranial electrical stimulator.

Event-exact waveform generation for tDCS / tPCS / CES / MET / tRNS, a
numerical model of the transistor output stage, a deterministic session
engine with SHAM blinding, trace analysis, and a control service.
"""

from .circuit import (
    CircuitOutput,
    CircuitParams,
    available_voltage,
    i_out_early,
    i_out_with_error,
    open_loop_output_mA,
    pwm_to_level,
    resolve_output,
    simulate_schedule,
    simulate_trace,
    v2i_ideal,
)
from .config import ConfigError, parse_session_config
from .params import (
    BurstConfig,
    PulsePattern,
    StimMode,
    StimParams,
    ValidatedParams,
    ValidationError,
    Violation,
    check_params,
    validate_params,
)
from .session import (
    Session,
    SessionState,
    SessionStateError,
    TelemetryFrame,
    create_session,
)
from .trace import (
    Spectrum,
    Trace,
    band_energy_ratio,
    detect_pulses,
    fft_spectrum,
    measure_duty_and_freq,
    read_trace_csv,
    write_trace_csv,
)
from .waveforms import (
    EventSchedule,
    OutputEvent,
    duty_cycle_pct,
    fm_schedule,
    gen_ces,
    gen_met,
    gen_tdcs,
    gen_tpcs,
    gen_trns,
    generate_schedule,
    intensity_envelope,
    pulse_frequency_Hz,
)

__version__ = "0.1.0"
