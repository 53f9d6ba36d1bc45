import pytest

from tessim.params import (
    BurstConfig,
    PulsePattern,
    StimMode,
    StimParams,
    ValidatedParams,
    validate_params,
)


def make_stim(**overrides) -> StimParams:
    """A known-good tPCS prescription, overridable per test."""
    base = dict(
        mode=StimMode.TPCS,
        intensity_mA=2.0,
        dose_s=60.0,
        ramp_rate_mA_per_min=1.0,
        freq_lo_Hz=100.0,
        freq_hi_Hz=100.0,
        duty_pct=50.0,
        pattern=PulsePattern.CONTINUOUS,
        burst=None,
        sham=False,
        seed=0,
    )
    base.update(overrides)
    return StimParams(**base)


def make_valid(**overrides) -> ValidatedParams:
    return validate_params(make_stim(**overrides))


def make_burst_stim(**overrides) -> StimParams:
    base = dict(
        mode=StimMode.CES,
        freq_lo_Hz=100.0,
        freq_hi_Hz=200.0,
        pattern=PulsePattern.BURST,
        burst=BurstConfig(burst_freq_Hz=2.0, chain_count=3),
    )
    base.update(overrides)
    return make_stim(**base)


@pytest.fixture
def tpcs_fast() -> StimParams:
    """Short session for render-heavy tests: 1 s ramps, 2 s dose."""
    return make_stim(intensity_mA=1.0, ramp_rate_mA_per_min=60.0, dose_s=2.0,
                     freq_lo_Hz=50.0, freq_hi_Hz=50.0)
