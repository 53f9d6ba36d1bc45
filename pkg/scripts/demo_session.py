#!/usr/bin/env python3
"""Run a synthetic session end to end and print its telemetry.

    python scripts/demo_session.py [--sham] [--abort-at-s T]

A compact way to watch the state machine: a 2.0 mA CES burst session with
fast ramps, ticked at 10 Hz, one printed line per 500 ms of session time.
"""

import argparse

from tessim.params import BurstConfig, PulsePattern, StimMode, StimParams
from tessim.session import SessionState, create_session


def run(sham: bool, abort_at_s: float | None) -> None:
    params = StimParams(
        mode=StimMode.CES,
        intensity_mA=2.0,
        dose_s=10.0,
        ramp_rate_mA_per_min=30.0,
        freq_lo_Hz=100.0,
        freq_hi_Hz=100.0,
        duty_pct=50.0,
        pattern=PulsePattern.BURST,
        burst=BurstConfig(burst_freq_Hz=2.0, chain_count=5),
        sham=sham,
        seed=7,
    )
    session = create_session(params)
    session.start()
    print(f"{'t_s':>7} {'state':<9} {'displayed':>9} {'actual':>8} "
          f"{'v_body':>8} ok")
    aborted = False
    while session.state not in (SessionState.DONE, SessionState.ABORTED):
        frame = session.tick(100.0)
        if abort_at_s is not None and not aborted and \
                frame.t_ms >= abort_at_s * 1000.0:
            session.abort()
            aborted = True
            print(f"--- abort requested at {frame.t_ms / 1000.0:.1f} s ---")
        if frame.t_ms % 500.0 < 1e-9 or frame.state in (SessionState.DONE,
                                                        SessionState.ABORTED):
            print(f"{frame.t_ms / 1000.0:>7.1f} {frame.state.value:<9} "
                  f"{frame.displayed_mA:>9.2f} {frame.actual_mA:>8.2f} "
                  f"{frame.v_body_V:>8.2f} {'y' if frame.compliant else 'N'}")
    print(f"final state: {session.state.value}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sham", action="store_true")
    parser.add_argument("--abort-at-s", type=float, default=None)
    args = parser.parse_args()
    run(args.sham, args.abort_at_s)
