#!/usr/bin/env python3
"""Regenerate the committed golden traces (one per CES pattern).

Run from the repository root after an intentional generator change:

    python scripts/make_golden_traces.py

The golden files pin byte-exact rendering for continuous, frequency-sweep
and burst patterns; tests/test_cli.py re-renders and compares bytes.
"""

from pathlib import Path

from tessim.cli import main

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"
SAMPLE_RATES = {
    "ces_continuous": 500.0,
    "ces_fm": 500.0,
    "ces_burst": 1000.0,
}


def render_all() -> None:
    for name, rate in SAMPLE_RATES.items():
        config = GOLDEN / f"{name}.conf"
        out = GOLDEN / f"{name}.csv"
        code = main(["render", str(config), "--out", str(out),
                     "--sample-rate", str(rate)])
        if code != 0:
            raise SystemExit(f"render failed for {config} (exit {code})")
        print(f"wrote {out}")


if __name__ == "__main__":
    render_all()
