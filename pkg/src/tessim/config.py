"""Session configuration parsing: the prescription on disk.

The format is deliberately rigid -- a silent typo in a stimulation
prescription is unacceptable, so unknown keys, duplicate keys, and
malformed values are all hard errors, each reported with its line number.

::

    # full CES burst example
    [stim]
    mode = ces
    intensity_mA = 2.0
    dose_s = 600
    freq_lo_Hz = 100
    freq_hi_Hz = 200
    duty_pct = 50
    pattern = burst
    burst_freq_Hz = 2
    chain_count = 5
    sham = false
    seed = 42

    [circuit]
    r_body_ohm = 10000

Only ``mode``, ``intensity_mA`` and ``dose_s`` are required; every other
key falls back to the documented defaults.  The same key tables drive the
control service's JSON config documents (where values may already be
typed).
"""

from __future__ import annotations

from typing import Any, Callable, Mapping

from .circuit import CircuitParams
from .params import BurstConfig, PulsePattern, StimMode, StimParams


class ConfigError(ValueError):
    """A malformed config document; line_no is None for non-file sources."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


def _to_float(value: Any) -> float:
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    return float(str(value).strip())


def _to_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("expected an integer")
    if isinstance(value, int):
        return value
    text = str(value).strip()
    return int(text, 10)


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "1", "on"):
        return True
    if text in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {value!r}")


def _to_mode(value: Any) -> StimMode:
    try:
        return StimMode(str(value).strip().lower())
    except ValueError:
        legal = ", ".join(m.value for m in StimMode)
        raise ValueError(f"unknown mode {value!r}; one of: {legal}") from None


def _to_pattern(value: Any) -> PulsePattern:
    try:
        return PulsePattern(str(value).strip().lower())
    except ValueError:
        legal = ", ".join(p.value for p in PulsePattern)
        raise ValueError(f"unknown pattern {value!r}; one of: {legal}") from None


_STIM_KEYS: dict[str, Callable[[Any], Any]] = {
    "mode": _to_mode,
    "intensity_mA": _to_float,
    "dose_s": _to_float,
    "ramp_rate_mA_per_min": _to_float,
    "freq_lo_Hz": _to_float,
    "freq_hi_Hz": _to_float,
    "duty_pct": _to_float,
    "pattern": _to_pattern,
    "burst_freq_Hz": _to_float,
    "chain_count": _to_int,
    "sham": _to_bool,
    "seed": _to_int,
}
_STIM_REQUIRED = ("mode", "intensity_mA", "dose_s")

_CIRCUIT_KEYS: dict[str, Callable[[Any], Any]] = {
    "v_supply_V": _to_float,
    "v_cc_V": _to_float,
    "v_be_on_V": _to_float,
    "v_ce_sat_V": _to_float,
    "r_e_ohm": _to_float,
    "v_early_V": _to_float,
    "r_body_ohm": _to_float,
}

_SECTIONS = ("stim", "circuit")


def _convert_section(
    name: str,
    raw: Mapping[str, Any],
    keys: Mapping[str, Callable[[Any], Any]],
    lines: Mapping[str, int] | None = None,
) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in raw.items():
        line = lines.get(key) if lines else None
        if key not in keys:
            raise ConfigError(f"unknown key {key!r} in [{name}]", line)
        try:
            out[key] = keys[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", line) from None
    return out


def stim_params_from_mapping(
    raw: Mapping[str, Any], lines: Mapping[str, int] | None = None,
) -> StimParams:
    """Build (unvalidated) stimulation parameters from a key/value mapping."""
    values = _convert_section("stim", raw, _STIM_KEYS, lines)
    for key in _STIM_REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r} in [stim]")
    burst_keys = {"burst_freq_Hz", "chain_count"} & set(values)
    burst = None
    if burst_keys:
        if burst_keys != {"burst_freq_Hz", "chain_count"}:
            missing = ({"burst_freq_Hz", "chain_count"} - burst_keys).pop()
            raise ConfigError(
                f"burst configuration needs both burst_freq_Hz and "
                f"chain_count; missing {missing!r}")
        burst = BurstConfig(burst_freq_Hz=values.pop("burst_freq_Hz"),
                            chain_count=values.pop("chain_count"))
    return StimParams(burst=burst, **values)


def circuit_params_from_mapping(
    raw: Mapping[str, Any], lines: Mapping[str, int] | None = None,
) -> CircuitParams:
    """Build output-stage constants from a key/value mapping (defaults fill)."""
    values = _convert_section("circuit", raw, _CIRCUIT_KEYS, lines)
    try:
        return CircuitParams(**values)
    except ValueError as exc:
        raise ConfigError(f"bad circuit constants: {exc}") from None


def parse_session_config(text: str) -> tuple[StimParams, CircuitParams]:
    """Parse a session config document into its two parameter blocks.

    Raises :class:`ConfigError` with the offending line number for any
    unknown section/key, duplicate key, missing required key, or
    unparseable value.  The stimulation block is *not* validated against
    the device limits here; run it through ``validate_params``.
    """
    sections: dict[str, dict[str, str]] = {name: {} for name in _SECTIONS}
    line_map: dict[str, dict[str, int]] = {name: {} for name in _SECTIONS}
    current: str | None = None

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(
                    f"unknown section [{section}]; expected "
                    + " or ".join(f"[{s}]" for s in _SECTIONS), line_no)
            current = section
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line_no)
        if current is None:
            raise ConfigError(
                "key outside any section; start with [stim] or [circuit]",
                line_no)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError("empty key", line_no)
        if key in sections[current]:
            raise ConfigError(
                f"duplicate key {key!r} (first on line "
                f"{line_map[current][key]})", line_no)
        sections[current][key] = value
        line_map[current][key] = line_no

    stim = stim_params_from_mapping(sections["stim"], line_map["stim"])
    circuit = circuit_params_from_mapping(sections["circuit"], line_map["circuit"])
    return stim, circuit
