"""Flat ``key=value`` config parsing.

The format is one ``key=value`` pair per line.  Dotted keys
(``sim.tau=13``) address command-specific blocks; bare keys belong to
the model block.  ``#`` starts a comment, blank lines are ignored.
"""

from __future__ import annotations

from .errors import ConfigError

MODEL_KEYS = ("beta", "m", "gamma", "d11", "d21", "d22", "ell", "variant")


def parse_kv(text: str) -> dict[str, tuple[str, int]]:
    """Parse config text into ``{key: (raw_value, lineno)}``.

    Duplicate keys and malformed lines raise :class:`ConfigError` with
    the offending line number.
    """
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError("empty key", lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        out[key] = (value, lineno)
    return out


def get_float(entries, key, default=None):
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value, lineno = entries[key]
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: not a number: {value!r}", lineno) from None


def get_int(entries, key, default=None):
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value, lineno = entries[key]
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: not an integer: {value!r}", lineno) from None


def get_str(entries, key, default=None, choices=None):
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value, lineno = entries[key]
    if choices is not None and value not in choices:
        raise ConfigError(
            f"key {key!r}: expected one of {sorted(choices)}, got {value!r}", lineno
        )
    return value
