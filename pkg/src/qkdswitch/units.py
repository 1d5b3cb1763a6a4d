"""Quantity parsing and formatting for scenario files.

Internal units are bits, bits per second and seconds. Prefixes are decimal
(1 kB = 1000 B, 1 MB = 8e6 bits). Parsing goes through :class:`Decimal` so that
``format_*`` followed by ``parse_*`` reproduces the original float exactly.
"""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation

__all__ = [
    "UnitError",
    "parse_rate",
    "parse_size",
    "parse_duration",
    "parse_fraction",
    "format_rate",
    "format_size",
    "format_duration",
]


class UnitError(ValueError):
    """A quantity string could not be converted."""


_RATE_UNITS = {
    "bps": Decimal(1),
    "kbps": Decimal(10) ** 3,
    "Mbps": Decimal(10) ** 6,
    "Gbps": Decimal(10) ** 9,
}
_SIZE_UNITS = {
    "bit": Decimal(1),
    "B": Decimal(8),
    "kB": Decimal(8) * 10**3,
    "MB": Decimal(8) * 10**6,
    "GB": Decimal(8) * 10**9,
}
_TIME_UNITS = {
    "s": Decimal(1),
    "min": Decimal(60),
    "h": Decimal(3600),
}

_QUANTITY = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z%]*)\s*$")


def _split(value: object, what: str) -> tuple[Decimal, str]:
    if isinstance(value, bool):
        raise UnitError(f"cannot parse {what} from boolean {value!r}")
    if isinstance(value, (int, float)):
        return Decimal(repr(value)), ""
    if not isinstance(value, str):
        raise UnitError(f"cannot parse {what} from {value!r}")
    m = _QUANTITY.match(value)
    if m is None:
        raise UnitError(f"malformed {what} {value!r}")
    try:
        number = Decimal(m.group(1))
    except InvalidOperation as exc:  # pragma: no cover - regex already guards this
        raise UnitError(f"malformed {what} {value!r}") from exc
    return number, m.group(2)


def _convert(value: object, units: dict[str, Decimal], default: str, what: str) -> float:
    number, suffix = _split(value, what)
    suffix = suffix or default
    if suffix not in units:
        allowed = ", ".join(units)
        raise UnitError(f"unknown {what} unit {suffix!r} in {value!r} (expected one of {allowed})")
    out = number * units[suffix]
    if out < 0:
        raise UnitError(f"negative {what} {value!r}")
    return float(out)


def parse_rate(value: object) -> float:
    """Return a rate in bits/second; bare numbers are bits/second."""
    return _convert(value, _RATE_UNITS, "bps", "rate")


def parse_size(value: object) -> float:
    """Return a size in bits; bare numbers are bits."""
    return _convert(value, _SIZE_UNITS, "bit", "size")


def parse_duration(value: object) -> float:
    """Return a duration in seconds; accepts ``inf`` for an unbounded duration."""
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinite"):
        return float("inf")
    return _convert(value, _TIME_UNITS, "s", "duration")


def parse_fraction(value: object) -> float:
    """Parse ``"50%"`` or ``0.5`` into a fraction in [0, 1]."""
    number, suffix = _split(value, "fraction")
    if suffix == "%":
        number /= 100
    elif suffix:
        raise UnitError(f"unknown fraction unit {suffix!r} in {value!r}")
    if not 0 <= number <= 1:
        raise UnitError(f"fraction {value!r} outside [0, 1]")
    return float(number)


def _shortest(d: Decimal) -> str:
    s = format(d.normalize(), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s or "0"


def _format(value: float, units: dict[str, Decimal], smallest: str) -> str:
    exact = Decimal(repr(float(value)))
    if exact == 0:
        return "0" + smallest
    best = smallest
    for name, scale in units.items():
        if abs(exact) >= scale and scale >= units[best]:
            best = name
    return _shortest(exact / units[best]) + best


def format_rate(bits_per_second: float) -> str:
    """Format a rate with the largest prefix that keeps the mantissa >= 1."""
    return _format(bits_per_second, _RATE_UNITS, "bps")


def format_size(bits: float) -> str:
    """Format a size in bytes with a decimal prefix.

    Sizes that are not a whole number of bytes are still written in bytes
    (e.g. ``0.125B``); the division by 8 is exact in decimal.
    """
    units = {k: v for k, v in _SIZE_UNITS.items() if k != "bit"}
    return _format(bits, units, "B")


def format_duration(seconds: float) -> str:
    if seconds == float("inf"):
        return "inf"
    return _shortest(Decimal(repr(float(seconds)))) + "s"
