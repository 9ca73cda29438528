"""Physical constants and unit-carrying quantity parsing.

Internally every frequency is an angular frequency in rad/s, every time is in
seconds and every temperature in kelvin.  Strings such as ``"71 uK"`` or
``"-5kHz"`` are converted here and nowhere else.  Decimal literals are parsed
with :class:`fractions.Fraction` so that decimal prefixes are applied as exact
rational scalings before a single final rounding to float.
"""

import math
import re
from fractions import Fraction

import scipy.constants as const

from .errors import ValidationError

HBAR = const.hbar
K_B = const.k
ATOMIC_MASS = const.atomic_mass
#: mass of 133Cs
CESIUM_MASS = 132.905451933 * const.atomic_mass
TWO_PI = 2.0 * math.pi

_PREFIX = {
    "": Fraction(1),
    "G": Fraction(10**9),
    "M": Fraction(10**6),
    "k": Fraction(10**3),
    "m": Fraction(1, 10**3),
    "u": Fraction(1, 10**6),
    "µ": Fraction(1, 10**6),
    "μ": Fraction(1, 10**6),
    "n": Fraction(1, 10**9),
    "p": Fraction(1, 10**12),
}

# base unit -> (dimension, multiply by 2*pi after scaling)
_BASE = {
    "s": ("time", False),
    "Hz": ("frequency", True),
    "rad/s": ("frequency", False),
    "K": ("temperature", False),
    "m": ("length", False),
    "J": ("energy", False),
    "/s": ("rate", False),
    "1/s": ("rate", False),
    "s^-1": ("rate", False),
    "kg": ("mass", False),
    "u": ("mass", False),
    "rad": ("angle", False),
}

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY_RE = re.compile(rf"^\s*({_NUMBER})\s*(\S*)\s*$")
_NO_PREFIX = {"u", "kg", "/s", "1/s", "s^-1", "rad/s", "rad"}

#: ordinary kHz -> rad/s, applied as one multiplication
KHZ = 1000.0 * TWO_PI


def parse_number(text):
    """Parse a plain decimal literal exactly into a :class:`Fraction`."""
    text = text.strip()
    if not re.fullmatch(_NUMBER, text):
        raise ValidationError(f"not a number: {text!r}")
    return Fraction(text)


def _split_unit(unit):
    if unit in _BASE:
        return Fraction(1), unit
    for prefix in sorted(_PREFIX, key=len, reverse=True):
        if prefix and unit.startswith(prefix):
            base = unit[len(prefix):]
            if base in _BASE and base not in _NO_PREFIX:
                return _PREFIX[prefix], base
    raise ValidationError(f"unknown unit {unit!r}")


def parse_quantity(text, dimension=None):
    """Parse ``"<number> <unit>"`` into internal units.

    Parameters
    ----------
    text : str
        Quantity string; whitespace between number and unit is optional.
    dimension : str, optional
        Required dimension: ``time``, ``frequency``, ``temperature``,
        ``length``, ``energy``, ``rate``, ``mass`` or ``angle``.

    Returns
    -------
    float
        Value in internal units.  Frequencies given in Hz become rad/s.

    Raises
    ------
    ValidationError
        Bare numbers, unknown units or a dimension mismatch.
    """
    if not isinstance(text, str):
        raise ValidationError(f"quantity must be a string with a unit, got {text!r}")
    m = _QUANTITY_RE.match(text)
    if m is None:
        raise ValidationError(f"cannot parse quantity {text!r}")
    number, unit = m.group(1), m.group(2)
    if not unit:
        raise ValidationError(f"quantity {text!r} has no unit")
    scale, base = _split_unit(unit)
    dim, angular = _BASE[base]
    if dimension is not None and dim != dimension:
        raise ValidationError(f"expected a {dimension}, got {text!r} ({dim})")
    value = Fraction(number) * scale
    if base == "u":
        return float(value) * ATOMIC_MASS
    if angular:
        return float(value) * TWO_PI
    return float(value)


def format_quantity(value, unit):
    """Inverse of :func:`parse_quantity` for a few display units."""
    factors = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "K": 1.0, "mK": 1e-3, "uK": 1e-6,
               "nm": 1e-9, "m": 1.0, "/s": 1.0}
    if unit in ("Hz", "kHz", "MHz"):
        return f"{value / TWO_PI / {'Hz': 1.0, 'kHz': 1e3, 'MHz': 1e6}[unit]!r} {unit}"
    return f"{value / factors[unit]!r} {unit}"
