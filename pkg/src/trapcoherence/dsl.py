"""Line-oriented pulse-sequence language.

One statement per line, ``#`` starts a comment::

    detuning f=-5kHz
    pulse angle=pi/2
    wait t=1ms
    pulse angle=pi
    wait t=scan          # scanned delay, filled from the sample times
    dephase C=0.8
    pulse angle=pi/2 phase=0.1 mode=detuned rabi=17kHz

Statements and keys:

``pulse``   ``angle`` (required; ``pi``, ``pi/2``, ``-pi/2``, ``3*pi/2`` or radians),
            ``phase`` (radians or a pi expression), ``mode`` (``ideal``/``detuned``),
            ``rabi`` (frequency; required for detuned pulses unless a default
            is passed to :func:`parse_sequence`).
``wait``    ``t`` (duration with a time unit, or ``scan``).
``dephase`` ``C`` (number in [0, 1]).
``detuning`` ``f`` (frequency with unit), at most once.
"""

import math
import re
from dataclasses import dataclass

from .errors import ParseError, ValidationError
from .spin import Delay, Dephase, Pulse, PulseSpec, SequenceSpec
from .units import parse_number, parse_quantity

_KEYS = {
    "pulse": {"angle": True, "phase": False, "mode": False, "rabi": False},
    "wait": {"t": True},
    "dephase": {"C": True},
    "detuning": {"f": True},
}
_TOKEN = re.compile(r"\S+")
_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_PI_EXPR = re.compile(rf"^([+-])?(?:({_NUM})\*)?pi(?:/({_NUM}))?$")


@dataclass(frozen=True)
class SequenceSource:
    """Program text together with its parsed form.

    ``spans[i]`` is the ``(line, column)`` of the statement that produced
    ``spec.elements[i]``.
    """

    text: str
    spec: SequenceSpec

    @property
    def spans(self):
        return self.spec.source_spans


def parse_angle(text, line=None, column=None):
    """Radians from ``pi``-expressions or a plain number literal."""
    m = _PI_EXPR.match(text)
    if m:
        sign, mult, div = m.groups()
        value = math.pi
        if mult is not None:
            value *= float(parse_number(mult))
        if div is not None:
            d = float(parse_number(div))
            if d == 0:
                raise ParseError("division by zero in angle", line, column)
            value /= d
        return -value if sign == "-" else value
    try:
        return float(parse_number(text))
    except ValidationError:
        raise ParseError(f"invalid angle {text!r}", line, column,
                         expected=("pi", "pi/2", "<number>")) from None


def _semantic(message, line, column):
    return ParseError(message, line, column)


def parse_sequence(text, rabi_frequency=None):
    """Parse a program into a :class:`SequenceSpec`.

    Parameters
    ----------
    text : str
    rabi_frequency : float, optional
        Default Rabi frequency (rad/s) for ``mode=detuned`` pulses.

    Raises
    ------
    ParseError
        Syntax errors (with line, column and the accepted tokens) and semantic
        errors (``C`` outside [0, 1], negative durations, missing Rabi
        frequency, duplicate ``detuning``).
    """
    if not isinstance(text, str):
        raise ValidationError("sequence text must be a string")
    elements, spans = [], []
    detuning, det_line = 0.0, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        code = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(code)]
        if not tokens:
            continue
        word, col0 = tokens[0]
        if word not in _KEYS:
            raise ParseError(f"unknown statement {word!r}", lineno, col0, expected=_KEYS)
        allowed = _KEYS[word]
        args = {}
        for tok, col in tokens[1:]:
            key, eq, value = tok.partition("=")
            if key not in allowed or key in args:
                remaining = [k for k in allowed if k not in args]
                what = "duplicate" if key in args else "unknown"
                raise ParseError(f"{what} argument {key!r} for {word!r}", lineno, col,
                                 expected=remaining)
            if not eq:
                raise ParseError(f"missing '=' after {key!r}", lineno, col + len(key),
                                 expected=("=",))
            if not value:
                raise ParseError(f"missing value for {key!r}", lineno, col + len(key) + 1,
                                 expected=("<value>",))
            args[key] = (value, col + len(key) + 1)
        missing = [k for k, req in allowed.items() if req and k not in args]
        if missing:
            raise ParseError(f"{word!r} needs {', '.join(missing)}", lineno, len(code.rstrip()) + 1,
                             expected=missing)
        el = _build(word, args, lineno, rabi_frequency)
        if word == "detuning":
            if det_line is not None:
                raise _semantic(f"detuning already set on line {det_line}", lineno, col0)
            detuning, det_line = el, lineno
            continue
        elements.append(el)
        spans.append((lineno, col0))
    return SequenceSpec(tuple(elements), detuning, tuple(spans))


def _quantity(value, col, lineno, dimension):
    try:
        return parse_quantity(value, dimension)
    except ValidationError as exc:
        raise ParseError(str(exc), lineno, col, expected=(f"<{dimension} with unit>",)) from None


def _build(word, args, lineno, default_rabi):
    if word == "wait":
        value, col = args["t"]
        if value == "scan":
            return Delay(None)
        t = _quantity(value, col, lineno, "time")
        if t < 0:
            raise _semantic(f"negative duration {value!r}", lineno, col)
        return Delay(t)
    if word == "dephase":
        value, col = args["C"]
        try:
            c = float(parse_number(value))
        except ValidationError:
            raise ParseError(f"invalid number {value!r}", lineno, col,
                             expected=("<number>",)) from None
        if not 0.0 <= c <= 1.0:
            raise _semantic(f"C must lie in [0, 1], got {value}", lineno, col)
        return Dephase(c)
    if word == "detuning":
        value, col = args["f"]
        return _quantity(value, col, lineno, "frequency")
    angle = parse_angle(args["angle"][0], lineno, args["angle"][1])
    phase = parse_angle(args["phase"][0], lineno, args["phase"][1]) if "phase" in args else 0.0
    mode = "ideal"
    if "mode" in args:
        mode, col = args["mode"]
        if mode not in ("ideal", "detuned"):
            raise ParseError(f"invalid pulse mode {mode!r}", lineno, col,
                             expected=("detuned", "ideal"))
    rabi = default_rabi
    if "rabi" in args:
        value, col = args["rabi"]
        rabi = _quantity(value, col, lineno, "frequency")
        if rabi <= 0:
            raise _semantic("rabi frequency must be positive", lineno, col)
    if mode == "detuned" and rabi is None:
        raise _semantic("detuned pulse needs rabi=<frequency>", lineno, None)
    return Pulse(PulseSpec(angle, rabi, phase, mode))


def _format_angle(x):
    for num, den, text in ((1, 1, "pi"), (1, 2, "pi/2"), (3, 2, "3*pi/2"), (2, 1, "2*pi")):
        if x == math.pi * num / den:
            return text
        if x == -(math.pi * num / den):
            return "-" + text
    return repr(float(x))


def format_sequence(spec):
    """Canonical program text; ``parse_sequence(format_sequence(s)) == s``."""
    lines = []
    if spec.microwave_detuning != 0.0:
        lines.append(f"detuning f={float(spec.microwave_detuning)!r}rad/s")
    for el in spec.elements:
        if isinstance(el, Delay):
            lines.append("wait t=scan" if el.scanned else f"wait t={float(el.duration)!r}s")
        elif isinstance(el, Dephase):
            lines.append(f"dephase C={float(el.C)!r}")
        else:
            p = el.spec
            parts = [f"pulse angle={_format_angle(p.nominal_angle)}"]
            if p.phase != 0.0:
                parts.append(f"phase={_format_angle(p.phase)}")
            if p.mode != "ideal":
                parts.append(f"mode={p.mode}")
            if p.rabi_frequency is not None:
                parts.append(f"rabi={float(p.rabi_frequency)!r}rad/s")
            lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def load_sequence(text, rabi_frequency=None):
    """:class:`SequenceSource` for ``text``."""
    return SequenceSource(text, parse_sequence(text, rabi_frequency))
