import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import KHZ, TWO_PI
from trapcoherence.dsl import format_sequence, load_sequence, parse_angle, parse_sequence
from trapcoherence.errors import ParseError, ValidationError
from trapcoherence.spin import (Delay, Dephase, Pulse, PulseSpec, SequenceSpec,
                                evaluate_sequence, ramsey_probability)

RAMSEY = "pulse angle=pi/2\nwait t=0.3ms\npulse angle=pi/2"
ECHO = ("pulse angle=pi/2\nwait t=1ms\npulse angle=pi\nwait t=1ms\ndephase C=0.8\n"
        "pulse angle=pi/2 phase=0.1")


def test_ramsey_program():
    seq = parse_sequence(RAMSEY)
    assert seq.elements == (Pulse(PulseSpec(math.pi / 2)), Delay(0.3e-3),
                            Pulse(PulseSpec(math.pi / 2)))
    assert seq.total_delay() == pytest.approx(0.3e-3, rel=1e-15)
    assert seq.t_echo is None


def test_echo_program():
    seq = parse_sequence(ECHO)
    kinds = [type(el) for el in seq.elements]
    assert kinds == [Pulse, Delay, Pulse, Delay, Dephase, Pulse]
    assert seq.t_echo == pytest.approx(2e-3, rel=1e-15)
    assert seq.dephasing_factor == 0.8
    assert seq.final_phase == 0.1
    assert seq.pulses[1].nominal_angle == math.pi


def test_negative_wait_is_semantic_error():
    with pytest.raises(ParseError) as info:
        parse_sequence("wait t=-1ms")
    assert info.value.line == 1 and info.value.column == 8
    assert "negative duration" in str(info.value)


def test_spans_trace_every_element():
    text = "# header\n\npulse angle=pi/2   # first\n  wait t=10us\ndetuning f=-5kHz\npulse angle=pi\n"
    src = load_sequence(text)
    assert src.spans == ((3, 1), (4, 3), (6, 1))
    assert len(src.spans) == len(src.spec.elements)
    assert src.spec.microwave_detuning == -5000.0 * TWO_PI


@pytest.mark.parametrize("text, line, column, expected", [
    ("pulse angle=pi\nflip angle=pi", 2, 1, {"pulse", "wait", "dephase", "detuning"}),
    ("pulse phase=0.1", 1, 16, {"angle"}),
    ("pulse angle=pi colour=red", 1, 16, {"phase", "mode", "rabi"}),
    ("wait t", 1, 7, {"="}),
    ("wait t=", 1, 8, {"<value>"}),
    ("wait t=5", 1, 8, {"<time with unit>"}),
    ("pulse angle=pi mode=sloppy", 1, 21, {"detuned", "ideal"}),
    ("pulse angle=half", 1, 13, {"pi", "pi/2", "<number>"}),
])
def test_syntax_errors_locate_and_suggest(text, line, column, expected):
    with pytest.raises(ParseError) as info:
        parse_sequence(text)
    assert (info.value.line, info.value.column) == (line, column)
    assert set(info.value.expected) == expected


@pytest.mark.parametrize("text", [
    "dephase C=1.2",
    "dephase C=-0.1",
    "detuning f=1kHz\ndetuning f=2kHz",
    "pulse angle=pi mode=detuned",
    "pulse angle=pi/0",
    "pulse angle=pi rabi=-3kHz",
])
def test_semantic_errors(text):
    with pytest.raises(ParseError):
        parse_sequence(text)


def test_units_mandatory():
    with pytest.raises(ParseError):
        parse_sequence("detuning f=-5")


def test_non_string_rejected():
    with pytest.raises(ValidationError):
        parse_sequence(b"wait t=1ms")


@pytest.mark.parametrize("text, value", [
    ("pi", math.pi), ("pi/2", math.pi / 2), ("-pi/2", -math.pi / 2),
    ("3*pi/2", 3 * math.pi / 2), ("2*pi", 2 * math.pi), ("1.25", 1.25), ("-0.5", -0.5),
])
def test_angles(text, value):
    assert parse_angle(text) == value


def test_default_rabi_for_detuned_pulses():
    seq = parse_sequence("pulse angle=pi/2 mode=detuned", rabi_frequency=17 * KHZ)
    assert seq.pulses[0].rabi_frequency == 17 * KHZ
    seq = parse_sequence("pulse angle=pi/2 mode=detuned rabi=20kHz", rabi_frequency=17 * KHZ)
    assert seq.pulses[0].rabi_frequency == 20000.0 * TWO_PI


def test_scan_matches_closed_form(spectrum):
    text = "detuning f=-5kHz\npulse angle=pi/2\nwait t=scan\npulse angle=pi/2"
    t = np.linspace(0, 1.5e-3, 61)
    p = evaluate_sequence(parse_sequence(text), spectrum, 71e-6, t)
    ref = ramsey_probability(17 * KHZ, -5 * KHZ, t, spectrum, 71e-6, "ideal")
    assert np.max(np.abs(p - ref)) < 1e-12


def test_round_trip_examples():
    for text in (RAMSEY, ECHO, "detuning f=3.3kHz\nwait t=scan\npulse angle=1.0 mode=detuned "
                              "rabi=17kHz phase=-pi/2", ""):
        seq = parse_sequence(text)
        again = parse_sequence(format_sequence(seq))
        assert again == seq
        assert format_sequence(again) == format_sequence(seq)


_finite = dict(allow_nan=False, allow_infinity=False)
_angles = st.one_of(st.sampled_from([math.pi, math.pi / 2, -math.pi / 2, 3 * math.pi / 2]),
                    st.floats(-10, 10, **_finite))
_pulses = st.builds(
    lambda a, ph, rabi: Pulse(PulseSpec(a, rabi, ph, "ideal" if rabi is None else "detuned")),
    _angles, st.floats(-math.pi, math.pi, **_finite),
    st.one_of(st.none(), st.floats(1.0, 1e7, **_finite)))
_elements = st.one_of(
    _pulses,
    st.builds(Delay, st.one_of(st.none(), st.floats(0, 1.0, **_finite))),
    st.builds(Dephase, st.floats(0, 1, **_finite)))


@settings(max_examples=200, deadline=None)
@given(st.lists(_elements, max_size=8), st.floats(-1e6, 1e6, **_finite))
def test_round_trip_property(elements, detuning):
    seq = SequenceSpec(tuple(elements), detuning)
    assert parse_sequence(format_sequence(seq)) == seq
