"""Rotating-frame pseudo spin-1/2 dynamics averaged over vibrational levels.

Basis order is ``(e, g)``; ``sigma_z = diag(1, -1)`` and the initial state is
``|g><g|``.  Every level ``n`` of a :class:`VibrationalSpectrum` sees the
detuning ``delta_ls(n) - delta_MW``.  Functions are vectorised over levels and
over sample times; ensemble averages use a fixed summation order over ``n``.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ValidationError
from .spectrum import ThermalDistribution, boltzmann_weights
from .validation import check_positive, check_times, check_unit_interval

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
RHO_G = np.array([[0, 0], [0, 1]], dtype=complex)
KET_G = np.array([0, 1], dtype=complex)

PULSE_MODES = ("ideal", "detuned")


def ensemble_weights(spectrum, temperature):
    """Level weights from a temperature, a :class:`ThermalDistribution` or an array."""
    if isinstance(temperature, ThermalDistribution):
        w = temperature.weights
    elif np.ndim(temperature) == 0:
        w = boltzmann_weights(spectrum, float(temperature)).weights
    else:
        w = np.asarray(temperature, dtype=float)
    if w.shape != spectrum.energies.shape:
        raise ValidationError("thermal weights do not match the spectrum size")
    return w


def _axis_matrix(phase):
    """``cos(phase) sigma_y - sin(phase) sigma_x``: the y axis turned by ``phase`` about z."""
    return np.cos(phase) * SIGMA_Y - np.sin(phase) * SIGMA_X


@dataclass(frozen=True)
class PulseSpec:
    """Rotation by ``nominal_angle`` about an equatorial axis.

    ``phase = 0`` is the y axis.  In ``detuned`` mode the pulse lasts
    ``nominal_angle / rabi_frequency`` and the level detuning acts during it.
    """

    nominal_angle: float
    rabi_frequency: Optional[float] = None
    phase: float = 0.0
    mode: str = "ideal"

    def __post_init__(self):
        if self.mode not in PULSE_MODES:
            raise ValidationError(f"pulse mode must be one of {PULSE_MODES}, got {self.mode!r}")
        if not np.isfinite(self.nominal_angle) or not np.isfinite(self.phase):
            raise ValidationError("pulse angle and phase must be finite")
        if self.mode == "detuned":
            if self.rabi_frequency is None:
                raise ValidationError("detuned pulses need a rabi_frequency")
            check_positive(self.rabi_frequency, "rabi_frequency")

    @property
    def duration(self):
        if self.rabi_frequency is None:
            return 0.0
        return abs(self.nominal_angle) / self.rabi_frequency


def pulse_operator(pulse, effective_detuning=0.0):
    """Unitary of one pulse.

    Parameters
    ----------
    pulse : PulseSpec
    effective_detuning : float or array_like
        ``delta_ls(n) - delta_MW`` (rad/s).  Ignored in ideal mode except for
        setting the output shape.

    Returns
    -------
    numpy.ndarray
        Shape ``(..., 2, 2)`` following the shape of ``effective_detuning``.
    """
    delta = np.asarray(effective_detuning, dtype=float)
    axis = _axis_matrix(pulse.phase)
    theta = pulse.nominal_angle
    if pulse.mode == "ideal":
        u = np.cos(theta / 2) * IDENTITY - 1j * np.sin(theta / 2) * axis
        return np.broadcast_to(u, delta.shape + (2, 2)).copy()
    omega = pulse.rabi_frequency
    tp = pulse.duration
    omega_eff = np.sqrt(omega**2 + delta**2)
    half = omega_eff * tp / 2
    # generator direction; omega_eff > 0 since omega > 0
    nz = (delta / omega_eff)[..., None, None]
    nt = np.sign(theta) * (omega / omega_eff)[..., None, None]
    gen = nz * SIGMA_Z + nt * axis
    return np.cos(half)[..., None, None] * IDENTITY - 1j * np.sin(half)[..., None, None] * gen


def free_evolution(detuning, t):
    """``exp(-i detuning t sigma_z / 2)`` broadcast over detunings and times."""
    phase = np.multiply.outer(np.asarray(t, dtype=float), np.asarray(detuning, dtype=float)) / 2
    out = np.zeros(phase.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(-1j * phase)
    out[..., 1, 1] = np.exp(1j * phase)
    return out


def apply_dephasing(rho, C):
    """Multiply the spin coherences by ``C`` (populations untouched)."""
    C = check_unit_interval(C, "C")
    out = np.array(rho, dtype=complex, copy=True)
    out[..., 0, 1] *= C
    out[..., 1, 0] *= C
    return out


def conjugate(u, rho):
    """``u rho u^dagger`` on stacks."""
    return u @ rho @ np.conj(np.swapaxes(u, -1, -2))


# ---------------------------------------------------------------- sequences


@dataclass(frozen=True)
class Pulse:
    spec: PulseSpec


@dataclass(frozen=True)
class Delay:
    """Free evolution; ``duration=None`` marks a scanned delay."""

    duration: Optional[float]

    def __post_init__(self):
        if self.duration is not None and not (np.isfinite(self.duration) and self.duration >= 0):
            raise ValidationError(f"delay duration must be >= 0, got {self.duration!r}")

    @property
    def scanned(self):
        return self.duration is None


@dataclass(frozen=True)
class Dephase:
    C: float

    def __post_init__(self):
        check_unit_interval(self.C, "C")


Element = Union[Pulse, Delay, Dephase]


@dataclass(frozen=True)
class SequenceSpec:
    """Ordered pulses, delays and dephasing steps at a fixed MW detuning."""

    elements: Tuple[Element, ...] = ()
    microwave_detuning: float = 0.0
    source_spans: Tuple[Tuple[int, int], ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for el in self.elements:
            if not isinstance(el, (Pulse, Delay, Dephase)):
                raise ValidationError(f"invalid sequence element {el!r}")
        if not np.isfinite(self.microwave_detuning):
            raise ValidationError("microwave_detuning must be finite")

    @property
    def pulses(self):
        return [el.spec for el in self.elements if isinstance(el, Pulse)]

    @property
    def has_scan(self):
        return any(isinstance(el, Delay) and el.scanned for el in self.elements)

    @property
    def dephasing_factor(self):
        cs = [el.C for el in self.elements if isinstance(el, Dephase)]
        return cs[-1] if cs else None

    def total_delay(self, scan_value=0.0):
        return sum(scan_value if el.scanned else el.duration
                   for el in self.elements if isinstance(el, Delay))

    @property
    def t_echo(self):
        """Twice the free time before the first pi pulse, or ``None``."""
        elapsed = 0.0
        for el in self.elements:
            if isinstance(el, Delay):
                if el.scanned:
                    return None
                elapsed += el.duration
            elif isinstance(el, Pulse) and np.isclose(abs(el.spec.nominal_angle), np.pi):
                return 2 * elapsed
        return None

    @property
    def final_phase(self):
        p = self.pulses
        return p[-1].phase if p else 0.0


def evaluate_sequence(seq, spectrum, temperature, times=None):
    """Excited-state probability after ``seq`` starting from ``|g>``.

    Parameters
    ----------
    seq : SequenceSpec
    spectrum : VibrationalSpectrum
    temperature : float or ThermalDistribution
    times : array_like, optional
        Values substituted into every scanned delay.  Required if the
        sequence contains one.

    Returns
    -------
    float or numpy.ndarray
        Scalar without ``times``, otherwise one value per entry.
    """
    w = ensemble_weights(spectrum, temperature)
    delta = spectrum.light_shifts - seq.microwave_detuning
    if seq.has_scan and times is None:
        raise ValidationError("sequence has a scanned delay but no times were given")
    scalar = times is None
    t = np.atleast_1d(check_times(0.0 if scalar else times, strictly_increasing=False))
    rho = np.broadcast_to(RHO_G, (t.size, delta.size, 2, 2)).copy()
    for el in seq.elements:
        if isinstance(el, Pulse):
            rho = conjugate(pulse_operator(el.spec, delta), rho)
        elif isinstance(el, Delay):
            d = t if el.scanned else np.full(t.size, el.duration)
            rho = conjugate(free_evolution(delta, d), rho)
        else:
            rho = apply_dephasing(rho, el.C)
    p = rho[..., 0, 0].real @ w
    return float(p[0]) if scalar else p


# ------------------------------------------------------- closed-form signals


def _pulse(theta, rabi_frequency, mode, phase=0.0):
    return PulseSpec(theta, rabi_frequency if mode == "detuned" else None, phase, mode)


def rabi_probability(rabi_frequency, detuning_mw, pulse_durations, spectrum, temperature,
                     damping_rate=0.0):
    """Thermal average of the detuned Rabi formula with damping toward 1/2.

    ``p_n = (W^2 / W_eff^2) sin^2(W_eff t / 2)``, ``W_eff^2 = W^2 + d_n^2``, and
    ``p -> 1/2 + (p - 1/2) exp(-damping_rate t)``.
    """
    t = check_times(pulse_durations, "pulse_durations", strictly_increasing=False)
    check_positive(rabi_frequency, "rabi_frequency")
    check_positive(damping_rate, "damping_rate", strict=False)
    w = ensemble_weights(spectrum, temperature)
    delta = spectrum.light_shifts - detuning_mw
    omega_eff = np.sqrt(rabi_frequency**2 + delta**2)
    pn = (rabi_frequency / omega_eff) ** 2 * np.sin(np.multiply.outer(t, omega_eff) / 2) ** 2
    p = pn @ w
    return 0.5 + (p - 0.5) * np.exp(-damping_rate * t)


def ramsey_probability(rabi_frequency, detuning_mw, t_d, spectrum, temperature,
                       pulse_mode="ideal", phase=0.0):
    """Two pi/2 pulses separated by free evolution ``t_d``, thermally averaged.

    ``phase`` turns the axis of the second pulse.
    """
    t = check_times(t_d, "t_d", strictly_increasing=False)
    w = ensemble_weights(spectrum, temperature)
    delta = spectrum.light_shifts - detuning_mw
    r1 = pulse_operator(_pulse(np.pi / 2, rabi_frequency, pulse_mode), delta)
    r2 = pulse_operator(_pulse(np.pi / 2, rabi_frequency, pulse_mode, phase), delta)
    psi = r1 @ KET_G                                  # (N, 2)
    f = free_evolution(delta, t)                      # (K, N, 2, 2)
    psi = np.einsum("knij,nj->kni", f, psi)
    amp_e = np.einsum("nj,knj->kn", r2[:, 0, :], psi)
    return np.abs(amp_e) ** 2 @ w


def echo_probability(rabi_frequency, detuning_mw, t_d, t_echo, C, phase, spectrum, temperature,
                     pulse_mode="ideal"):
    """Spin-echo signal with a constant coherence factor ``C``.

    Sequence: pi/2, free(t_echo/2), pi, free(t_d - t_echo/2), dephasing ``C``,
    pi/2 with axis phase ``phase``.
    """
    t = check_times(t_d, "t_d", strictly_increasing=False)
    C = check_unit_interval(C, "C")
    if t_echo < 0 or np.any(t < t_echo / 2):
        raise ValidationError("echo timing requires t_d >= t_echo / 2 >= 0")
    w = ensemble_weights(spectrum, temperature)
    delta = spectrum.light_shifts - detuning_mw
    r1 = pulse_operator(_pulse(np.pi / 2, rabi_frequency, pulse_mode), delta)
    rpi = pulse_operator(_pulse(np.pi, rabi_frequency, pulse_mode), delta)
    r2 = pulse_operator(_pulse(np.pi / 2, rabi_frequency, pulse_mode, phase), delta)
    first = free_evolution(delta, t_echo / 2) @ r1   # (N, 2, 2)
    psi = (rpi @ first) @ KET_G                      # (N, 2)
    psi = np.einsum("knij,nj->kni", free_evolution(delta, t - t_echo / 2), psi)
    return _final_pulse_population(psi, r2, C) @ w


def _final_pulse_population(psi, r2, C):
    """``<e| R D_C(|psi><psi|) R^dagger |e>`` for pure pre-pulse states."""
    a, b = r2[:, 0, 0], r2[:, 0, 1]                   # (N,)
    pe, pg = np.abs(psi[..., 0]) ** 2, np.abs(psi[..., 1]) ** 2
    coh = psi[..., 0] * np.conj(psi[..., 1])          # rho_eg
    return (np.abs(a) ** 2 * pe + np.abs(b) ** 2 * pg
            + 2 * C * np.real(a * np.conj(b) * coh))


def ramsey_sequence(t_d, detuning_mw, rabi_frequency=None, pulse_mode="ideal", phase=0.0):
    """:class:`SequenceSpec` for a Ramsey experiment (``t_d=None`` scans)."""
    p1 = Pulse(_pulse(np.pi / 2, rabi_frequency, pulse_mode))
    p2 = Pulse(_pulse(np.pi / 2, rabi_frequency, pulse_mode, phase))
    return SequenceSpec((p1, Delay(t_d), p2), detuning_mw)


def echo_sequence(t_d, t_echo, detuning_mw, C=1.0, phase=0.0, rabi_frequency=None,
                  pulse_mode="ideal"):
    """:class:`SequenceSpec` for a spin echo; ``t_d=None`` scans the second arm."""
    second = None if t_d is None else t_d - t_echo / 2
    return SequenceSpec((
        Pulse(_pulse(np.pi / 2, rabi_frequency, pulse_mode)),
        Delay(t_echo / 2),
        Pulse(_pulse(np.pi, rabi_frequency, pulse_mode)),
        Delay(second),
        Dephase(C),
        Pulse(_pulse(np.pi / 2, rabi_frequency, pulse_mode, phase)),
    ), detuning_mw)


# ---------------------------------------------------------------- envelopes


def ramsey_envelope(spectrum, temperature, t):
    """Normalised contrast ``|sum_n P_n exp(-i delta_ls(n) t)|`` for ideal pulses.

    Independent of the MW detuning, which only sets the fringe frequency.
    """
    w = ensemble_weights(spectrum, temperature)
    t = np.asarray(t, dtype=float)
    return np.abs(np.exp(-1j * np.multiply.outer(t, spectrum.light_shifts)) @ w)


def t2_star(spectrum, temperature, level=0.5, t_max=None):
    """First time at which :func:`ramsey_envelope` falls to ``level``.

    Raises
    ------
    ValidationError
        If the envelope never drops to ``level`` before ``t_max``.
    """
    spread = np.ptp(spectrum.light_shifts)
    if spread == 0:
        raise ValidationError("uniform light shift: the envelope does not decay")
    if t_max is None:
        t_max = 200.0 / spread
    t = np.linspace(0.0, t_max, 4001)
    env = ramsey_envelope(spectrum, temperature, t)
    below = np.flatnonzero(env <= level)
    if below.size == 0:
        raise ValidationError("Ramsey envelope does not reach the requested level")
    i = below[0]
    return brentq(lambda s: ramsey_envelope(spectrum, temperature, s) - level,
                  t[i - 1], t[i], xtol=1e-15, rtol=1e-13)


def envelope_from_samples(t, p):
    """Fringe half-amplitude from sampled data via interpolated extrema.

    Local maxima and minima of ``p`` are located (with parabolic refinement)
    and linearly interpolated onto ``t``; the envelope is half their
    difference.  Edges are held at the nearest extremum.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    tmax, pmax = _extrema(t, p, +1)
    tmin, pmin = _extrema(t, p, -1)
    if tmax.size == 0 or tmin.size == 0:
        raise ValidationError("signal has no fringes to build an envelope from")
    upper = np.interp(t, tmax, pmax)
    lower = np.interp(t, tmin, pmin)
    return 0.5 * (upper - lower)


def _extrema(t, p, sign):
    s = sign * p
    idx = [0] if s[0] >= s[1] else []
    idx += list(np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:])) + 1)
    if s[-1] > s[-2]:
        idx.append(len(s) - 1)
    tt, pp = [], []
    for i in idx:
        if 0 < i < len(s) - 1:
            y0, y1, y2 = s[i - 1], s[i], s[i + 1]
            denom = y0 - 2 * y1 + y2
            off = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            h = t[i + 1] - t[i]
            tt.append(t[i] + off * h)
            pp.append(sign * (y1 - 0.25 * (y0 - y2) * off))
        else:
            tt.append(t[i])
            pp.append(p[i])
    return np.asarray(tt), np.asarray(pp)


def half_time_from_samples(t, p):
    """First time the sampled fringe envelope halves relative to its start."""
    env = envelope_from_samples(t, p)
    target = 0.5 * env[0]
    below = np.flatnonzero(env <= target)
    if below.size == 0:
        raise ValidationError("envelope does not halve within the sampled range")
    i = below[0]
    return float(np.interp(target, [env[i], env[i - 1]], [t[i], t[i - 1]]))
