"""Spin-phonon master equation with symmetric heating and echo-decay extraction.

The joint density matrix has dimension ``2 (n_max + 1)`` with basis index
``s * (n_max + 1) + n`` for spin ``s`` (0 = e, 1 = g) and phonon number ``n``.
The generator is

    L rho = -i [H0, rho] + kappa sum_{L in (a, a^dagger)} (L rho L^dagger - {L^dagger L, rho} / 2),
    H0 = (delta_ls(n) - delta_MW) sigma_z / 2,

with truncated ladder operators, so ``a^dagger |n_max> = 0`` and the trace is
preserved exactly.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .integrate import DormandPrince
from .spectrum import boltzmann_weights
from .spin import PulseSpec, echo_probability, pulse_operator
from .units import HBAR, K_B
from .validation import check_positive, check_temperature, check_times


@dataclass(frozen=True, eq=False)
class HeatingModel:
    """Heating rate ``kappa`` (1/s) acting on the levels of ``spectrum`` up to ``n_max``."""

    kappa: float
    spectrum: object
    n_max: int = 30
    rtol: float = 1e-9
    atol: float = 1e-12

    def __post_init__(self):
        check_positive(self.kappa, "kappa", strict=False)
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError("n_max must be an integer >= 1")
        if self.spectrum.n_max < self.n_max:
            raise ValidationError(
                f"spectrum has {self.spectrum.n_max + 1} levels, need n_max + 1 = {self.n_max + 1}")
        check_positive(self.rtol, "rtol")
        check_positive(self.atol, "atol")

    @property
    def levels(self):
        return self.n_max + 1

    @property
    def dimension(self):
        return 2 * self.levels

    @property
    def truncated_spectrum(self):
        return self.spectrum.truncate(self.n_max)

    def heating_rate(self):
        """``kappa (E_1 - E_0) / k_B`` in K/s."""
        return self.kappa * HBAR * self.spectrum.level_spacing / K_B


class Liouvillian:
    """Action ``rho -> L rho`` built from diagonal and single-shift terms.

    No superoperator matrix is formed; :meth:`matrix` builds one for tests.
    """

    def __init__(self, model, detuning_mw):
        self.model = model
        self.detuning_mw = float(detuning_mw)
        N = model.levels
        delta = model.spectrum.light_shifts[:N] - self.detuning_mw
        self.h = np.stack([delta / 2, -delta / 2])           # (2, N)
        hflat = self.h.reshape(-1)
        self._commutator = -1j * (hflat[:, None] - hflat[None, :])
        n = np.arange(N, dtype=float)
        # {a a^dagger + a^dagger a}, with a a^dagger |n_max> = 0
        aad = np.append(n[1:], 0.0)
        k = np.tile(aad + n, 2)
        self._anti = -0.5 * model.kappa * (k[:, None] + k[None, :])
        sq = np.sqrt(n[1:])
        # sqrt(n) sqrt(m) for n, m >= 1, broadcast over the spin indices
        self._shift = model.kappa * np.multiply.outer(sq, sq)[None, :, None, :]
        self.N = N

    def __call__(self, rho):
        N = self.N
        out = (self._commutator + self._anti) * rho
        if self.model.kappa:
            R = rho.reshape(2, N, 2, N)
            O = out.reshape(2, N, 2, N)
            # a^dagger rho a : element (n, m) <- sqrt(n m) rho(n-1, m-1)
            O[:, 1:, :, 1:] += self._shift * R[:, :-1, :, :-1]
            # a rho a^dagger : element (n, m) <- sqrt((n+1)(m+1)) rho(n+1, m+1)
            O[:, :-1, :, :-1] += self._shift * R[:, 1:, :, 1:]
        return out

    def hamiltonian(self):
        return np.diag(self.h.reshape(-1)).astype(complex)

    def jump_operators(self):
        N = self.N
        a = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)
        eye = np.eye(2)
        return np.kron(eye, a), np.kron(eye, a.T)

    def matrix(self):
        """Explicit superoperator acting on row-major ``rho.reshape(-1)``."""
        D = 2 * self.N
        eye = np.eye(D)
        H = self.hamiltonian()
        M = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
        for L in self.jump_operators():
            LdL = L.conj().T @ L
            M = M + self.model.kappa * (np.kron(L, L.conj())
                                        - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
        return M


def build_liouvillian(model, detuning_mw):
    return Liouvillian(model, detuning_mw)


def _hermitize(rho):
    return 0.5 * (rho + rho.conj().T)


def propagate(rho0, liouvillian, t, rtol=None, atol=None):
    """Integrate ``d rho / dt = L rho`` from 0 to ``t`` (or each entry of an array).

    Returns
    -------
    ndarray
        The final state, or a stack ``(len(t), D, D)`` when ``t`` is an array.

    Raises
    ------
    IntegrationError
        On step-size underflow, carrying the time reached.
    """
    scalar = np.ndim(t) == 0
    times = check_times(np.atleast_1d(t), "t", strictly_increasing=False)
    if np.any(np.diff(times) < 0):
        raise ValidationError("propagation times must be ascending")
    m = liouvillian.model
    solver = DormandPrince(liouvillian, rtol=m.rtol if rtol is None else rtol,
                           atol=m.atol if atol is None else atol, project=_hermitize)
    states = np.asarray(solver.integrate(np.asarray(rho0, dtype=complex), times))
    return states[0] if scalar else states


def thermal_joint_state(weights):
    """``|g><g| (x) sum_n P_n |n><n|``."""
    w = np.asarray(weights, dtype=float)
    N = w.size
    rho = np.zeros((2 * N, 2 * N), dtype=complex)
    idx = N + np.arange(N)
    rho[idx, idx] = w
    return rho


def initial_state(model, T0):
    """Ground spin state times the Boltzmann state of the truncated phonon space."""
    weights = boltzmann_weights(model.truncated_spectrum, check_temperature(T0)).weights
    return thermal_joint_state(weights)


def mean_phonon_number(rho, levels):
    rho = np.asarray(rho)
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1)).reshape(rho.shape[:-2] + (2, levels))
    return diag.sum(axis=-2) @ np.arange(levels)


def excited_population(rho, levels):
    return np.real(np.trace(np.asarray(rho)[..., :levels, :levels], axis1=-2, axis2=-1))


def joint_pulse(pulse, model, detuning_mw):
    """Spin pulse as a joint-space unitary: ``U (x) 1`` or per-level blocks."""
    N = model.levels
    delta = model.spectrum.light_shifts[:N] - detuning_mw
    u = pulse_operator(pulse, delta)                # (N, 2, 2)
    U = np.zeros((2 * N, 2 * N), dtype=complex)
    n = np.arange(N)
    for s in range(2):
        for s2 in range(2):
            U[s * N + n, s2 * N + n] = u[:, s, s2]
    return U


def _echo_pulses(rabi_frequency, pulse_mode, phase):
    omega = rabi_frequency if pulse_mode == "detuned" else None
    return (PulseSpec(np.pi / 2, omega, 0.0, pulse_mode), PulseSpec(np.pi, omega, 0.0, pulse_mode),
            PulseSpec(np.pi / 2, omega, phase, pulse_mode))


def phonon_growth(model, T0, times, detuning_mw=0.0):
    """``tr(n rho(t))`` under heating, starting from the thermal product state."""
    L = build_liouvillian(model, detuning_mw)
    states = propagate(initial_state(model, T0), L, np.asarray(times, dtype=float))
    return mean_phonon_number(states, model.levels)


def echo_under_heating(model, rabi_frequency, detuning_mw, T0, t_echo, t_d, pulse_mode="ideal",
                       phase=0.0, rtol=None, atol=None):
    """Spin-echo signal ``p_e(t_d)`` from the joint master equation.

    Pulses are instantaneous.  Heating acts during both free arms.

    Parameters
    ----------
    t_d : array_like
        Times of the final pulse after the first, each ``>= t_echo / 2``.

    Returns
    -------
    ndarray
    """
    t_d = check_times(t_d, "t_d", strictly_increasing=False)
    if t_echo < 0 or np.any(t_d < t_echo / 2):
        raise ValidationError("echo timing requires t_d >= t_echo / 2 >= 0")
    order = np.argsort(t_d, kind="stable")
    L = build_liouvillian(model, detuning_mw)
    p1, ppi, p2 = (joint_pulse(p, model, detuning_mw)
                   for p in _echo_pulses(rabi_frequency, pulse_mode, phase))
    rho = p1 @ initial_state(model, T0) @ p1.conj().T
    kw = dict(rtol=rtol, atol=atol)
    rho = propagate(rho, L, t_echo / 2, **kw)
    rho = ppi @ rho @ ppi.conj().T
    states = propagate(rho, L, t_d[order] - t_echo / 2, **kw)
    final = p2 @ states @ p2.conj().T
    p = np.empty(t_d.size)
    p[order] = excited_population(final, model.levels)
    return p


# ------------------------------------------------------- coherence decay


def fringe_amplitude(t_d, p, method="peak_to_trough", frequency=None, center=None):
    """Fringe amplitude of a sampled echo signal.

    ``peak_to_trough``: half the range of ``p`` with parabolic refinement of
    the extreme samples.  ``sinusoid``: linear least-squares fit of
    ``a + b cos(w (t - center)) + c sin(w (t - center))`` at the known mean
    fringe angular frequency ``frequency``; returns ``sqrt(b^2 + c^2)``.
    """
    t_d = np.asarray(t_d, dtype=float)
    p = np.asarray(p, dtype=float)
    if method == "peak_to_trough":
        return 0.5 * (_refined_extreme(p, +1) - _refined_extreme(p, -1))
    if method == "sinusoid":
        if frequency is None:
            raise ValidationError("sinusoid estimator needs the fringe frequency")
        x = t_d - (0.0 if center is None else center)
        basis = np.column_stack([np.ones_like(x), np.cos(frequency * x), np.sin(frequency * x)])
        coef, *_ = np.linalg.lstsq(basis, p, rcond=None)
        return float(np.hypot(coef[1], coef[2]))
    raise ValidationError(f"unknown fringe estimator {method!r}")


def _refined_extreme(p, sign):
    s = sign * p
    i = int(np.argmax(s))
    if 0 < i < s.size - 1:
        y0, y1, y2 = s[i - 1], s[i], s[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            y1 = y1 - 0.125 * (y0 - y2) ** 2 / denom
    return sign * y1


@dataclass(frozen=True, eq=False)
class CoherenceDecayCurve:
    t_echo: np.ndarray
    C_heat: np.ndarray
    T2: Optional[float]
    monotone: bool
    method: str = "peak_to_trough"

    @property
    def quality(self):
        if self.T2 is None:
            return "no-crossing"
        return "ok" if self.monotone else "non-monotone"

    def rows(self):
        """``(t_echo_ms, C_heat)`` pairs."""
        return [(float(t) * 1e3, float(c)) for t, c in zip(self.t_echo, self.C_heat)]


def hwhm(t, c, maximum=1.0):
    """Half width at half maximum of a decay curve sampled on ascending ``t``.

    Linear interpolation between the bracketing samples; ``None`` if the
    curve never reaches ``maximum / 2``.
    """
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    half = 0.5 * maximum
    below = np.flatnonzero(c <= half)
    if below.size == 0:
        return None
    i = below[0]
    if i == 0:
        return float(t[0])
    return float(t[i - 1] + (half - c[i - 1]) * (t[i] - t[i - 1]) / (c[i] - c[i - 1]))


def echo_window(t_echo, window=0.5e-3, step=1e-6):
    """Sample times ``|t_d - t_echo| <= window`` with ``t_d >= t_echo / 2``."""
    lo = max(t_echo / 2, t_echo - window)
    k_lo = int(np.ceil((lo - t_echo) / step - 1e-9))
    k_hi = int(np.floor(window / step + 1e-9))
    return t_echo + step * np.arange(k_lo, k_hi + 1)


def extract_C_heat(model, rabi_frequency, detuning_mw, T0, t_echo_grid, window=0.5e-3,
                   step=1e-6, method="peak_to_trough", pulse_mode="ideal", n_jobs=1):
    """Predicted echo coherence factor ``C_heat(t_echo)`` and its HWHM ``T2``.

    For each ``t_echo`` the echo signal with heating is compared with the
    heating-free closed-form signal on the same sample window; ``C_heat`` is
    the ratio of their fringe amplitudes.

    Parameters
    ----------
    t_echo_grid : array_like
        Ascending echo times (s).
    window : float
        Half-width of the measurement window around ``t_echo``.
    step : float
        ``t_d`` sample spacing.
    n_jobs : int
        Worker processes for independent ``t_echo`` points (joblib).

    Returns
    -------
    CoherenceDecayCurve
    """
    grid = check_times(t_echo_grid, "t_echo_grid")
    spec = model.truncated_spectrum
    weights = boltzmann_weights(spec, check_temperature(T0))
    mean_freq = float(weights.weights @ spec.light_shifts) - detuning_mw

    def one(te):
        td = echo_window(te, window, step)
        ref = echo_probability(rabi_frequency, detuning_mw, td, te, 1.0, 0.0, spec, weights,
                               pulse_mode)
        if model.kappa == 0:
            return 1.0
        hot = echo_under_heating(model, rabi_frequency, detuning_mw, T0, te, td, pulse_mode)
        a_ref = fringe_amplitude(td, ref, method, mean_freq, te)
        a_hot = fringe_amplitude(td, hot, method, mean_freq, te)
        return a_hot / a_ref

    if n_jobs == 1:
        values = [one(te) for te in grid]
    else:
        from joblib import Parallel, delayed
        values = Parallel(n_jobs=n_jobs)(delayed(one)(te) for te in grid)
    c = np.asarray(values, dtype=float)
    monotone = bool(np.all(np.diff(c) <= 1e-9))
    T2 = hwhm(np.r_[0.0, grid], np.r_[1.0, c]) if grid[0] > 0 else hwhm(grid, c)
    return CoherenceDecayCurve(grid, c, T2, monotone, method)


def superoperator_propagator(liouvillian, t):
    """``expm(M t)`` of the explicit superoperator; a reference for small systems."""
    from scipy.linalg import expm
    return expm(liouvillian.matrix() * t)
