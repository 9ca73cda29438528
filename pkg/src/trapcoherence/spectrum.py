"""Radial trap potential, vibrational eigenstates and differential light shifts.

The radial potential of a two-colour evanescent-field trap is modelled as

    U(x) = A_b exp(-2x/L_b) - A_r exp(-2x/L_r),

with ``x`` the distance from the fiber surface.  The repulsive blue term decays
faster than the attractive red term, which produces a single minimum.  The
vibrational levels follow from a second-order finite-difference
discretisation of the 1D Schroedinger equation with hard walls at the surface
and at ``extent_factor`` times the minimum distance.

All energies leave this module as angular frequencies (rad/s).
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import EigenSolverError, NoSolutionError, ValidationError
from .units import CESIUM_MASS, HBAR, K_B
from .validation import check_positive, check_temperature

#: Decay lengths (blue, red) of the default trap, in metres.
DEFAULT_DECAY_LENGTHS = (200e-9, 450e-9)
DEFAULT_TRAP_FREQUENCY = 2 * np.pi * 200e3
DEFAULT_MINIMUM_POSITION = 200e-9


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RadialPotentialModel:
    """Double-exponential radial potential.

    Attributes
    ----------
    blue_amplitude, red_amplitude : float
        Amplitudes in J; both positive.  The red term enters with a minus sign.
    blue_decay_length, red_decay_length : float
        Field decay lengths in m; the intensity decays as ``exp(-2x/L)``.
    surface_offset : float
        Radial coordinate of the fiber surface (m).  Methods taking ``r`` use
        ``x = r - surface_offset``.
    atom_mass : float
        kg.
    """

    blue_amplitude: float
    red_amplitude: float
    blue_decay_length: float
    red_decay_length: float
    surface_offset: float = 0.0
    atom_mass: float = CESIUM_MASS

    def __post_init__(self):
        for name in ("blue_amplitude", "red_amplitude", "blue_decay_length",
                     "red_decay_length", "atom_mass"):
            check_positive(getattr(self, name), name)
        if not self.blue_decay_length < self.red_decay_length:
            raise ValidationError("blue_decay_length must be shorter than red_decay_length")
        x0 = self.minimum_position
        if not x0 > 0:
            raise ValidationError("potential has no minimum outside the fiber surface")

    # signed components, U = blue(r) + red(r)
    def blue(self, r):
        x = np.asarray(r, dtype=float) - self.surface_offset
        return self.blue_amplitude * np.exp(-2 * x / self.blue_decay_length)

    def red(self, r):
        x = np.asarray(r, dtype=float) - self.surface_offset
        return -self.red_amplitude * np.exp(-2 * x / self.red_decay_length)

    def __call__(self, r):
        return self.blue(r) + self.red(r)

    def derivative(self, r, order=1):
        x = np.asarray(r, dtype=float) - self.surface_offset
        kb, kr = -2 / self.blue_decay_length, -2 / self.red_decay_length
        return (self.blue_amplitude * kb**order * np.exp(kb * x)
                - self.red_amplitude * kr**order * np.exp(kr * x))

    @property
    def minimum_position(self):
        """Distance of the (unique) minimum from the surface, in m."""
        lb, lr = self.blue_decay_length, self.red_decay_length
        ratio = (self.blue_amplitude * lr) / (self.red_amplitude * lb)
        return np.log(ratio) / (2 * (1 / lb - 1 / lr))

    @property
    def minimum_value(self):
        return float(self(self.minimum_position + self.surface_offset))

    @property
    def trap_frequency(self):
        """Harmonic angular frequency at the minimum (rad/s)."""
        curv = self.derivative(self.minimum_position + self.surface_offset, 2)
        return float(np.sqrt(curv / self.atom_mass))

    @property
    def escape_energy(self):
        """Lowest energy at which an atom leaves the well (J).

        Either the free-space asymptote (0) or the inner barrier at the
        surface, whichever is lower.
        """
        return min(0.0, float(self(self.surface_offset)))

    @property
    def trap_depth(self):
        return self.escape_energy - self.minimum_value


def calibrate_potential(target_trap_frequency=DEFAULT_TRAP_FREQUENCY,
                        target_minimum_position=DEFAULT_MINIMUM_POSITION,
                        decay_lengths=DEFAULT_DECAY_LENGTHS, trap_depth=None,
                        atom_mass=CESIUM_MASS, surface_offset=0.0):
    """Solve for the amplitudes that put the minimum at a given distance and curvature.

    For fixed decay lengths the two conditions ``U'(x0) = 0`` and
    ``U''(x0) = m w^2`` are linear in the amplitudes and have a closed-form
    solution.  If ``trap_depth`` (J) is given, both decay lengths are scaled by
    a common factor so that the well depth matches as well; the depth of the
    family is ``m w^2 L_b L_r / 4``.

    Parameters
    ----------
    target_trap_frequency : float
        Radial angular frequency at the minimum (rad/s).
    target_minimum_position : float
        Distance of the minimum from the surface (m).
    decay_lengths : tuple of float
        ``(L_b, L_r)`` in m; ``L_b < L_r``.
    trap_depth : float, optional
        Desired depth (J).

    Returns
    -------
    RadialPotentialModel

    Raises
    ------
    ValidationError
        Non-positive targets or decay lengths.
    NoSolutionError
        ``L_b >= L_r`` (no minimum exists) or the requested depth cannot be
        reached without losing the inner barrier.
    """
    w = check_positive(target_trap_frequency, "target_trap_frequency")
    x0 = check_positive(target_minimum_position, "target_minimum_position")
    lb, lr = (check_positive(v, "decay length") for v in decay_lengths)
    if lb == lr:
        raise ValidationError("decay lengths must be distinct")
    if lb > lr:
        raise NoSolutionError("a minimum requires the blue field to decay faster than the red one")
    k = atom_mass * w**2
    if trap_depth is not None:
        depth = check_positive(trap_depth, "trap_depth")
        scale = np.sqrt(4 * depth / (k * lb * lr))
        lb, lr = lb * scale, lr * scale
    x_term = k / (4 * (1 / lb - 1 / lr))
    a_b = x_term * lb * np.exp(2 * x0 / lb)
    a_r = x_term * lr * np.exp(2 * x0 / lr)
    model = RadialPotentialModel(a_b, a_r, lb, lr, surface_offset, atom_mass)
    if trap_depth is not None and model.escape_energy < 0:
        raise NoSolutionError("requested depth exceeds the inner barrier at the surface")
    return model


@dataclass(frozen=True)
class GridSpec:
    """Hard-wall box ``[0, extent_factor * x_min]`` with ``points`` interior nodes."""

    points: int = 16000
    extent_factor: float = 5.0

    def __post_init__(self):
        if int(self.points) != self.points or self.points < 10:
            raise ValidationError("grid points must be an integer >= 10")
        check_positive(self.extent_factor, "extent_factor")

    def nodes(self, extent):
        x = np.linspace(0.0, extent, self.points + 2)
        return x[1:-1], x[1] - x[0]


@dataclass(frozen=True)
class GridInfo:
    spacing: float
    extent: float
    points: int


@dataclass(frozen=True, eq=False)
class VibrationalSpectrum:
    """Radial level energies and light shifts for ``n = 0..n_max``.

    ``energies`` and ``light_shifts`` are angular frequencies (rad/s).  The
    optional ``wavefunctions`` (grid values, shape ``(points, n_max + 1)``,
    normalised so that ``sum(psi**2) * spacing == 1``) and ``positions`` are
    only present for spectra computed from a potential model.
    """

    energies: np.ndarray
    light_shifts: np.ndarray
    grid: Optional[GridInfo] = None
    wavefunctions: Optional[np.ndarray] = field(default=None, repr=False)
    positions: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        e = _readonly(self.energies)
        d = _readonly(self.light_shifts)
        if e.ndim != 1 or e.size == 0:
            raise ValidationError("energies must be a non-empty 1-D array")
        if d.shape != e.shape:
            raise ValidationError("light_shifts and energies differ in length")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(d))):
            raise ValidationError("spectrum contains non-finite values")
        bad = np.flatnonzero(np.diff(e) <= 0)
        if bad.size:
            raise ValidationError(f"energies not strictly increasing at n = {bad[0] + 1}")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "light_shifts", d)
        if self.wavefunctions is not None:
            object.__setattr__(self, "wavefunctions", _readonly(self.wavefunctions))
            object.__setattr__(self, "positions", _readonly(self.positions))

    @property
    def n_max(self):
        return self.energies.size - 1

    @property
    def level_spacing(self):
        """``E_1 - E_0`` in rad/s."""
        return float(self.energies[1] - self.energies[0])

    def truncate(self, n_max):
        """Spectrum restricted to ``n <= n_max``."""
        if n_max > self.n_max:
            raise ValidationError(f"cannot truncate spectrum with n_max={self.n_max} to {n_max}")
        wf = None if self.wavefunctions is None else self.wavefunctions[:, : n_max + 1]
        return replace(self, energies=self.energies[: n_max + 1],
                       light_shifts=self.light_shifts[: n_max + 1], wavefunctions=wf)

    def with_light_shifts(self, light_shifts):
        return replace(self, light_shifts=light_shifts)

    def expectation(self, values):
        """``<n| f(x) |n>`` for grid samples ``values`` of ``f``."""
        if self.wavefunctions is None:
            raise ValidationError("spectrum carries no eigenfunctions")
        psi = self.wavefunctions
        return np.einsum("in,i,in->n", psi, np.asarray(values, dtype=float), psi) * self.grid.spacing


def solve_eigenstates(model, n_max, grid=GridSpec(), potential=None, tail_tolerance=1e-6):
    """Lowest ``n_max + 1`` radial eigenstates of ``-hbar^2/2m d^2/dx^2 + U(x)``.

    Parameters
    ----------
    model : RadialPotentialModel
        Supplies the mass, the minimum position (grid extent) and, unless
        ``potential`` is given, the potential itself.
    n_max : int
    grid : GridSpec
    potential : callable, optional
        ``U(x)`` in J with ``x`` measured from the surface; overrides the
        model potential (used for analytic test cases).  Bound-state checks
        are skipped for a custom potential.
    tail_tolerance : float
        Maximum allowed ``|psi|`` at the outermost nodes relative to its peak.

    Returns
    -------
    VibrationalSpectrum
        Light shifts are zero; see :func:`differential_light_shift`.

    Raises
    ------
    EigenSolverError
        Fewer than ``n_max + 1`` bound states, or eigenfunctions clipped by
        the box walls.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ValidationError("n_max must be >= 0")
    if n_max + 1 > grid.points:
        raise ValidationError("n_max exceeds the number of grid points")
    extent = grid.extent_factor * model.minimum_position
    x, h = grid.nodes(extent)
    if potential is None:
        u = model(x + model.surface_offset)
    else:
        u = np.asarray(potential(x), dtype=float)
    t = HBAR**2 / (2 * model.atom_mass * h * h)
    diag = 2 * t + u
    off = np.full(x.size - 1, -t)
    evals, evecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_max))
    if potential is None:
        escape = model.escape_energy
        n_bound = int(np.sum(evals < escape))
        if n_bound < n_max + 1:
            raise EigenSolverError(
                f"only {n_bound} bound states below the escape energy, need n_max + 1 = {n_max + 1}")
    peak = np.max(np.abs(evecs), axis=0)
    tail = np.maximum(np.abs(evecs[0]), np.abs(evecs[-1])) / peak
    clipped = np.flatnonzero(tail > tail_tolerance)
    if clipped.size:
        raise EigenSolverError(
            f"eigenfunction n = {clipped[0]} clipped by the box (tail {tail[clipped[0]]:.2e})")
    # fix sign: positive at the first grid point where the function is not negligible
    first = np.argmax(np.abs(evecs) > 1e-12 * peak, axis=0)
    signs = np.sign(evecs[first, np.arange(evecs.shape[1])])
    psi = evecs * signs / np.sqrt(h)
    return VibrationalSpectrum(
        energies=evals / HBAR,
        light_shifts=np.zeros(n_max + 1),
        grid=GridInfo(spacing=h, extent=extent, points=grid.points),
        wavefunctions=psi,
        positions=x,
    )


def differential_light_shift(spectrum, model, shift_scale_blue, shift_scale_red):
    """State-resolved differential light shift ``<n| s_b U_b + s_r U_r |n> / hbar``.

    ``U_b`` and ``U_r`` are the signed blue and red terms of ``model``, so
    equal scales give a shift proportional to the potential itself.

    Returns
    -------
    numpy.ndarray
        Light shifts in rad/s, one per level.
    """
    sb, sr = float(shift_scale_blue), float(shift_scale_red)
    if not (np.isfinite(sb) and np.isfinite(sr)):
        raise ValidationError("shift scales must be finite")
    r = spectrum.positions + model.surface_offset
    local = sb * model.blue(r) + sr * model.red(r)
    return spectrum.expectation(local) / HBAR


@dataclass(frozen=True, eq=False)
class ThermalDistribution:
    temperature: float
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))

    @property
    def mean_occupation(self):
        return float(np.dot(np.arange(self.weights.size), self.weights))


def boltzmann_weights(spectrum, T):
    """Boltzmann occupation ``P(n, T)`` renormalised over ``n <= n_max``.

    ``T = 0`` puts all weight in the ground state.
    """
    T = check_temperature(T)
    n = spectrum.energies.size
    if T == 0:
        w = np.zeros(n)
        w[0] = 1.0
        return ThermalDistribution(0.0, w)
    beta_e = HBAR * (spectrum.energies - spectrum.energies[0]) / (K_B * T)
    w = np.exp(-beta_e)
    return ThermalDistribution(T, w / w.sum())


def truncation_tail(spectrum, T):
    """Boltzmann weight that lies beyond ``n_max`` for a harmonic continuation.

    The levels above ``n_max`` are extrapolated with the last level spacing,
    which overestimates the tail for an anharmonic well with shrinking spacing
    only mildly; used as a diagnostic.
    """
    T = check_temperature(T)
    if T == 0:
        return 0.0
    e = HBAR * (spectrum.energies - spectrum.energies[0]) / (K_B * T)
    last_step = HBAR * (spectrum.energies[-1] - spectrum.energies[-2]) / (K_B * T)
    inside = np.exp(-e).sum()
    outside = np.exp(-e[-1] - last_step) / (1 - np.exp(-last_step))
    return float(outside / (inside + outside))
