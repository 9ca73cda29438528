import numpy as np
import pytest
from scipy.linalg import expm

from conftest import KHZ
from trapcoherence.errors import ValidationError
from trapcoherence.lindblad import (HeatingModel, build_liouvillian, echo_under_heating,
                                    echo_window, excited_population, extract_C_heat,
                                    fringe_amplitude, hwhm, initial_state, mean_phonon_number,
                                    phonon_growth, propagate, superoperator_propagator)
from trapcoherence.spectrum import boltzmann_weights
from trapcoherence.spin import PulseSpec, echo_probability, pulse_operator
from trapcoherence.validation import check_density_matrix

OMEGA = 17 * KHZ
DET = -5 * KHZ
T0 = 71e-6


def _random_density(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@pytest.fixture(scope="module")
def small(spectrum):
    return HeatingModel(350.0, spectrum, n_max=8)


class TestGenerator:
    def test_action_matches_superoperator(self, small):
        L = build_liouvillian(small, DET)
        rho = _random_density(small.dimension, 0)
        direct = L(rho)
        via_matrix = (L.matrix() @ rho.reshape(-1)).reshape(rho.shape)
        assert np.max(np.abs(direct - via_matrix)) < 1e-12 * np.max(np.abs(direct))

    def test_trace_and_hermiticity_preserved(self, small):
        L = build_liouvillian(small, DET)
        rho = _random_density(small.dimension, 1)
        out = L(rho)
        assert abs(np.trace(out)) < 1e-10 * np.max(np.abs(out))
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12 * np.max(np.abs(out)))

    def test_propagate_matches_expm(self, small):
        L = build_liouvillian(small, DET)
        rho = _random_density(small.dimension, 2)
        t = 1.7e-3
        ref = (superoperator_propagator(L, t) @ rho.reshape(-1)).reshape(rho.shape)
        out = propagate(rho, L, t, rtol=1e-11, atol=1e-14)
        assert np.max(np.abs(out - ref)) < 1e-8

    def test_zero_time(self, small):
        L = build_liouvillian(small, DET)
        rho = _random_density(small.dimension, 3)
        assert np.array_equal(propagate(rho, L, 0.0), rho)

    def test_invariants_along_trajectory(self, small):
        L = build_liouvillian(small, DET)
        rho = _random_density(small.dimension, 4)
        states = propagate(rho, L, np.linspace(0, 5e-3, 11))
        for s in states:
            check_density_matrix(s, atol=1e-10)
            assert abs(np.trace(s) - 1) < 1e-8

    def test_validation(self, spectrum):
        with pytest.raises(ValidationError):
            HeatingModel(-1.0, spectrum)
        with pytest.raises(ValidationError):
            HeatingModel(350.0, spectrum.truncate(10), n_max=30)


class TestHeating:
    def test_linear_phonon_growth(self, spectrum):
        model = HeatingModel(350.0, spectrum, n_max=40)
        t = np.linspace(0, 3 / 350.0, 7)
        n = phonon_growth(model, 0.0, t)
        # the hard cutoff at n_max slows growth once the tail reaches it
        np.testing.assert_allclose(n, 350.0 * t, rtol=1e-4, atol=1e-9)

    def test_rate_conversion(self, spectrum):
        rate = HeatingModel(350.0, spectrum).heating_rate()
        assert 3.0e-3 <= rate <= 3.6e-3

    def test_initial_state_is_thermal(self, small):
        rho = initial_state(small, T0)
        w = boltzmann_weights(small.truncated_spectrum, T0).weights
        assert mean_phonon_number(rho, small.levels) == pytest.approx(w @ np.arange(small.levels))
        assert excited_population(rho, small.levels) == 0.0


def _birth_death_echo(spectrum, kappa, n_max, T, t_echo, t_d, phase=0.0):
    """Echo signal from the level-diagonal reduction of the heating dynamics.

    With level-diagonal Hamiltonian, pulses and initial state, the joint state
    stays block diagonal in n: rho = sum_n |n><n| (x) r_n.  Each spin matrix
    element of r_n obeys a birth-death chain plus a level-dependent phase.
    """
    N = n_max + 1
    n = np.arange(N, dtype=float)
    B = np.zeros((N, N))
    B[np.arange(1, N), np.arange(N - 1)] = kappa * n[1:]              # a^dag rho a
    B[np.arange(N - 1), np.arange(1, N)] = kappa * n[1:]              # a rho a^dag
    B[np.arange(N), np.arange(N)] = -kappa * (n + np.append(n[1:], 0.0))
    delta = spectrum.light_shifts[:N] - DET
    h = np.stack([delta / 2, -delta / 2])

    def evolve(r, t):
        out = np.empty_like(r)
        for i in range(2):
            for j in range(2):
                G = B - 1j * np.diag(h[i] - h[j])
                out[:, i, j] = expm(G * t) @ r[:, i, j]
        return out

    w = boltzmann_weights(spectrum.truncate(n_max), T).weights
    r = np.zeros((N, 2, 2), dtype=complex)
    r[:, 1, 1] = w
    u1, upi, u2 = (pulse_operator(PulseSpec(a, None, ph)) for a, ph in
                   ((np.pi / 2, 0.0), (np.pi, 0.0), (np.pi / 2, phase)))
    r = u1 @ r @ u1.conj().T
    r = evolve(r, t_echo / 2)
    r = upi @ r @ upi.conj().T
    out = []
    for td in t_d:
        s = evolve(r, td - t_echo / 2)
        s = u2 @ s @ u2.conj().T
        out.append(np.real(s[:, 0, 0].sum()))
    return np.array(out)


class TestEcho:
    def test_unitary_limit(self, spectrum):
        model = HeatingModel(0.0, spectrum, n_max=30)
        te = 2e-3
        t = np.linspace(te - 0.3e-3, te + 0.3e-3, 50)
        for mode in ("ideal", "detuned"):
            p = echo_under_heating(model, OMEGA, DET, T0, te, t, mode)
            ref = echo_probability(OMEGA, DET, t, te, 1.0, 0.0, model.truncated_spectrum,
                                   boltzmann_weights(model.truncated_spectrum, T0), mode)
            assert np.max(np.abs(p - ref)) < 1e-6

    def test_birth_death_oracle(self, spectrum):
        model = HeatingModel(350.0, spectrum, n_max=20, rtol=1e-10, atol=1e-13)
        te = 2.5e-3
        t = te + np.array([-0.3e-3, -0.05e-3, 0.0, 0.11e-3, 0.4e-3])
        p = echo_under_heating(model, OMEGA, DET, T0, te, t, phase=0.2)
        ref = _birth_death_echo(spectrum, 350.0, 20, T0, te, t, phase=0.2)
        assert np.max(np.abs(p - ref)) < 1e-7

    def test_tolerance_convergence(self, spectrum):
        te = 2e-3
        t = np.linspace(te - 0.2e-3, te + 0.2e-3, 9)
        loose = HeatingModel(350.0, spectrum, n_max=20, rtol=1e-8, atol=1e-11)
        tight = HeatingModel(350.0, spectrum, n_max=20, rtol=1e-11, atol=1e-14)
        a = echo_under_heating(loose, OMEGA, DET, T0, te, t)
        b = echo_under_heating(tight, OMEGA, DET, T0, te, t)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_refocusing_without_heating(self, spectrum):
        model = HeatingModel(0.0, spectrum, n_max=30)
        p = echo_under_heating(model, OMEGA, DET, T0, 3e-3, [3e-3])
        assert abs(p[0]) < 1e-7                 # integrator tolerance 1e-9

    def test_timing_checked(self, small):
        with pytest.raises(ValidationError):
            echo_under_heating(small, OMEGA, DET, T0, 2e-3, [0.5e-3])


class TestDecayCurve:
    def test_no_heating_gives_unit_coherence(self, spectrum):
        model = HeatingModel(0.0, spectrum, n_max=30)
        curve = extract_C_heat(model, OMEGA, DET, T0, [1e-3, 2e-3])
        np.testing.assert_array_equal(curve.C_heat, [1.0, 1.0])
        assert curve.T2 is None and curve.quality == "no-crossing"

    def test_decreasing_with_heating(self, spectrum):
        model = HeatingModel(350.0, spectrum, n_max=30)
        curve = extract_C_heat(model, OMEGA, DET, T0, [1e-3, 2e-3, 3e-3], step=2e-6)
        assert curve.monotone
        assert np.all((0 < curve.C_heat) & (curve.C_heat < 1))

    def test_truncation_sensitivity(self, spectrum):
        # n_max = 40 rerun changes C_heat only slightly at the reference point
        grid = [3e-3]
        c30 = extract_C_heat(HeatingModel(350.0, spectrum, n_max=30), OMEGA, DET, T0, grid,
                             step=2e-6).C_heat[0]
        c40 = extract_C_heat(HeatingModel(350.0, spectrum, n_max=40), OMEGA, DET, T0, grid,
                             step=2e-6).C_heat[0]
        assert abs(c30 - c40) < 0.05

    def test_hwhm_interpolation(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        assert hwhm(t, [1.0, 0.8, 0.4, 0.1]) == pytest.approx(1.75)
        assert hwhm(t, [1.0, 0.9, 0.8, 0.7]) is None

    def test_fringe_estimators(self):
        t = np.linspace(0, 1e-3, 2001)
        w = 2 * np.pi * 11e3
        p = 0.5 + 0.3 * np.cos(w * (t - 0.4e-3) + 0.2)
        assert fringe_amplitude(t, p) == pytest.approx(0.3, rel=1e-6)
        assert fringe_amplitude(t, p, "sinusoid", w, 0.4e-3) == pytest.approx(0.3, rel=1e-10)
        with pytest.raises(ValidationError):
            fringe_amplitude(t, p, "sinusoid")

    def test_echo_window(self):
        t = echo_window(2e-3, 0.5e-3, 1e-6)
        assert t[0] == pytest.approx(1.5e-3) and t[-1] == pytest.approx(2.5e-3)
        assert t.size == 1001
        t = echo_window(0.6e-3, 0.5e-3, 1e-6)
        assert t[0] >= 0.3e-3
