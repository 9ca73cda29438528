import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from trapcoherence.errors import EigenSolverError, NoSolutionError, ValidationError
from trapcoherence.presets import REFERENCE
from trapcoherence.spectrum import (DEFAULT_DECAY_LENGTHS, GridSpec, VibrationalSpectrum,
                                    boltzmann_weights, calibrate_potential, differential_light_shift,
                                    solve_eigenstates,
                                    truncation_tail)
from trapcoherence.spin import t2_star
from trapcoherence.units import HBAR, K_B

W0 = 2 * np.pi * 200e3


@pytest.fixture(scope="module")
def model():
    return calibrate_potential(W0, 200e-9, DEFAULT_DECAY_LENGTHS)


class TestCalibration:
    def test_targets_reproduced(self, model):
        assert model.minimum_position == pytest.approx(200e-9, rel=1e-12)
        assert model.trap_frequency == pytest.approx(W0, rel=1e-12)
        assert model.derivative(200e-9) == pytest.approx(0.0, abs=1e-12 * model.blue_amplitude / 1e-7)

    def test_single_local_minimum(self, model):
        x = np.linspace(1e-9, 1e-6, 200_001)
        d = model.derivative(x)
        crossings = np.flatnonzero(np.diff(np.sign(d)) != 0)
        minima = [i for i in crossings if d[i] < 0 < d[i + 1]]
        assert len(minima) == 1
        assert x[minima[0]] == pytest.approx(200e-9, abs=1e-11)

    def test_depth_formula(self, model):
        lb, lr = DEFAULT_DECAY_LENGTHS
        expected = model.atom_mass * W0**2 * lb * lr / 4
        assert model.trap_depth == pytest.approx(expected, rel=1e-10)

    def test_requested_depth(self):
        for depth in (K_B * 0.3e-3, K_B * 1e-3):
            m = calibrate_potential(W0, 200e-9, DEFAULT_DECAY_LENGTHS, trap_depth=depth)
            assert m.trap_depth == pytest.approx(depth, rel=1e-10)
            assert m.trap_frequency == pytest.approx(W0, rel=1e-10)
            assert m.minimum_position == pytest.approx(200e-9, rel=1e-10)

    def test_unreachable_depth(self):
        with pytest.raises(NoSolutionError, match="barrier"):
            calibrate_potential(W0, 200e-9, DEFAULT_DECAY_LENGTHS, trap_depth=K_B * 2e-3)

    def test_zero_frequency_rejected(self):
        with pytest.raises(ValidationError):
            calibrate_potential(0.0, 200e-9)

    def test_wrong_length_order_has_no_minimum(self):
        with pytest.raises(NoSolutionError):
            calibrate_potential(W0, 200e-9, (450e-9, 200e-9))

    def test_amplitudes_continuous_in_frequency(self):
        freqs = W0 * np.linspace(1.0, 1.01, 5)
        models = [calibrate_potential(w, 200e-9) for w in freqs]
        ab = np.array([m.blue_amplitude for m in models])
        ar = np.array([m.red_amplitude for m in models])
        assert np.all(np.diff(ab) > 0) and np.all(np.diff(ar) > 0)
        # no branch jumps: amplitudes scale as w^2
        np.testing.assert_allclose(ab / ab[0], (freqs / W0) ** 2, rtol=1e-12)


class TestEigenstates:
    def test_harmonic_limit(self, model):
        grid = GridSpec(16000, 5.0)
        x0 = 2.5 * model.minimum_position
        k = model.atom_mass * W0**2
        sp = solve_eigenstates(model, 20, grid, potential=lambda x: 0.5 * k * (x - x0) ** 2)
        n = np.arange(1, 21)
        rel = (sp.energies[1:] - sp.energies[0]) / (n * W0) - 1
        assert np.max(np.abs(rel)) < 1e-4
        assert sp.energies[0] == pytest.approx(W0 / 2, rel=1e-4)
        # virial theorem: <V> = E / 2
        v = sp.expectation(0.5 * k * (sp.positions - x0) ** 2) / HBAR
        np.testing.assert_allclose(v, sp.energies / 2, rtol=1e-4)

    def test_harmonic_position_moments(self, model):
        grid = GridSpec(16000, 5.0)
        x0 = 2.5 * model.minimum_position
        k = model.atom_mass * W0**2
        sp = solve_eigenstates(model, 20, grid, potential=lambda x: 0.5 * k * (x - x0) ** 2)
        a2 = HBAR / (model.atom_mass * W0)
        moment = sp.expectation((sp.positions - x0) ** 2)
        np.testing.assert_allclose(moment, a2 * (np.arange(21) + 0.5), rtol=1e-4)

    def test_grid_convergence(self, model):
        coarse = solve_eigenstates(model, 70, GridSpec(16000))
        fine = solve_eigenstates(model, 70, GridSpec(32001))   # spacing halved
        base = model.minimum_value / HBAR
        rel = (fine.energies - coarse.energies) / (coarse.energies - base)
        assert np.max(np.abs(rel)) < 1e-4

    def test_orthonormal(self, spectrum):
        psi = spectrum.wavefunctions
        gram = psi.T @ psi * spectrum.grid.spacing
        assert np.max(np.abs(gram - np.eye(psi.shape[1]))) < 1e-8

    def test_strictly_increasing_and_anharmonic(self, spectrum):
        gaps = np.diff(spectrum.energies)
        assert np.all(gaps > 0)
        assert np.all(np.diff(gaps) < 0)          # softening well
        assert gaps[0] == pytest.approx(W0, rel=0.01)

    def test_bohr_sommerfeld(self, reference):
        sp, model, _ = reference
        x_min = model.minimum_position

        def action(E):
            left = brentq(lambda x: model(x) - E, 0.3 * x_min, x_min)
            right = brentq(lambda x: model(x) - E, x_min, 6 * x_min)
            val, _ = quad(lambda x: np.sqrt(max(2 * model.atom_mass * (E - model(x)), 0.0)),
                          left, right, limit=200)
            return val / (np.pi * HBAR)

        for n in (0, 5, 20, 50, 70):
            assert action(HBAR * sp.energies[n]) == pytest.approx(n + 0.5, abs=0.02)

    def test_too_many_levels(self, model):
        with pytest.raises(EigenSolverError, match="bound states"):
            solve_eigenstates(model, 400, GridSpec(4000))

    def test_clipped_tail(self, model):
        with pytest.raises(EigenSolverError, match="clipped"):
            solve_eigenstates(model, 3, GridSpec(4000, extent_factor=1.05))

    def test_bad_n_max(self, model):
        with pytest.raises(ValidationError):
            solve_eigenstates(model, -1)


class TestLightShift:
    def test_zero_scales(self, reference):
        sp, model, _ = reference
        assert np.all(differential_light_shift(sp, model, 0.0, 0.0) == 0.0)

    def test_calibrated_t2_star(self, spectrum):
        assert t2_star(spectrum, REFERENCE.temperature) == pytest.approx(0.6e-3, rel=1e-6)

    def test_trend(self, spectrum):
        d = spectrum.light_shifts / (2 * np.pi)
        assert 5e3 < d[0] < 8e3
        assert np.all(np.diff(d) < 0)
        assert np.all(d > 0)

    def test_truncated_variants_share_scale(self, spectrum):
        from trapcoherence.presets import calibrated_spectrum
        small, _, _ = calibrated_spectrum(30)
        np.testing.assert_array_equal(small.light_shifts, spectrum.light_shifts[:31])


class TestThermal:
    def test_geometric_series(self):
        w = K_B * 9.6e-6 / HBAR
        sp = VibrationalSpectrum(w * np.arange(600), np.zeros(600))
        th = boltzmann_weights(sp, 71e-6)
        x = 9.6 / 71
        assert th.mean_occupation == pytest.approx(1 / np.expm1(x), rel=1e-10)
        assert th.mean_occupation == pytest.approx(6.9, abs=0.05)

    def test_zero_temperature(self, spectrum):
        th = boltzmann_weights(spectrum, 0.0)
        assert th.weights[0] == 1.0 and th.weights[1:].sum() == 0.0

    def test_normalised_and_nonincreasing(self, spectrum):
        for T in (1e-6, 35e-6, 71e-6, 200e-6):
            w = boltzmann_weights(spectrum, T).weights
            assert w.sum() == pytest.approx(1.0, abs=1e-14)
            assert np.all(np.diff(w) <= 0)

    def test_truncation_tail_harmonic(self):
        w = K_B * 9.6e-6 / HBAR
        sp = VibrationalSpectrum(w * np.arange(71), np.zeros(71))
        tail = truncation_tail(sp, 71e-6)
        assert tail == pytest.approx(np.exp(-71 * 9.6 / 71), rel=1e-10)
        assert tail < 1e-3

    def test_truncation_tail_small_at_reference(self, spectrum):
        # the calibrated well softens near n = 70, so the tail is about 3e-3 here
        assert truncation_tail(spectrum, 71e-6) < 5e-3
        assert truncation_tail(spectrum.truncate(30), 71e-6) > truncation_tail(spectrum, 71e-6)

    def test_negative_temperature(self, spectrum):
        with pytest.raises(ValidationError):
            boltzmann_weights(spectrum, -1.0)


def test_spectrum_validation():
    with pytest.raises(ValidationError, match="strictly increasing"):
        VibrationalSpectrum(np.array([0.0, 2.0, 1.0]), np.zeros(3))
    with pytest.raises(ValidationError):
        VibrationalSpectrum(np.array([0.0, 1.0]), np.zeros(3))
    sp = VibrationalSpectrum(np.array([0.0, 1.0]), np.zeros(2))
    with pytest.raises(ValueError):
        sp.energies[0] = 5.0
