import numpy as np
import pytest

from trapcoherence.presets import calibrated_spectrum
from trapcoherence.spectrum import VibrationalSpectrum

TWO_PI = 2 * np.pi
KHZ = TWO_PI * 1e3

# acceptance lines collected during the run and repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def reference():
    """Calibrated reference trap with 71 levels: (spectrum, model, shift_scale)."""
    return calibrated_spectrum(70)


@pytest.fixture(scope="session")
def spectrum(reference):
    return reference[0]


@pytest.fixture(scope="session")
def toy_spectrum():
    """Small anharmonic-looking spectrum built by hand (rad/s)."""
    n = np.arange(12)
    energies = TWO_PI * (200e3 * n - 0.5e3 * n**2)
    shifts = TWO_PI * (6.5e3 - 55.0 * n)
    return VibrationalSpectrum(energies, shifts)


def random_spectrum(seed, levels=15):
    rng = np.random.default_rng(seed)
    energies = np.cumsum(TWO_PI * rng.uniform(150e3, 250e3, levels))
    shifts = TWO_PI * rng.uniform(-10e3, 10e3, levels)
    return VibrationalSpectrum(energies, shifts)


def synthetic_datasets(spectrum, truth, t_echoes=(1e-3, 2e-3, 3e-3), sigma=0.0, seed=0,
                       pulse_mode="detuned", rabi_step=2e-6, ramsey_step=5e-6, echo_step=5e-6,
                       echo_half_width=0.5e-3, ramsey_stop=1.5e-3):
    """Rabi, Ramsey and echo traces generated from ``truth`` plus Gaussian noise."""
    from trapcoherence.fit import Dataset, model_probability

    rng = np.random.default_rng(seed)
    specs = [("rabi", np.arange(0.0, 201e-6, rabi_step), None),
             ("ramsey", np.arange(0.0, ramsey_stop + 1e-9, ramsey_step), None)]
    for te in t_echoes:
        specs.append(("echo", te + np.arange(-echo_half_width, echo_half_width + 1e-9,
                                             echo_step), te))
    out = []
    for kind, t, te in specs:
        stub = Dataset(kind, t, np.zeros_like(t), t_echo=te)
        p = truth.eta * model_probability(truth, stub, spectrum, list(t_echoes), pulse_mode)
        s = np.clip(p + sigma * rng.normal(size=t.size), 0.0, None)
        out.append(Dataset(kind, t, s, t_echo=te))
    return out


def perturbed_guess(truth, factors=(1.2, 0.8)):
    """Alternate the given relative factors over the parameters of ``truth``."""
    from dataclasses import replace

    names = ["T0", "Omega0", "delta_MW_ramsey", "delta_MW_echo"]
    vals = {n: getattr(truth, n) * factors[i % 2] for i, n in enumerate(names)}
    C = tuple(min(c * factors[(i + 4) % 2], 1.0) for i, c in enumerate(truth.C_values))
    return replace(truth, C_values=C, eta=truth.eta * factors[1], phi=truth.phi * factors[0],
                   **vals)
