import numpy as np
import pytest

from trapcoherence.errors import IntegrationError
from trapcoherence.integrate import DormandPrince


def test_rotation_exact():
    w = 2 * np.pi * 10e3
    solver = DormandPrince(lambda y: -1j * w * y, rtol=1e-11, atol=1e-14)
    t = np.linspace(0, 1e-3, 11)
    out = np.array(solver.integrate(np.array([1.0 + 0j]), t))[:, 0]
    np.testing.assert_allclose(out, np.exp(-1j * w * t), atol=1e-9)


def test_lands_on_output_times():
    seen = []

    def rhs(y):
        return -y

    solver = DormandPrince(rhs, rtol=1e-10, atol=1e-13, project=lambda y: (seen.append(1), y)[1])
    t = [0.0, 0.1, 0.1, 0.37, 2.0]
    out = solver.integrate(np.array([1.0]), t)
    np.testing.assert_allclose(np.real(np.ravel(out)), np.exp(-np.asarray(t)), rtol=1e-9)
    assert len(seen) == solver.n_accepted


def test_zero_time_returns_initial_state():
    y0 = np.array([[1.0, 2.0j], [-2.0j, 3.0]])
    out = DormandPrince(lambda y: y * 5).integrate(y0, [0.0])
    assert np.array_equal(out[0], y0)


def test_error_shrinks_with_tolerance():
    exact = np.exp(-3.0)
    errs = []
    for rtol in (1e-5, 1e-8, 1e-11):
        y = DormandPrince(lambda y: -y, rtol=rtol, atol=rtol * 1e-3).integrate(np.array([1.0]),
                                                                               [3.0])[0]
        errs.append(abs(y[0] - exact))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-10


def test_blow_up_reports_reached_time():
    # y' = y^2, y(0) = 1 diverges at t = 1
    solver = DormandPrince(lambda y: y * y, rtol=1e-8, atol=1e-10, max_steps=100_000)
    with pytest.raises(IntegrationError) as info:
        solver.integrate(np.array([1.0]), [2.0])
    assert 0.99 < info.value.reached_time < 1.0 + 1e-6
    assert "reached t" in str(info.value)


def test_rejects_descending_times():
    with pytest.raises(ValueError):
        DormandPrince(lambda y: y).integrate(np.array([1.0]), [1.0, 0.5])
