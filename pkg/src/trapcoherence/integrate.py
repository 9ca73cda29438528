"""Adaptive Dormand-Prince 5(4) integration of autonomous matrix ODEs.

Written for density-matrix propagation: the state is any complex ndarray, an
optional ``project`` hook runs after every accepted step (e.g. Hermitian
symmetrisation), and the integrator lands exactly on every requested output
time instead of interpolating.
"""

import numpy as np

from .errors import IntegrationError

# Dormand & Prince (1980) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B_LOW = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class DormandPrince:
    """Integrator for ``dy/dt = rhs(y)``.

    Parameters
    ----------
    rhs : callable
        ``rhs(y) -> dy/dt`` with the same shape as ``y``.
    rtol, atol : float
        Local error tolerances, max-norm.
    project : callable, optional
        Applied to the state after each accepted step.
    max_steps : int
        Abort after this many attempted steps per :meth:`integrate` call.

    Attributes
    ----------
    n_accepted, n_rejected, n_rhs : int
        Statistics, accumulated over calls.
    """

    def __init__(self, rhs, rtol=1e-9, atol=1e-12, project=None, max_steps=10_000_000):
        self.rhs = rhs
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.project = project
        self.max_steps = int(max_steps)
        self.n_accepted = 0
        self.n_rejected = 0
        self.n_rhs = 0
        self._h = None

    def _f(self, y):
        self.n_rhs += 1
        return self.rhs(y)

    def _initial_step(self, y, f0):
        scale = self.atol + self.rtol * np.abs(y)
        d0 = np.max(np.abs(y) / scale)
        d1 = np.max(np.abs(f0) / scale)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = y + h * f0
        d2 = np.max(np.abs(self._f(y1) - f0) / scale) / h
        h1 = max(1e-6 * h, (0.01 / max(d1, d2)) ** 0.2) if max(d1, d2) > 1e-15 else h * 1e3
        return min(100 * h, h1)

    def integrate(self, y0, t_eval):
        """States at each ``t_eval`` (relative to the start, ascending, >= 0).

        Returns
        -------
        list of ndarray
        """
        y = np.array(y0, dtype=complex, copy=True)
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.ndim != 1 or np.any(np.diff(t_eval) < 0) or (t_eval.size and t_eval[0] < 0):
            raise ValueError("t_eval must be ascending and nonnegative")
        out = []
        t = 0.0
        f = self._f(y)
        h = self._h if self._h is not None else self._initial_step(y, f)
        steps = 0
        for target in t_eval:
            while t < target:
                if steps > self.max_steps:
                    raise IntegrationError("maximum number of steps exceeded", t)
                steps += 1
                last = target - t <= h * (1 + 1e-12)
                step = target - t if last else h
                if step < 1e-14 * max(abs(t), abs(target), 1e-300) or step < 1e-300:
                    raise IntegrationError("step size underflow", t)
                y_new, f_new, err = self._step(y, f, step)
                if err <= 1.0:
                    t = target if last else t + step
                    y = y_new if self.project is None else self.project(y_new)
                    f = f_new if self.project is None else self._f(y)
                    self.n_accepted += 1
                    factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
                    if not last or factor < 1:
                        h = step * max(factor, _MIN_FACTOR)
                else:
                    self.n_rejected += 1
                    h = step * max(_MIN_FACTOR, _SAFETY * err ** -0.2)
                    if h < 1e-14 * max(abs(t), 1e-300):
                        raise IntegrationError("step size underflow", t)
            out.append(y.copy())
        self._h = h
        return out

    def _step(self, y, f0, h):
        k = [f0]
        for i in range(1, 7):
            yi = y.copy()
            for j, a in enumerate(_A[i]):
                if a:
                    yi += (h * a) * k[j]
            k.append(self._f(yi))
        y_new = y.copy()
        err_vec = np.zeros_like(y)
        for j in range(7):
            if _B[j]:
                y_new += (h * _B[j]) * k[j]
            if _E[j]:
                err_vec += (h * _E[j]) * k[j]
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        # FSAL: stage 7 is evaluated at y_new
        return y_new, k[6], err
