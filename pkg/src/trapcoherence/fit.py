"""Global weighted least-squares fit of Rabi, Ramsey and spin-echo data.

Every data point is modelled as ``eta * p_model``, with ``p_model`` from
:mod:`trapcoherence.spin` evaluated on a fixed vibrational spectrum.  Free
parameters are the initial temperature, Rabi frequency, one MW detuning per
experiment class (optionally tied), one coherence factor per echo time, the
scale ``eta``, the phase of the last echo pulse and, if long Rabi traces are
present, the Rabi damping rate.

Fringe signals make the objective multimodal in the frequencies, so each start
is fitted on a growing time horizon before the full data set is used.
:class:`GlobalCoherenceFit` wraps the procedure as a scikit-learn estimator.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator

from .errors import NotFittedError, ValidationError
from .spin import echo_probability, rabi_probability, ramsey_probability
from .validation import check_positive, check_times

KINDS = ("rabi", "ramsey", "echo")

# internal (optimiser) units: uK, 2 pi kHz, 1/ms
_SCALE = {
    "T0": 1e-6,
    "Omega0": 2 * np.pi * 1e3,
    "delta_MW_ramsey": 2 * np.pi * 1e3,
    "delta_MW_echo": 2 * np.pi * 1e3,
    "rabi_damping_rate": 1e3,
}

#: Rabi traces longer than this enable fitting of the damping rate
DAMPING_FIT_MIN_DURATION = 1e-3
DEFAULT_HORIZONS = (0.1e-3, 0.3e-3, 1e-3, None)


@dataclass(frozen=True, eq=False)
class Dataset:
    """One measured trace.

    Attributes
    ----------
    kind : {"rabi", "ramsey", "echo"}
    times : ndarray
        Pulse length (Rabi) or time between the first and last pulse (s).
    signal : ndarray
        Uncalibrated signal, modelled as ``eta * p_e``.
    weights : ndarray, optional
        Per-point least-squares weights (default uniform).
    t_echo : float, optional
        Echo time; required for echo data.
    mw_offset : float
        Known MW detuning step (rad/s) added to the class detuning.  Rabi data
        use the Ramsey detuning plus this offset.
    alpha, shots : optional
        Recorded plot scaling and number of averaged realisations.
    """

    kind: str
    times: np.ndarray
    signal: np.ndarray
    weights: Optional[np.ndarray] = None
    t_echo: Optional[float] = None
    mw_offset: float = 0.0
    alpha: Optional[float] = None
    shots: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"dataset kind must be one of {KINDS}, got {self.kind!r}")
        t = check_times(self.times, "times")
        s = np.asarray(self.signal, dtype=float)
        if s.shape != t.shape:
            raise ValidationError("signal and times differ in length")
        if not np.all(np.isfinite(s)):
            raise ValidationError("signal contains non-finite values")
        bad = np.flatnonzero(s < 0)
        if bad.size:
            raise ValidationError(f"signal row {bad[0]} is negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "signal", s)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != t.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValidationError("weights must be finite, nonnegative and match times")
            object.__setattr__(self, "weights", w)
        if self.kind == "echo":
            if self.t_echo is None:
                raise ValidationError("echo datasets need t_echo")
            if np.any(t < self.t_echo / 2):
                raise ValidationError("echo times must satisfy t_d >= t_echo / 2")

    def __len__(self):
        return self.times.size

    def point_weights(self):
        return np.ones_like(self.times) if self.weights is None else self.weights

    def duplicated(self):
        """Every point twice (interleaved); for error-scaling checks."""
        t = np.repeat(self.times, 2)
        # keep times strictly increasing by an ulp-scale nudge
        t[1::2] = np.nextafter(t[1::2], np.inf)
        w = None if self.weights is None else np.repeat(self.weights, 2)
        return replace(self, times=t, signal=np.repeat(self.signal, 2), weights=w)


@dataclass(frozen=True)
class FitParams:
    T0: float
    Omega0: float
    delta_MW_ramsey: float
    delta_MW_echo: float
    C_values: Tuple[float, ...] = ()
    eta: float = 1.0
    phi: Union[float, Tuple[float, ...]] = 0.0
    rabi_damping_rate: float = 1 / 3.4e-3

    def __post_init__(self):
        object.__setattr__(self, "C_values", tuple(float(c) for c in self.C_values))
        if not np.isscalar(self.phi):
            object.__setattr__(self, "phi", tuple(float(p) for p in self.phi))

    def phase_for(self, index):
        return self.phi[index] if isinstance(self.phi, tuple) else self.phi

    def as_dict(self):
        out = {"T0": self.T0, "Omega0": self.Omega0, "delta_MW_ramsey": self.delta_MW_ramsey,
               "delta_MW_echo": self.delta_MW_echo, "eta": self.eta,
               "rabi_damping_rate": self.rabi_damping_rate}
        for i, c in enumerate(self.C_values):
            out[f"C[{i}]"] = c
        if isinstance(self.phi, tuple):
            for i, p in enumerate(self.phi):
                out[f"phi[{i}]"] = p
        else:
            out["phi"] = self.phi
        return out


def echo_times(datasets):
    """Sorted distinct echo times; ``C_values[i]`` belongs to ``echo_times(...)[i]``."""
    return sorted({float(d.t_echo) for d in datasets if d.kind == "echo"})


def _echo_index(dataset, t_echoes):
    return t_echoes.index(float(dataset.t_echo))


def model_probability(params, dataset, spectrum, t_echoes, pulse_mode="detuned", tie=False):
    """``p_model`` for one dataset (without the ``eta`` scale)."""
    if dataset.kind == "rabi":
        return rabi_probability(params.Omega0, params.delta_MW_ramsey + dataset.mw_offset,
                                dataset.times, spectrum, params.T0, params.rabi_damping_rate)
    if dataset.kind == "ramsey":
        return ramsey_probability(params.Omega0, params.delta_MW_ramsey + dataset.mw_offset,
                                  dataset.times, spectrum, params.T0, pulse_mode)
    i = _echo_index(dataset, t_echoes)
    delta = params.delta_MW_ramsey if tie else params.delta_MW_echo
    return echo_probability(params.Omega0, delta + dataset.mw_offset, dataset.times,
                            dataset.t_echo, params.C_values[i], params.phase_for(i), spectrum,
                            params.T0, pulse_mode)


def residuals(params, datasets, spectrum, pulse_mode="detuned", tie_detuning=False):
    """Weighted residuals ``sqrt(w) (signal - eta p_model)`` in dataset order."""
    datasets = _check_datasets(datasets)
    t_echoes = echo_times(datasets)
    _check_params(params, t_echoes)
    out = []
    for k, d in enumerate(datasets):
        try:
            p = model_probability(params, d, spectrum, t_echoes, pulse_mode, tie_detuning)
        except Exception as exc:  # annotate with the failing dataset
            raise type(exc)(f"dataset {k} ({d.kind}): {exc}") from exc
        out.append(np.sqrt(d.point_weights()) * (d.signal - params.eta * p))
    return np.concatenate(out)


def _check_datasets(datasets):
    datasets = list(datasets)
    if not datasets:
        raise ValidationError("no datasets given")
    for d in datasets:
        if not isinstance(d, Dataset):
            raise ValidationError(f"expected Dataset, got {type(d).__name__}")
    return datasets


def _check_params(params, t_echoes):
    if len(params.C_values) != len(t_echoes):
        raise ValidationError(f"{len(t_echoes)} echo times but {len(params.C_values)} C values")
    if isinstance(params.phi, tuple) and len(params.phi) != len(t_echoes):
        raise ValidationError("per-echo phases must match the number of echo times")


# ------------------------------------------------------------------ layout


class _Layout:
    """Maps the free parameters of a :class:`FitParams` to a scaled vector."""

    def __init__(self, datasets, template, tie_detuning, per_echo_phase, fit_damping):
        kinds = {d.kind for d in datasets}
        self.t_echoes = echo_times(datasets)
        n_echo = len(self.t_echoes)
        names = ["T0", "Omega0"]
        if kinds & {"rabi", "ramsey"} or (tie_detuning and "echo" in kinds):
            names.append("delta_MW_ramsey")
        if "echo" in kinds and not tie_detuning:
            names.append("delta_MW_echo")
        names += [f"C[{i}]" for i in range(n_echo)]
        names.append("eta")
        if n_echo:
            names += [f"phi[{i}]" for i in range(n_echo)] if per_echo_phase else ["phi"]
        if fit_damping:
            names.append("rabi_damping_rate")
        self.names = names
        self.per_echo_phase = per_echo_phase
        phi = template.phi
        if per_echo_phase and not isinstance(phi, tuple):
            phi = (float(phi),) * n_echo
        if not per_echo_phase and isinstance(phi, tuple):
            phi = float(phi[0]) if phi else 0.0
        self.template = replace(template, phi=phi)
        self.scale = np.array([_SCALE.get(n, 1.0) for n in names])

    def to_vector(self, params):
        d = params.as_dict()
        return np.array([d[n] for n in self.names]) / self.scale

    def to_params(self, x):
        values = dict(zip(self.names, np.asarray(x) * self.scale))
        t = self.template
        C = tuple(values.get(f"C[{i}]", c) for i, c in enumerate(t.C_values))
        if isinstance(t.phi, tuple):
            phi = tuple(values.get(f"phi[{i}]", p) for i, p in enumerate(t.phi))
        else:
            phi = values.get("phi", t.phi)
        return FitParams(
            T0=values.get("T0", t.T0), Omega0=values.get("Omega0", t.Omega0),
            delta_MW_ramsey=values.get("delta_MW_ramsey", t.delta_MW_ramsey),
            delta_MW_echo=values.get("delta_MW_echo", t.delta_MW_echo),
            C_values=C, eta=values.get("eta", t.eta), phi=phi,
            rabi_damping_rate=values.get("rabi_damping_rate", t.rabi_damping_rate))

    def bounds(self, user=None):
        lo, hi = [], []
        for n in self.names:
            base = n.split("[")[0]
            b = (user or {}).get(n, (user or {}).get(base))
            if b is None:
                b = {"T0": (1e-9, 1e-3), "Omega0": (1.0, np.inf), "C": (0.0, 1.0),
                     "eta": (1e-12, np.inf), "phi": (-np.pi, np.pi),
                     "rabi_damping_rate": (0.0, np.inf)}.get(base, (-np.inf, np.inf))
            s = _SCALE.get(n, 1.0)
            lo.append(b[0] / s)
            hi.append(b[1] / s)
        return np.array(lo), np.array(hi)


# ------------------------------------------------------------------ results


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of :func:`global_fit`.

    ``errors`` maps parameter names to standard errors or ``None``;
    ``flags`` explains every ``None`` (``at-bound``, ``unidentifiable``).
    """

    params: FitParams
    objective: float
    names: Tuple[str, ...]
    errors: Dict[str, Optional[float]]
    flags: Dict[str, str]
    covariance: Optional[np.ndarray]
    status: int
    message: str
    n_iterations: int
    gradient_norm: float
    start_objectives: Tuple[float, ...] = ()
    n_data: int = 0
    jacobian: Optional[np.ndarray] = field(default=None, repr=False)
    scale: Optional[np.ndarray] = field(default=None, repr=False)
    active: Optional[np.ndarray] = field(default=None, repr=False)
    options: Dict = field(default_factory=dict, repr=False)

    @property
    def converged(self):
        return self.status > 0

    def values(self):
        d = self.params.as_dict()
        return {n: d[n] for n in self.names}


def _horizon_mask(dataset, horizon):
    if horizon is None:
        return np.ones(dataset.times.size, dtype=bool)
    if dataset.kind == "echo":
        return np.abs(dataset.times - dataset.t_echo) <= horizon
    return dataset.times <= horizon


def _slice(dataset, mask):
    if mask.all():
        return dataset
    w = None if dataset.weights is None else dataset.weights[mask]
    return replace(dataset, times=dataset.times[mask], signal=dataset.signal[mask], weights=w)


def global_fit(datasets, spectrum, initial_guess, bounds=None, tie_detuning=False,
               per_echo_phase=False, fit_rabi_damping="auto", pulse_mode="detuned", n_starts=8,
               seed=0, perturbation=0.2, horizons=DEFAULT_HORIZONS, max_nfev=None):
    """Box-constrained multi-start least-squares fit of all datasets at once.

    Parameters
    ----------
    datasets : list of Dataset
    spectrum : VibrationalSpectrum
        Levels used for the thermal sums (``n_max = 70`` for the reference trap).
    initial_guess : FitParams
        Also supplies the values of parameters that are not fitted.
    bounds : dict, optional
        ``name -> (low, high)`` in physical units; names may be bare
        (``"C"``) or indexed (``"C[1]"``).
    tie_detuning : bool
        Use one MW detuning for Ramsey and echo data.
    per_echo_phase : bool
        One final-pulse phase per echo time instead of a global one.
    fit_rabi_damping : bool or "auto"
        ``"auto"`` fits the damping only when a Rabi trace exceeds 1 ms.
    n_starts : int
        The guess itself plus ``n_starts - 1`` random relative perturbations of
        size ``perturbation`` (fixed ``seed``).
    horizons : sequence
        Continuation schedule: each start is refined on data within growing
        time horizons (from the first pulse, or from ``t_echo`` for echoes);
        ``None`` means all data.  ``(None,)`` disables staging.

    Returns
    -------
    FitResult
    """
    datasets = _check_datasets(datasets)
    t_echoes = echo_times(datasets)
    _check_params(initial_guess, t_echoes) if not per_echo_phase or isinstance(
        initial_guess.phi, tuple) else _check_params(replace(initial_guess, phi=0.0), t_echoes)
    if fit_rabi_damping == "auto":
        fit_rabi_damping = any(d.kind == "rabi" and d.times[-1] > DAMPING_FIT_MIN_DURATION
                               for d in datasets)
    layout = _Layout(datasets, initial_guess, tie_detuning, per_echo_phase, bool(fit_rabi_damping))
    lo, hi = layout.bounds(bounds)
    x0 = layout.to_vector(layout.template)
    if np.any(x0 < lo) or np.any(x0 > hi):
        bad = [n for n, a, l, h in zip(layout.names, x0, lo, hi) if not l <= a <= h]
        raise ValidationError(f"initial guess outside bounds: {', '.join(bad)}")
    check_positive(n_starts, "n_starts")

    rng = np.random.default_rng(seed)
    starts = [x0]
    for _ in range(int(n_starts) - 1):
        u = rng.uniform(-perturbation, perturbation, size=x0.size)
        x = np.where(x0 != 0, x0 * (1 + u), u)
        starts.append(np.clip(x, lo, hi))

    staged = [[_slice(d, _horizon_mask(d, h)) for d in datasets] for h in horizons]
    staged = [[d for d in stage if len(d)] for stage in staged]

    def run(x, data, nfev):
        def fun(v):
            return residuals(layout.to_params(v), data, spectrum, pulse_mode, tie_detuning)
        return least_squares(fun, x, bounds=(lo, hi), method="trf", ftol=1e-10, xtol=1e-12,
                             gtol=1e-8, x_scale=1.0, max_nfev=nfev)

    best, objectives = None, []
    for x in starts:
        for stage in staged[:-1]:
            if stage:
                x = np.clip(run(x, stage, None).x, lo, hi)
        sol = run(x, datasets, max_nfev)
        objectives.append(float(2 * sol.cost))
        if best is None or sol.cost < best.cost:
            best = sol

    params = layout.to_params(best.x)
    jac = best.jac
    # trf iterates stay strictly feasible, so active_mask alone can miss a bound
    tol = 1e-6 * np.maximum(1.0, np.abs(best.x))
    active = np.where(best.x - lo <= tol, -1, np.where(hi - best.x <= tol, 1, 0))
    active = np.where(best.active_mask != 0, best.active_mask, active)
    errors, flags, cov = _errors_from_jacobian(jac, best.fun, layout.names, layout.scale,
                                               active)
    opts = dict(tie_detuning=tie_detuning, per_echo_phase=per_echo_phase,
                fit_rabi_damping=bool(fit_rabi_damping), pulse_mode=pulse_mode)
    return FitResult(
        params=params, objective=float(2 * best.cost), names=tuple(layout.names), errors=errors,
        flags=flags, covariance=cov, status=int(best.status), message=str(best.message),
        n_iterations=int(best.nfev), gradient_norm=float(np.max(np.abs(best.grad))),
        start_objectives=tuple(objectives), n_data=int(best.fun.size), jacobian=jac,
        scale=layout.scale, active=active, options=opts)


def _errors_from_jacobian(jac, resid, names, scale, active=None, rank_rtol=1e-8):
    """Standard errors from ``s^2 (J^T J)^{-1}``; flags instead of numbers where undefined."""
    m, p = jac.shape
    flags = {}
    if active is not None:
        for n, a in zip(names, active):
            if a != 0:
                flags[n] = "at-bound"
    free = np.array([n not in flags for n in names])
    J = jac[:, free]
    # column-normalise before the rank test so units do not matter
    norms = np.linalg.norm(J, axis=0)
    zero = norms == 0
    Jn = J / np.where(zero, 1.0, norms)
    _, sv, vt = np.linalg.svd(Jn, full_matrices=False)
    tol = rank_rtol * (sv[0] if sv.size else 0.0)
    null = vt[sv <= tol]
    free_names = [n for n, f in zip(names, free) if f]
    bad = set(np.array(free_names)[zero].tolist())
    if null.size:
        for row in null:
            bad |= {n for n, v in zip(free_names, row) if abs(v) > 1e-3}
    for n in bad:
        flags[n] = "unidentifiable"
    keep = np.array([n not in flags for n in names])
    errors = {n: None for n in names}
    cov_full = None
    dof = m - int(keep.sum())
    if keep.any() and dof > 0:
        Jk = jac[:, keep]
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(Jk.T @ Jk)
        sk = scale[keep]
        cov_phys = cov * np.outer(sk, sk)
        for n, e in zip(np.array(names)[keep], np.sqrt(np.diag(cov_phys))):
            errors[n] = float(e)
        cov_full = np.full((len(names), len(names)), np.nan)
        cov_full[np.ix_(keep, keep)] = cov_phys
    return errors, flags, cov_full


def estimate_errors(result, datasets, spectrum, step=1e-6):
    """Standard errors at ``result.params`` for (possibly different) ``datasets``.

    The Jacobian is recomputed by central differences in the optimiser's
    scaled coordinates; parameters flagged ``at-bound`` in ``result`` stay
    flagged.

    Returns
    -------
    errors : dict
        ``name -> float or None``.
    flags : dict
        ``name -> reason`` for every missing error.
    """
    datasets = _check_datasets(datasets)
    opts = result.options
    layout = _Layout(datasets, result.params, opts["tie_detuning"], opts["per_echo_phase"],
                     opts["fit_rabi_damping"])
    x = layout.to_vector(result.params)

    def fun(v):
        return residuals(layout.to_params(v), datasets, spectrum, opts["pulse_mode"],
                         opts["tie_detuning"])

    r0 = fun(x)
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (fun(xp) - fun(xm)) / (2 * h)
    errors, flags, _ = _errors_from_jacobian(jac, r0, layout.names, layout.scale, result.active)
    return errors, flags


# ---------------------------------------------------------------- estimator


class GlobalCoherenceFit(BaseEstimator):
    """Scikit-learn style wrapper around :func:`global_fit`.

    ``X`` is a list of :class:`Dataset`; ``y`` is ignored because each dataset
    carries its own signal.

    Parameters
    ----------
    spectrum : VibrationalSpectrum
    initial_guess : FitParams
    pulse_mode : {"detuned", "ideal"}
    tie_detuning, per_echo_phase, fit_rabi_damping, n_starts, random_state, perturbation
        See :func:`global_fit`.

    Attributes
    ----------
    result_ : FitResult
    params_ : FitParams
    errors_ : dict
    """

    def __init__(self, spectrum=None, initial_guess=None, pulse_mode="detuned", tie_detuning=False,
                 per_echo_phase=False, fit_rabi_damping="auto", n_starts=8, random_state=0,
                 perturbation=0.2, bounds=None):
        self.spectrum = spectrum
        self.initial_guess = initial_guess
        self.pulse_mode = pulse_mode
        self.tie_detuning = tie_detuning
        self.per_echo_phase = per_echo_phase
        self.fit_rabi_damping = fit_rabi_damping
        self.n_starts = n_starts
        self.random_state = random_state
        self.perturbation = perturbation
        self.bounds = bounds

    def fit(self, X, y=None):
        if self.spectrum is None or self.initial_guess is None:
            raise ValidationError("spectrum and initial_guess must be set before fit")
        self.result_ = global_fit(
            X, self.spectrum, self.initial_guess, bounds=self.bounds,
            tie_detuning=self.tie_detuning, per_echo_phase=self.per_echo_phase,
            fit_rabi_damping=self.fit_rabi_damping, pulse_mode=self.pulse_mode,
            n_starts=self.n_starts, seed=self.random_state, perturbation=self.perturbation)
        self.params_ = self.result_.params
        self.errors_ = self.result_.errors
        self.echo_times_ = echo_times(X)
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("GlobalCoherenceFit is not fitted yet; call fit first")

    def predict(self, X):
        """Model signal ``eta * p_model`` for a dataset or a list of datasets."""
        self._check_fitted()
        single = isinstance(X, Dataset)
        data = [X] if single else list(X)
        out = [self.params_.eta * model_probability(self.params_, d, self.spectrum,
                                                    self.echo_times_, self.pulse_mode,
                                                    self.tie_detuning) for d in data]
        return out[0] if single else out

    def score(self, X, y=None):
        """Weighted coefficient of determination over all points."""
        self._check_fitted()
        data = _check_datasets([X] if isinstance(X, Dataset) else X)
        r = residuals(self.params_, data, self.spectrum, self.pulse_mode, self.tie_detuning)
        s = np.concatenate([np.sqrt(d.point_weights()) * d.signal for d in data])
        w = np.concatenate([np.sqrt(d.point_weights()) for d in data])
        mean = (s @ w) / (w @ w)
        return 1.0 - (r @ r) / np.sum((s - mean * w) ** 2)
