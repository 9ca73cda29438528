"""YAML run configuration with a fixed schema.

Physical quantities must be strings with units (``"71 uK"``, ``"-5 kHz"``);
bare numbers are rejected for them.  Unknown keys are errors.  The file may be
given with ``--config`` or through the ``TRAPCOHERENCE_CONFIG`` environment
variable.  Example::

    format_version: 1
    trap:
      backend: model            # or: table
      trap_frequency: 200 kHz
      minimum_position: 200 nm
      decay_lengths: [200 nm, 450 nm]
      n_max: 70
    spin:
      temperature: 71 uK
      detuning: -5 kHz
      rabi_frequency: 17 kHz
    lindblad:
      kappa: 350 /s
      n_max: 30
      t_echo_grid: {start: 0.5 ms, stop: 6 ms, step: 0.5 ms}
"""

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import yaml

from .errors import ValidationError
from .units import parse_quantity

ENV_VAR = "TRAPCOHERENCE_CONFIG"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrapConfig:
    backend: str = "model"
    table: Optional[str] = None
    trap_frequency: float = 2 * np.pi * 200e3
    minimum_position: float = 200e-9
    decay_lengths: Tuple[float, float] = (200e-9, 450e-9)
    grid_points: int = 16000
    extent_factor: float = 5.0
    n_max: int = 70
    shift_scale: Optional[float] = None
    shift_sign: float = -1.0
    calibration_temperature: float = 71e-6
    calibration_t2_star: float = 0.6e-3


@dataclass(frozen=True)
class SpinConfig:
    temperature: float = 71e-6
    detuning: float = -2 * np.pi * 5e3
    rabi_frequency: float = 2 * np.pi * 17e3
    pulse_mode: str = "ideal"
    rabi_damping_time: Optional[float] = 3.4e-3


@dataclass(frozen=True)
class LindbladConfig:
    kappa: float = 350.0
    n_max: int = 30
    rtol: float = 1e-9
    atol: float = 1e-12
    t_echo_grid: Tuple[float, ...] = tuple(i * 0.5e-3 for i in range(1, 13))
    window: float = 0.5e-3
    step: float = 1e-6
    method: str = "peak_to_trough"
    n_jobs: int = 1


@dataclass(frozen=True)
class FitConfig:
    n_starts: int = 8
    seed: int = 0
    tie_detuning: bool = False
    per_echo_phase: bool = False
    pulse_mode: str = "detuned"


@dataclass(frozen=True)
class RunConfig:
    trap: TrapConfig = field(default_factory=TrapConfig)
    spin: SpinConfig = field(default_factory=SpinConfig)
    lindblad: LindbladConfig = field(default_factory=LindbladConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    format_version: int = FORMAT_VERSION

    def as_dict(self):
        return asdict(self)


# key -> dimension for unit-carrying values
_DIMENSIONS = {
    "trap_frequency": "frequency", "minimum_position": "length", "decay_lengths": "length",
    "calibration_temperature": "temperature", "calibration_t2_star": "time",
    "temperature": "temperature", "detuning": "frequency", "rabi_frequency": "frequency",
    "rabi_damping_time": "time", "kappa": "rate", "window": "time", "step": "time",
    "t_echo_grid": "time",
}
_CHOICES = {"backend": ("model", "table"), "pulse_mode": ("ideal", "detuned"),
            "method": ("peak_to_trough", "sinusoid")}
_SECTIONS = {"trap": TrapConfig, "spin": SpinConfig, "lindblad": LindbladConfig, "fit": FitConfig}


def _quantity(value, dim, where):
    if isinstance(value, bool) or not isinstance(value, str):
        raise ValidationError(f"{where}: {value!r} needs an explicit unit")
    try:
        return parse_quantity(value, dim)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _grid(value, where):
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "step"}
        if extra or len(value) != 3:
            raise ValidationError(f"{where}: grid needs exactly start, stop, step")
        a, b, h = (_quantity(value[k], "time", f"{where}.{k}") for k in ("start", "stop", "step"))
        if h <= 0 or b < a:
            raise ValidationError(f"{where}: invalid grid range")
        n = int(np.floor((b - a) / h + 1e-9)) + 1
        return tuple(float(a + i * h) for i in range(n))
    if isinstance(value, list):
        return tuple(_quantity(v, "time", f"{where}[{i}]") for i, v in enumerate(value))
    raise ValidationError(f"{where}: expected a list or a start/stop/step mapping")


def _coerce(section, key, value, default):
    where = f"{section}.{key}"
    if key == "t_echo_grid":
        return _grid(value, where)
    if key in _DIMENSIONS:
        if value is None and default is None:
            return None
        if key == "decay_lengths":
            if not isinstance(value, list) or len(value) != 2:
                raise ValidationError(f"{where}: expected two lengths")
            return tuple(_quantity(v, "length", f"{where}[{i}]") for i, v in enumerate(value))
        return _quantity(value, _DIMENSIONS[key], where)
    if key in _CHOICES:
        if value not in _CHOICES[key]:
            raise ValidationError(f"{where}: must be one of {_CHOICES[key]}, got {value!r}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"{where}: expected true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{where}: expected an integer, got {value!r}")
        return value
    if key == "table":
        return None if value is None else str(value)
    if isinstance(value, str):
        # YAML 1.1 reads "1e-9" as a string
        try:
            return float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value is None:
        if value is None and default is None:
            return None
        raise ValidationError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_config(data, base_dir=None):
    """Validate a config mapping (parsed YAML) into a :class:`RunConfig`."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError("config must be a mapping")
    unknown = sorted(set(data) - set(_SECTIONS) - {"format_version"})
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    version = data.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported config format_version {version!r}")
    parts = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            raise ValidationError(f"config section {name!r} must be a mapping")
        defaults = cls()
        allowed = {f.name for f in fields(cls)}
        bad = sorted(set(section) - allowed)
        if bad:
            raise ValidationError(f"unknown keys in {name}: {', '.join(bad)}")
        kwargs = {k: _coerce(name, k, v, getattr(defaults, k)) for k, v in section.items()}
        parts[name] = replace(defaults, **kwargs)
    trap = parts["trap"]
    if trap.backend == "table":
        if not trap.table:
            raise ValidationError("trap.backend 'table' needs trap.table")
        if base_dir is not None and not Path(trap.table).is_absolute():
            parts["trap"] = replace(trap, table=str(Path(base_dir) / trap.table))
    return RunConfig(**parts, format_version=version)


def load_config(path=None):
    """Read ``path``, else ``$TRAPCOHERENCE_CONFIG``, else return defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file {p} not found")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"config file {p}: {exc}") from None
    return parse_config(data, base_dir=p.parent)


def build_spectrum(config, n_max=None):
    """Spectrum for ``config.trap`` (model backend is calibrated and cached).

    Returns
    -------
    spectrum : VibrationalSpectrum
    model : RadialPotentialModel or None
    shift_scale : float or None
    """
    from .io import read_light_shift_table
    from .presets import OperatingPoint, calibrated_spectrum
    from .spectrum import GridSpec

    trap = config.trap
    n = trap.n_max if n_max is None else n_max
    if trap.backend == "table":
        sp = read_light_shift_table(trap.table)
        return (sp if n >= sp.n_max else sp.truncate(n)), None, None
    point = OperatingPoint(trap_frequency=trap.trap_frequency,
                           minimum_position=trap.minimum_position,
                           temperature=trap.calibration_temperature,
                           t2_star=trap.calibration_t2_star, n_max_fit=trap.n_max,
                           shift_sign=trap.shift_sign)
    return calibrated_spectrum(n, trap.decay_lengths, GridSpec(trap.grid_points, trap.extent_factor),
                               point, shift_scale=trap.shift_scale)
