"""File formats: light-shift tables, datasets, fit reports and run headers.

Every numeric conversion on read is a single correctly rounded operation on
the exact decimal value (``float(Fraction(text) * factor)``), and writers
search for the shortest decimal that reads back to the identical float.
Export followed by import is therefore bit-exact.
"""

import hashlib
import json
import math
from datetime import datetime, timezone
from decimal import Context, Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .fit import Dataset, KINDS
from .spectrum import VibrationalSpectrum
from .units import KHZ

FORMAT_VERSION = 1
_F_KHZ = Fraction(KHZ)          # ordinary kHz -> rad/s, the float 2 pi * 1000 taken exactly
_F_MS = Fraction(1, 1000)


def decode(text, factor=Fraction(1)):
    """``float(exact(text) * factor)`` with one rounding."""
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"not a number: {text!r}") from None
    try:
        return float(value * factor)
    except OverflowError:
        raise ValidationError(f"value out of range: {text!r}") from None


def encode(x, factor=Fraction(1)):
    """Shortest decimal string ``s`` with ``decode(s, factor) == x``."""
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"cannot encode non-finite value {x!r}")
    exact = Fraction(x) / factor
    try:
        guess = repr(float(exact))
    except OverflowError:       # x / factor lies beyond the float range
        guess = None
    if guess is not None and decode(guess, factor) == x:
        return guess
    for digits in range(17, 60):
        s = str(Context(prec=digits).divide(Decimal(exact.numerator), Decimal(exact.denominator)))
        if decode(s, factor) == x:
            return s
    raise ValidationError(f"no decimal representation found for {x!r}")  # pragma: no cover


def _data_lines(text):
    """``(line_number, content)`` skipping blank and ``#`` lines."""
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s and not s.startswith("#"):
            yield i, raw


# ------------------------------------------------------------ light shifts


def read_light_shift_table(source):
    """Parse a ``n <TAB> E_n_kHz <TAB> delta_ls_kHz`` table.

    Parameters
    ----------
    source : str or path-like
        File path, or the table text itself if it contains a newline.

    Returns
    -------
    VibrationalSpectrum
        Energies and light shifts in rad/s; no eigenfunctions.
    """
    text = _read_text(source)
    rows = []
    for lineno, raw in _data_lines(text):
        fields = raw.strip().split("\t")
        if len(fields) != 3:
            fields = raw.split()
        if len(fields) != 3:
            raise ParseError(f"expected 3 columns, found {len(fields)}", lineno, 1,
                             expected=("n<TAB>E_kHz<TAB>delta_kHz",))
        try:
            n = int(fields[0])
        except ValueError:
            raise ParseError(f"level index {fields[0]!r} is not an integer", lineno, 1) from None
        if n != len(rows):
            raise ParseError(f"expected level n={len(rows)}, found n={n}", lineno, 1)
        try:
            e, d = decode(fields[1], _F_KHZ), decode(fields[2], _F_KHZ)
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from None
        rows.append((e, d))
    if not rows:
        raise ValidationError("light-shift table has no data rows")
    arr = np.array(rows)
    try:
        return VibrationalSpectrum(arr[:, 0], arr[:, 1])
    except ValidationError as exc:
        raise ValidationError(f"invalid light-shift table: {exc}") from None


def format_light_shift_table(spectrum, header=()):
    lines = [f"# {h}" for h in header]
    lines.append("# n\tE_n_kHz\tdelta_ls_kHz")
    for n, (e, d) in enumerate(zip(spectrum.energies, spectrum.light_shifts)):
        lines.append(f"{n}\t{encode(e, _F_KHZ)}\t{encode(d, _F_KHZ)}")
    return "\n".join(lines) + "\n"


def write_light_shift_table(path, spectrum, header=()):
    Path(path).write_text(format_light_shift_table(spectrum, header))


# ----------------------------------------------------------------- datasets


def sidecar_path(path):
    """Metadata file next to a dataset CSV: ``data.csv -> data.meta.yaml``."""
    p = Path(path)
    return p.with_name(p.stem + ".meta.yaml")


_META_KEYS = {"format_version", "kind", "t_echo_ms", "alpha", "shots", "mw_offset_kHz", "name"}


def _parse_metadata(meta):
    if not isinstance(meta, dict):
        raise ValidationError("dataset metadata must be a mapping")
    unknown = sorted(set(meta) - _META_KEYS)
    if unknown:
        raise ValidationError(f"unknown metadata keys: {', '.join(unknown)}")
    version = meta.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported dataset format_version {version!r}")
    if meta.get("kind") not in KINDS:
        raise ValidationError(f"metadata kind must be one of {KINDS}, got {meta.get('kind')!r}")
    out = {"kind": meta["kind"], "name": str(meta.get("name", ""))}
    if meta.get("t_echo_ms") is not None:
        out["t_echo"] = decode(str(meta["t_echo_ms"]), _F_MS)
    if meta.get("mw_offset_kHz") is not None:
        out["mw_offset"] = decode(str(meta["mw_offset_kHz"]), _F_KHZ)
    if meta.get("alpha") is not None:
        out["alpha"] = float(meta["alpha"])
    if meta.get("shots") is not None:
        shots = meta["shots"]
        if isinstance(shots, bool) or not isinstance(shots, int) or shots <= 0:
            raise ValidationError(f"shots must be a positive integer, got {shots!r}")
        out["shots"] = shots
    return out


def load_dataset(path, metadata=None):
    """Read a ``t_ms, signal[, weight]`` CSV into a :class:`Dataset`.

    Parameters
    ----------
    path : path-like
    metadata : dict or path-like, optional
        Sidecar contents (``kind``, ``t_echo_ms``, ``alpha``, ``shots``,
        ``mw_offset_kHz``, ``format_version``).  Defaults to
        :func:`sidecar_path` of ``path``.

    Raises
    ------
    ParseError
        Malformed rows, with the file line number.
    ValidationError
        Non-monotone times (naming the row), bad metadata.
    """
    path = Path(path)
    if metadata is None or isinstance(metadata, (str, Path)):
        meta_path = sidecar_path(path) if metadata is None else Path(metadata)
        if not meta_path.exists():
            raise ValidationError(f"dataset metadata file {meta_path} not found")
        metadata = yaml.safe_load(meta_path.read_text())
    meta = _parse_metadata(metadata)
    lines = list(_data_lines(path.read_text()))
    if not lines:
        raise ValidationError(f"{path}: no header row")
    hline, header = lines[0]
    cols = [c.strip() for c in header.split(",")]
    if cols not in (["t_ms", "signal"], ["t_ms", "signal", "weight"]):
        raise ParseError(f"bad header {header.strip()!r}", hline, 1,
                         expected=("t_ms, signal", "t_ms, signal, weight"))
    t, s, w, linenos = [], [], [], []
    for lineno, raw in lines[1:]:
        fields = raw.split(",")
        if len(fields) != len(cols):
            raise ParseError(f"expected {len(cols)} columns, found {len(fields)}", lineno, 1)
        try:
            t.append(decode(fields[0], _F_MS))
            s.append(decode(fields[1]))
            if len(cols) == 3:
                w.append(decode(fields[2]))
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from None
        linenos.append(lineno)
    if not t:
        raise ValidationError(f"{path}: no data rows")
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise ValidationError(f"{path}: times not strictly increasing at line {linenos[bad[0] + 1]}")
    return Dataset(meta["kind"], np.array(t), np.array(s), np.array(w) if w else None,
                   t_echo=meta.get("t_echo"), mw_offset=meta.get("mw_offset", 0.0),
                   alpha=meta.get("alpha"), shots=meta.get("shots"), name=meta["name"])


def dataset_metadata(dataset):
    meta = {"format_version": FORMAT_VERSION, "kind": dataset.kind}
    if dataset.t_echo is not None:
        meta["t_echo_ms"] = encode(dataset.t_echo, _F_MS)
    if dataset.mw_offset:
        meta["mw_offset_kHz"] = encode(dataset.mw_offset, _F_KHZ)
    if dataset.alpha is not None:
        meta["alpha"] = float(dataset.alpha)
    if dataset.shots is not None:
        meta["shots"] = int(dataset.shots)
    if dataset.name:
        meta["name"] = dataset.name
    return meta


def save_dataset(path, dataset, header=()):
    """Write the CSV and its sidecar; :func:`load_dataset` reads both back exactly."""
    path = Path(path)
    cols = "t_ms, signal" + (", weight" if dataset.weights is not None else "")
    lines = [f"# {h}" for h in header] + [cols]
    for i in range(len(dataset)):
        row = [encode(dataset.times[i], _F_MS), encode(dataset.signal[i])]
        if dataset.weights is not None:
            row.append(encode(dataset.weights[i]))
        lines.append(", ".join(row))
    path.write_text("\n".join(lines) + "\n")
    sidecar_path(path).write_text(yaml.safe_dump(dataset_metadata(dataset), sort_keys=True))


# ------------------------------------------------------ reproducibility


def config_hash(payload):
    """SHA-256 of the canonical JSON form of ``payload``."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)
    return "sha256:" + hashlib.sha256(blob.encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def reproducibility_header(payload, seed=None, timestamp=True):
    """Comment lines (without ``#``) identifying a run.

    The timestamp is not part of ``payload`` and therefore not hashed.
    """
    from . import __version__
    lines = [f"trapcoherence {__version__}", f"format_version: {FORMAT_VERSION}",
             f"config_hash: {config_hash(payload)}", f"seed: {seed if seed is not None else 'none'}"]
    if timestamp:
        lines.append("timestamp: " + datetime.now(timezone.utc).isoformat(timespec="seconds"))
    return lines


def format_csv(columns, rows, header=()):
    """CSV text with ``# `` comment header lines and ``repr`` floats."""
    out = [f"# {h}" for h in header] + [", ".join(columns)]
    for row in rows:
        out.append(", ".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                             for v in row))
    return "\n".join(out) + "\n"


def format_coherence_curve(curve, header=()):
    text = format_csv(["t_echo_ms", "C_heat"], curve.rows(), header)
    t2 = "none" if curve.T2 is None else repr(curve.T2 * 1e3)
    return text + f"# T2_ms: {t2}\n# quality: {curve.quality}\n"


# ---------------------------------------------------------------- fit results

_UNITS = {"T0": ("uK", 1e-6), "Omega0": ("kHz", KHZ), "delta_MW_ramsey": ("kHz", KHZ),
          "delta_MW_echo": ("kHz", KHZ), "rabi_damping_rate": ("1/ms", 1e3)}


def _display(name, value):
    unit, scale = _UNITS.get(name, ("", 1.0))
    return unit, (None if value is None else value / scale)


def fit_result_rows(result):
    """``(name, value, error, unit, flag)`` in display units."""
    rows = []
    for name, value in result.values().items():
        unit, v = _display(name, value)
        _, e = _display(name, result.errors.get(name))
        rows.append((name, v, e, unit, result.flags.get(name, "")))
    return rows


def format_fit_csv(result, header=()):
    lines = [f"# {h}" for h in header] + ["name, value, error, unit, flag"]
    for name, v, e, unit, flag in fit_result_rows(result):
        err = "" if e is None else repr(float(e))
        lines.append(f"{name}, {float(v)!r}, {err}, {unit}, {flag}")
    return "\n".join(lines) + "\n"


def format_fit_report(result, header=()):
    """Human-readable summary of a :class:`~trapcoherence.fit.FitResult`."""
    lines = [f"# {h}" for h in header]
    lines.append(f"status: {'converged' if result.converged else 'NOT CONVERGED'} "
                 f"({result.message})")
    lines.append(f"objective: {result.objective:.6g}   points: {result.n_data}   "
                 f"evaluations: {result.n_iterations}")
    lines.append("")
    for name, v, e, unit, flag in fit_result_rows(result):
        err = f"+/- {e:.3g}" if e is not None else f"[{flag}]" if flag else ""
        lines.append(f"  {name:<18} {v:>14.6g} {err:<16} {unit}")
    return "\n".join(lines) + "\n"


def _read_text(source):
    if isinstance(source, str) and "\n" in source:
        return source
    return Path(source).read_text()
