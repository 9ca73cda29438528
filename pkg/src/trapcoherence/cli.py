"""Command-line interface.

Subcommands: ``trap-spectrum``, ``simulate rabi|ramsey|echo``,
``lindblad-echo``, ``fit`` and ``sequence``.  Exit status is 0 on success, 1
for invalid input and 2 for numerical failures; errors are also reported as
one JSON line on standard error.
"""

import argparse
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import build_spectrum, load_config
from .errors import NumericalError, TrapCoherenceError, ValidationError
from .units import parse_quantity


_ZERO = re.compile(r"^\s*[+-]?(?:0+\.?0*|\.0+)\s*$")
_NEGATIVE = re.compile(r"^-\.?\d")


def _join_negative_values(argv):
    """``--detuning -5kHz`` -> ``--detuning=-5kHz`` so argparse does not see a flag."""
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _quantity(dimension):
    def conv(text):
        # zero is the same in every unit, so a bare 0 is accepted
        if _ZERO.match(text):
            return 0.0
        return parse_quantity(text, dimension)
    conv.__name__ = dimension
    return conv


def _emit(text, output):
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _header(args, config, extra=None):
    from .io import reproducibility_header
    payload = {"command": args.command, "config": config.as_dict(),
               "args": {k: v for k, v in sorted(vars(args).items())
                        if k not in ("func", "output", "no_timestamp", "config", "report", "csv")}}
    if extra:
        payload.update(extra)
    return reproducibility_header(payload, seed=getattr(args, "seed", None),
                                  timestamp=not args.no_timestamp)


def _time_grid(start, stop, step):
    if step <= 0:
        raise ValidationError("time step must be positive")
    if stop < start:
        raise ValidationError("tmax must not be smaller than tmin")
    n = int(np.floor((stop - start) / step * (1 + 1e-12))) + 1
    return start + step * np.arange(n)


# ---------------------------------------------------------------- commands


def cmd_trap_spectrum(args, config):
    from .io import format_light_shift_table
    sp, model, scale = build_spectrum(config, args.n_max)
    header = _header(args, config)
    if scale is not None:
        header.append(f"shift_scale: {scale!r}")
    _emit(format_light_shift_table(sp, header), args.output)
    return 0


def cmd_simulate(args, config):
    from .io import format_csv
    from .spin import echo_probability, rabi_probability, ramsey_probability
    spin = config.spin
    T = spin.temperature if args.T is None else args.T
    det = spin.detuning if args.detuning is None else args.detuning
    rabi = spin.rabi_frequency if args.rabi is None else args.rabi
    mode = args.pulse_mode or spin.pulse_mode
    sp, _, _ = build_spectrum(config)
    if args.kind == "echo":
        te = args.t_echo
        tmin = max(te / 2, te - 0.5e-3) if args.tmin is None else args.tmin
        tmax = te + 0.5e-3 if args.tmax is None else args.tmax
    else:
        tmin = 0.0 if args.tmin is None else args.tmin
        tmax = 1.5e-3 if args.tmax is None else args.tmax
    t = _time_grid(tmin, tmax, args.tstep)
    if args.kind == "rabi":
        tau = args.damping_time if args.damping_time is not None else spin.rabi_damping_time
        p = rabi_probability(rabi, det, t, sp, T, 0.0 if not tau else 1.0 / tau)
    elif args.kind == "ramsey":
        p = ramsey_probability(rabi, det, t, sp, T, mode, args.phase)
    else:
        p = echo_probability(rabi, det, t, args.t_echo, args.C, args.phase, sp, T, mode)
    label = "t_pulse_ms" if args.kind == "rabi" else "t_d_ms"
    rows = [(float(a) * 1e3, float(b)) for a, b in zip(t, p)]
    _emit(format_csv([label, "p_e"], rows, _header(args, config)), args.output)
    return 0


def cmd_lindblad_echo(args, config):
    from .io import format_coherence_curve
    from .lindblad import HeatingModel, extract_C_heat
    lb = config.lindblad
    kappa = lb.kappa if args.kappa is None else args.kappa
    n_max = lb.n_max if args.n_max is None else args.n_max
    T0 = config.spin.temperature if args.T0 is None else args.T0
    grid = lb.t_echo_grid if args.t_echo is None else args.t_echo
    sp, _, _ = build_spectrum(config)
    model = HeatingModel(kappa, sp, n_max=n_max, rtol=lb.rtol, atol=lb.atol)
    curve = extract_C_heat(model, config.spin.rabi_frequency, config.spin.detuning, T0, grid,
                           lb.window, lb.step, lb.method, config.spin.pulse_mode,
                           args.jobs or lb.n_jobs)
    header = _header(args, config)
    header.append(f"heating_rate_mK_per_s: {model.heating_rate() * 1e3!r}")
    _emit(format_coherence_curve(curve, header), args.output)
    if curve.T2 is None:
        print("T2 = not reached on the t_echo grid")
    else:
        print(f"T2 = {curve.T2 * 1e3:.3f} ms ({curve.quality})")
    return 0


_GUESS_KEYS = {"T0": "temperature", "Omega0": "frequency", "delta_MW_ramsey": "frequency",
               "delta_MW_echo": "frequency", "rabi_damping_time": "time"}


def _initial_guess(path, config, datasets):
    from .fit import FitParams, echo_times
    spin = config.spin
    values = {"T0": spin.temperature, "Omega0": spin.rabi_frequency,
              "delta_MW_ramsey": spin.detuning, "delta_MW_echo": spin.detuning,
              "rabi_damping_time": spin.rabi_damping_time or 3.4e-3, "C": 0.8, "phi": 0.0,
              "eta": float(max(d.signal.max() for d in datasets))}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValidationError("initial guess file must be a mapping")
        bad = sorted(set(data) - set(values))
        if bad:
            raise ValidationError(f"unknown initial guess keys: {', '.join(bad)}")
        for k, v in data.items():
            if k in _GUESS_KEYS:
                if not isinstance(v, str):
                    raise ValidationError(f"initial guess {k}: {v!r} needs an explicit unit")
                values[k] = parse_quantity(v, _GUESS_KEYS[k])
            else:
                values[k] = v
    n_echo = len(echo_times(datasets))
    C = values["C"]
    C = tuple(float(c) for c in C) if isinstance(C, list) else (float(C),) * n_echo
    phi = values["phi"]
    phi = tuple(float(p) for p in phi) if isinstance(phi, list) else float(phi)
    return FitParams(T0=values["T0"], Omega0=values["Omega0"],
                     delta_MW_ramsey=values["delta_MW_ramsey"],
                     delta_MW_echo=values["delta_MW_echo"], C_values=C, eta=float(values["eta"]),
                     phi=phi, rabi_damping_rate=1.0 / values["rabi_damping_time"])


def cmd_fit(args, config):
    from .fit import global_fit
    from .io import format_fit_csv, format_fit_report, load_dataset
    datasets = [load_dataset(p) for p in args.data]
    fc = config.fit
    seed = fc.seed if args.seed is None else args.seed
    args.seed = seed
    guess = _initial_guess(args.guess, config, datasets)
    sp, _, _ = build_spectrum(config)
    result = global_fit(datasets, sp, guess, tie_detuning=args.tie_detuning or fc.tie_detuning,
                        per_echo_phase=args.per_echo_phase or fc.per_echo_phase,
                        pulse_mode=args.pulse_mode or fc.pulse_mode,
                        n_starts=args.n_starts or fc.n_starts, seed=seed)
    files = {str(p): Path(p).read_text() for p in args.data}
    header = _header(args, config, {"data": files})
    _emit(format_fit_report(result, header), args.report)
    if args.csv:
        Path(args.csv).write_text(format_fit_csv(result, header))
    return 0 if result.converged else 2


def cmd_sequence(args, config):
    from .dsl import parse_sequence
    from .io import format_csv
    from .spin import evaluate_sequence
    text = Path(args.file).read_text()
    seq = parse_sequence(text, config.spin.rabi_frequency)
    if args.detuning is not None:
        seq = replace(seq, microwave_detuning=args.detuning)
    T = config.spin.temperature if args.T is None else args.T
    sp, _, _ = build_spectrum(config)
    header = _header(args, config, {"program": text})
    if seq.has_scan:
        t = _time_grid(args.tmin, 1.5e-3 if args.tmax is None else args.tmax, args.tstep)
        p = evaluate_sequence(seq, sp, T, t)
        rows = [(float(a) * 1e3, float(b)) for a, b in zip(t, p)]
        _emit(format_csv(["t_scan_ms", "p_e"], rows, header), args.output)
    else:
        p = evaluate_sequence(seq, sp, T)
        _emit(format_csv(["p_e"], [(float(p),)], header), args.output)
    return 0


# ------------------------------------------------------------------ parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (default: $TRAPCOHERENCE_CONFIG)")
    common.add_argument("--output", "-o", help="output file (default: stdout)")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp line from the header")

    parser = _Parser(prog="trapcoherence", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"trapcoherence {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("trap-spectrum", parents=[common], help="tabulate E_n and delta_ls(n)")
    p.add_argument("--n-max", type=int, default=None)
    p.set_defaults(func=cmd_trap_spectrum)

    p = sub.add_parser("simulate", parents=[common], help="closed-form Rabi/Ramsey/echo signal")
    p.add_argument("kind", choices=("rabi", "ramsey", "echo"))
    p.add_argument("--T", type=_quantity("temperature"))
    p.add_argument("--detuning", type=_quantity("frequency"))
    p.add_argument("--rabi", type=_quantity("frequency"))
    p.add_argument("--tmin", type=_quantity("time"))
    p.add_argument("--tmax", type=_quantity("time"))
    p.add_argument("--tstep", type=_quantity("time"), default=1e-6)
    p.add_argument("--t-echo", type=_quantity("time"), default=2e-3)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--phase", type=float, default=0.0, help="final pulse phase (rad)")
    p.add_argument("--damping-time", type=_quantity("time"))
    p.add_argument("--pulse-mode", choices=("ideal", "detuned"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lindblad-echo", parents=[common], help="C_heat(t_echo) and T2 under heating")
    p.add_argument("--kappa", type=_quantity("rate"))
    p.add_argument("--T0", type=_quantity("temperature"))
    p.add_argument("--n-max", type=int)
    p.add_argument("--t-echo", type=_quantity("time"), nargs="+")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_lindblad_echo)

    p = sub.add_parser("fit", parents=[common], help="global fit of dataset files")
    p.add_argument("data", nargs="+", help="dataset CSV files (sidecar .meta.yaml next to each)")
    p.add_argument("--guess", help="YAML initial guess")
    p.add_argument("--report", help="text report file (default: stdout)")
    p.add_argument("--csv", help="parameter CSV file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-starts", type=int)
    p.add_argument("--tie-detuning", action="store_true")
    p.add_argument("--per-echo-phase", action="store_true")
    p.add_argument("--pulse-mode", choices=("ideal", "detuned"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sequence", parents=[common], help="evaluate a pulse-sequence program")
    p.add_argument("file")
    p.add_argument("--T", type=_quantity("temperature"))
    p.add_argument("--detuning", type=_quantity("frequency"))
    p.add_argument("--tmin", type=_quantity("time"), default=0.0)
    p.add_argument("--tmax", type=_quantity("time"))
    p.add_argument("--tstep", type=_quantity("time"), default=1e-6)
    p.set_defaults(func=cmd_sequence)
    return parser


def main(argv=None):
    """Run the CLI; returns the exit status."""
    try:
        argv = sys.argv[1:] if argv is None else list(argv)
        args = build_parser().parse_args(_join_negative_values(argv))
        config = load_config(args.config)
        return args.func(args, config)
    except SystemExit as exc:       # --help / --version
        return int(exc.code or 0)
    except (ValidationError, OSError) as exc:
        return _fail(exc, 1)
    except NumericalError as exc:
        return _fail(exc, 2)
    except TrapCoherenceError as exc:  # pragma: no cover
        return _fail(exc, 1)


def _fail(exc, code):
    line = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(line) + "\n")
    return code
