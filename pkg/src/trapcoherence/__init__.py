"""Coherence of a spin qubit in an anharmonic, heated optical trap.

Submodules
----------
spectrum   radial trap potential, vibrational levels, thermal weights
spin       pulse sequences and thermally averaged Rabi, Ramsey and echo signals
lindblad   joint spin-motion master equation with motional heating
fit        global least-squares fit of Rabi, Ramsey and echo data
dsl, io, config, cli
           sequence language, file formats, run configuration, command line
"""

__version__ = "0.1.0"

from .errors import (IntegrationError, NotFittedError, NumericalError, ParseError,  # noqa: E402
                     TrapCoherenceError, ValidationError)

__all__ = ["__version__", "TrapCoherenceError", "ValidationError", "ParseError",
           "NumericalError", "IntegrationError", "NotFittedError"]
