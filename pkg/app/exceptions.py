"""
Exception types for the qubit readout simulator.
"""
import math
from typing import Optional


class QsimError(Exception):
    """Base class for simulator errors."""


class NetlistError(QsimError, ValueError):
    """Invalid netlist content or construction."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NetlistSyntaxError(NetlistError):
    """A netlist line that does not match the grammar."""


class SolverError(QsimError):
    """The AC system could not be solved at a frequency."""

    def __init__(self, message: str, omega: Optional[float] = None):
        self.omega = omega
        if omega is not None:
            message = f"{message} (omega={omega:.9g} rad/s, f={omega / (2 * math.pi):.9g} Hz)"
        super().__init__(message)


class UnphysicalInputError(QsimError, ValueError):
    """Input values outside the physically meaningful domain."""
