"""Wedge-local scattering toolkit: Minkowski geometry, wave packets, modular theory and a truncated Fock model."""

from ._validation import InvariantViolation, PreconditionError

__version__ = "0.1.0"

__all__ = ["InvariantViolation", "PreconditionError", "__version__"]
