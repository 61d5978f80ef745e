"""Simulation of trapped-ion logic schemes that share a collective phonon mode."""
__version__ = "0.1.0"

from . import chain, dynamics, effham, hilbert  # noqa: F401
