"""Simulation bench for comparing scooter speed-restriction strategies."""

__version__ = "0.1.0"

from .powertrain import Strategy

__all__ = ["Strategy", "__version__"]
