"""Batch-arrival queue staffing: mark laws, simulation, Legendre transforms and steady-state analytics."""

from .. import __version__

__all__ = ["__version__"]
