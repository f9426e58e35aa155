"""
teleop-staffing - staffing levels for service systems with large batch arrivals.

The implementation lives in app.src; app.__main__ is the command-line entry point.
"""

__version__ = "0.3.0"
__author__ = "teleop-staffing contributors"
