"""Blinking optical-tweezer simulator and rearrangement schedule compiler."""

__version__ = "0.1.0"
