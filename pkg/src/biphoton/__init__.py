"""Simulation and analysis toolkit for a gas-filled single-ring PCF biphoton source."""

__version__ = "0.1.0"
