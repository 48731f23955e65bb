"""Simulation and exact analysis of the open-boundary simple exclusion process."""

__version__ = "0.1.0"
