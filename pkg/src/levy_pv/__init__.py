"""Simulation and inference for Lévy-driven moving averages and their power variations."""
__version__ = "0.1.0"
