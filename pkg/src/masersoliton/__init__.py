"""Simulation and analysis tools for a whispering-gallery-mode maser soliton system."""

__version__ = "0.1.0"
