"""Radial vortex profiles, escape phase diagrams and symmetry witnesses on the unit ball."""

__version__ = "0.1.0"
