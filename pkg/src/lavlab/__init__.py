"""Numerical laboratory for anisotropic Musielak-Orlicz energies."""

__version__ = "0.1.0"
