"""Numerical laboratory for localized enstrophy-flux cascade diagnostics in 3D MHD."""

__version__ = "0.1.0"
