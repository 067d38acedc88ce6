"""Refined linear-frictional contact kernel for 3D DEM, with a desk-scale sphere engine."""

__version__ = "0.1.0"
