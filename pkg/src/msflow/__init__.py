"""Mixed multiscale finite element solvers for two-phase flow on
structured 3D grids."""

__version__ = "0.1.0"
