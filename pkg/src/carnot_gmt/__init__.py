"""Carnot-group geometry and geometric-measure computations on hypersurfaces."""

__version__ = "0.1.0"
