"""Space-time Galerkin boundary elements for the heat equation single-layer operator."""
__version__ = "0.1.0"
