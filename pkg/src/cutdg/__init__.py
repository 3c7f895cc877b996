"""Cut-cell discontinuous Galerkin solvers for linear hyperbolic problems with a material interface."""
__version__ = "0.1.0"
