"""Numerical laboratory for lifespan and gradient blowup of 2-D quasilinear waves."""

__version__ = "0.1.0"
