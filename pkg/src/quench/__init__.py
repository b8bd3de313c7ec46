"""Numerical laboratory for quenching of u_t = u_xx - u^p with p < 0."""

__version__ = "0.1.0"
