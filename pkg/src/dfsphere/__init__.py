"""Spectral solvers for stiff PDEs on the sphere using the double Fourier sphere method."""

from .fourier_core import GridSpec, coeffs_to_vals, make_grid, vals_to_coeffs

__version__ = "0.1.0"

__all__ = ["GridSpec", "coeffs_to_vals", "make_grid", "vals_to_coeffs", "__version__"]
