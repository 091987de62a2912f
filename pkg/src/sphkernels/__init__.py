"""Spectra of dot-product kernels on the sphere, deep and shallow."""

from .errors import SphKernelsError
from .kernels import KernelSpec, kernel_eval
from .endpoints import decay_prediction, endpoint_expansion
from .series import PowerSeries, kernel_series
from .spectrum import Spectrum, compute_spectrum, fit_decay, mu_quadrature, mu_series

__all__ = [
    "SphKernelsError",
    "KernelSpec",
    "kernel_eval",
    "decay_prediction",
    "endpoint_expansion",
    "PowerSeries",
    "kernel_series",
    "Spectrum",
    "compute_spectrum",
    "fit_decay",
    "mu_quadrature",
    "mu_series",
]

__version__ = "0.1.0"
