"""Blockwise power-optimal multiple testing with strong FWER control."""

from .densities import (
    AltDensity,
    GrenanderFit,
    beta_density,
    cdf_G,
    density_from_spec,
    fit_grenander,
    grenander_density,
    mixnorm_density,
    sup_norm_distance,
    tdist_density,
    truncnorm_density,
    uniform_density,
)
from .quadrature import QGrid, build_qgrid, integrate_on_Q

__all__ = [
    "AltDensity",
    "GrenanderFit",
    "QGrid",
    "beta_density",
    "build_qgrid",
    "cdf_G",
    "density_from_spec",
    "fit_grenander",
    "grenander_density",
    "integrate_on_Q",
    "mixnorm_density",
    "sup_norm_distance",
    "tdist_density",
    "truncnorm_density",
    "uniform_density",
]
