"""Spectral nudging data assimilation for Navier-Stokes and Boussinesq flows."""

from .spectral import (
    Grid,
    SpectralField,
    FlowState,
    Params,
    to_spectral,
    to_physical,
    dealias,
    l2_norm,
    h1_norm,
    lp_norm,
    l2_inner,
    norms,
    apply_A,
    leray_project,
    divergence,
    divergence_l2,
    bilinear_B0,
    bilinear_B1,
    buoyancy_term,
    vertical_velocity,
    random_field,
)

__version__ = "0.1.0"
