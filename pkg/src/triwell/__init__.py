"""Tunnelling splittings and their resonances in symmetric one-dimensional triple wells."""

from .potential import (
    BarrierAction,
    PolynomialPotential,
    SquareWellSpec,
    WellGeometry,
    barrier_action,
    ebk_levels,
    eval_potential,
    well_analysis,
)

__version__ = "0.1.0"

__all__ = [
    "BarrierAction",
    "PolynomialPotential",
    "SquareWellSpec",
    "WellGeometry",
    "barrier_action",
    "ebk_levels",
    "eval_potential",
    "well_analysis",
    "__version__",
]
