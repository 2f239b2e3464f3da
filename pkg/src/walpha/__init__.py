"""Geodesics, dual potentials and certificates for transport distances with power mobility on the flat torus."""
from .energy import EnergyConstants, d_alpha, eval_H, eval_L, kappa, prox_H
from .grid import TorusGrid, discrete_divergence, discrete_gradient, project_continuity
from .solver import SolveConfig, SolveReport, solve_geodesic, sweep_alpha

__all__ = [
    "EnergyConstants",
    "SolveConfig",
    "SolveReport",
    "TorusGrid",
    "d_alpha",
    "discrete_divergence",
    "discrete_gradient",
    "eval_H",
    "eval_L",
    "kappa",
    "project_continuity",
    "prox_H",
    "solve_geodesic",
    "sweep_alpha",
]
