"""Spectral Galerkin simulator for the stochastic compressible Navier–Stokes–Poisson system."""
from .spectral import (
    GridSpec, ScalarField, VectorField, ParameterError, project_galerkin, gradient, divergence,
    laplacian, inv_laplacian, grad_inv_lap_div, dealias, integrate, inner, l2_norm,
)
from .thermodynamics import PressureLaw, RegularizationParams, DomainError
from .forcing import NoiseModel, Stream, WienerIncrement, wiener_increments
from .poisson import BackgroundProfile, Potential, solve_potential, potential_energy
from .stepper import (
    SimState, StepperConfig, Trajectory, initial_state, advance, run_trajectory,
    StepRejected, SolverFailure, TrajectoryAborted,
)

__version__ = "0.1.0"
