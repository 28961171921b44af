"""Moreau-Yosida penalized and reflected diffusions: simulation, Gibbs measures, semigroups."""

from . import base_system, dynamics, measures, observables, potential, quadrature
from .base_system import HeatGrid, LinearSystem, build_heat_grid, semigroup_action
from .dynamics import (ContractionReport, IntegratorSpec, TrajectoryBatch, coupled_contraction,
                       simulate_batch, simulate_reflected_oracle, step_penalized)
from .exceptions import *  # noqa: F401,F403
from .measures import (GibbsMeasure, sample_gibbs, sigma_limit, sigma_limit_convex_body, sigma_n,
                       tv_by_min_formula)
from .potential import (Ball, Box, Halfspaces, NonnegativeCone, Quadratic, SumPotential,
                        YosidaEnvelope, project, yosida_gradient, yosida_value)

__version__ = "0.1.0"
