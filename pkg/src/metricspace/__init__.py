"""Discrete Riemannian geometry on the space of metrics of a flat torus."""

__version__ = "0.1.0"

from .grid import (Grid, GridError, TensorField, build_grid, constant_sym2,
                   flat_metric, random_smooth_fields, scalar_field)
from .operators import OperatorSpec, PhiFunction, SolverError, gp_inner, op_apply, op_solve
from .geodesic import (GeodesicState, Trajectory, energy, flow_field,
                       integrate_geodesic, momentum_density, path_length)
