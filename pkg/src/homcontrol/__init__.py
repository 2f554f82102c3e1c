"""Homotopy-continuation control of affine nonlinear plants."""

from .homotopy import (BifurcationPoint, ControlAction, HomotopyState, HSystemMatrices, Mode,
                       ReferenceLinearSystem, assemble_h_system, continuation_control,
                       h_feedback_linearize, hybrid_step)
from .linalg import (RankDeficient, augmented_tangent, numerical_rank,
                     oriented_nullspace_tangent, pseudoinverse)
from .plant import AffineSystem, SingularDecoupling, decoupling_matrix, lie_derivative
from .plants import PLANTS, build_plant
from .scenario import (ParseError, Scenario, SetpointProfile, ValidationError, dump_scenario,
                       parse_scenario, parse_scenario_text)
from .sim import SimConfig, SimTrace, run_closed_loop, simulate

__version__ = "0.1.0"
