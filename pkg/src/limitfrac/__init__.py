"""Quasi-static anti-plane crack evolution in strain-limiting solids."""

from .config import Config, apply_overrides, parse_config, parse_config_text
from .constitutive import ModelParams
from .driver import RunResult, StaggeredSetup, run_quasistatic
from .errors import ConfigError, SolverError
from .examples import convergence_table, ex4_sweep, mms_ladder, run_example
from .fem import ScalarField
from .mechanics import MechanicsProblem, solve_mechanics
from .mesh import BoundaryTag, Mesh, SlitSpec, boundary_nodes, build_unit_square, carve_slit, refine_box
from .phasefield import PhaseFieldProblem, band_initial_pf, solve_phasefield

__all__ = [
    "BoundaryTag",
    "Config",
    "ConfigError",
    "MechanicsProblem",
    "Mesh",
    "ModelParams",
    "PhaseFieldProblem",
    "RunResult",
    "ScalarField",
    "SlitSpec",
    "SolverError",
    "StaggeredSetup",
    "apply_overrides",
    "band_initial_pf",
    "boundary_nodes",
    "build_unit_square",
    "carve_slit",
    "convergence_table",
    "ex4_sweep",
    "mms_ladder",
    "parse_config",
    "parse_config_text",
    "refine_box",
    "run_example",
    "run_quasistatic",
    "solve_mechanics",
    "solve_phasefield",
]

__version__ = "0.1.0"
