"""Resource allocation for multi-user SWIPT downlinks with imperfect reciprocity calibration."""

from .beamform import slr_directions, zf_directions
from .channel import sample_uplink, stream_rng
from .energy import eh_nonlinear, eh_threshold_inverse, mc_coverage
from .harness import run_comparison, run_mobility, run_pipeline
from .moments import MomentTable, chebyshev_margin, moment_table
from .plan import solve_plan
from .power import Allocation, InfeasibleError, SolverError, solve_optimal, solve_suboptimal
from .scenario import ConfigError, ScenarioConfig, default_table1, load_config

__all__ = [
    "Allocation",
    "ConfigError",
    "InfeasibleError",
    "MomentTable",
    "ScenarioConfig",
    "SolverError",
    "chebyshev_margin",
    "default_table1",
    "eh_nonlinear",
    "eh_threshold_inverse",
    "load_config",
    "mc_coverage",
    "moment_table",
    "run_comparison",
    "run_mobility",
    "run_pipeline",
    "sample_uplink",
    "slr_directions",
    "solve_optimal",
    "solve_plan",
    "solve_suboptimal",
    "stream_rng",
    "zf_directions",
]
