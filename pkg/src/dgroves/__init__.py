"""Construct, solve and audit dynamic Groves mechanisms on finite Markovian environments."""

from .env import (
    CoupledKernel,
    Environment,
    NoiseStream,
    ParseError,
    ValidationError,
    coupling_kernel,
    load_environment,
    read_environment,
    reduced_environment,
)
from .mdp import EfficientSolution, SolveReport, evaluate_policy, solve, solve_efficient, solve_excluded
from .groves import Mechanism, build_custom, build_pivot, build_team, from_transfers, transfer_report
from .deviate import (
    best_response_value,
    consistent_values,
    extract_phi,
    one_shot_gain,
    simulate_consistent,
    verify_ic,
)

__version__ = "0.1.0"
