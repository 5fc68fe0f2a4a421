"""Sparse recovery with quadratic-envelope penalties.

Forward-backward splitting for ``Q(mu card)`` and ``Q(indicator of card <= K)``
regularized least squares, exact restricted isometry constants, and
optimality / recovery certificates for the solutions.
"""
__version__ = "0.1.0"

from .certificates import (
    CertificateReport,
    check_k_feasibility,
    certify_card_minimizer,
    certify_pk_minimizer,
    crt_condition,
    guarantee_oracle_card,
    guarantee_oracle_pk,
    is_stationary,
    rip_delta,
    rlip_beta,
    rlip_table,
    shadow_point,
)
from .estimator import SparseRegressor
from .exceptions import DivergenceError, EnumerationCapError, InvalidArgumentError
from .model import (
    ProblemInstance,
    SensingMatrix,
    generate_ground_truth,
    generate_sensing_matrix,
    make_instance,
    matrix_stats,
    oracle_solution,
    synthesize_measurements,
)
from .penalties import (
    Card,
    IndicatorPK,
    L1,
    QuadEnvCard,
    QuadEnvPK,
    make_penalty,
    penalty_eval,
    penalty_prox,
    subgradient_distance,
)
from .solver import SolverConfig, SolveResult, default_step_size, fbs_solve, objective_value

