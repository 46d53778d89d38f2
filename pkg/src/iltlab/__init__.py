"""Intersection local times of lattice random walks.

Sampling and local times (``walk_engine``), intersection counts
(``intersection``), exact small-n moments (``exact_moments``), the
Gagliardo-Nirenberg ground state and rate constants (``ground_state``),
resolvent-integral bounds (``analytic_bounds``) and Monte Carlo experiments
(``deviation_lab``).
"""
from .analytic_bounds import (
    gamma_lower_bound,
    kappa_upper_bound,
    ordered_simplex_identity_check,
    resolvent_p_integral,
)
from .deviation_lab import (
    ExperimentConfig,
    emit,
    run_lil_trace,
    run_mc_moments,
    run_tail_curve,
    scaling_check,
)
from .errors import ConfigError, IltError, NumericalError
from .exact_moments import (
    MomentTable,
    check_block_moment_inequality,
    check_exponential_series_inequality,
    expected_In,
    kernel_powers,
    moment_bruteforce,
    moment_exact,
)
from .ground_state import (
    gn_violation_search,
    kappa_from_ground_state,
    rate_constants,
    solve_ground_state,
    variational_M,
)
from .intersection import intersect, intersection_count, intersection_profile, range_intersection
from .walk_engine import (
    SmoothConfig,
    build_step_law,
    load_step_law,
    local_time_field,
    sample_path,
    simple_random_walk,
    smoothed_local_time,
)

__version__ = "0.1.0"
