"""Monte Carlo laboratory for normalized sums over coupled time indices.

Finite-alphabet mixing processes, dependency-neighborhood geometry, exact
decoupling inequality checks, and rate experiments for the normal
approximation of S_N = sum of F at the coupled time points.
"""

__version__ = "0.1.0"

from .errors import (
    BudgetExceeded,
    ConfigError,
    DegenerateVariance,
    EmptyInput,
    EmptySample,
    EmptySet,
    InsufficientReplications,
    LabError,
    MixedBlock,
    NoiseFloor,
    NonStochastic,
    NotPrimitive,
    PathTooShort,
    Unsupported,
    UnsupportedIndexFamily,
)
from .processes import (
    PathSample,
    ProcessSpec,
    approximation_rate,
    build_doeblin_chain,
    build_iid,
    build_shift_system,
    coarse_grain,
    phi_bound,
    phi_coefficient,
    sample_path,
)
from .observables import (
    IndexFamily,
    Observable,
    center,
    centering_constant,
    linear_index_family,
    make_observable,
    make_product_observable,
    make_return_time_observable,
    make_table_observable,
    polynomial_index_family,
    truncate,
)
from .neighborhoods import (
    BlockDecomposition,
    NeighborhoodIndex,
    annulus,
    cardinality_constants,
    decompose_blocks,
    neighborhood,
    neighborhood_intervals,
    set_distance,
)
from .decoupling import (
    BlockExpectationProblem,
    check_correlation_bound,
    check_decoupling_bound,
    check_smoothing_inequality,
    decoupled_expectation,
    exact_joint_expectation,
)
from .kolmogorov import (
    dkw_epsilon,
    exact_dK_binomial,
    kolmogorov_distance,
    kolmogorov_distance_discrete,
    kolmogorov_statistic_stderr,
)
from .engine import (
    TrialBatch,
    count_return_tuples,
    estimate_D2,
    estimate_variance,
    nonconventional_sum,
    replicate_Z,
    stein_terms,
)
from .rates import RateReport, fit_rate, make_rate_report, theoretical_bound
from .config import ExperimentConfig, emit_config, parse_config, realize

__all__ = [name for name in dir() if not name.startswith("_")]
