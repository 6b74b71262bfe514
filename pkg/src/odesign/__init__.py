"""Optimal sampling-time design for ODE parameter estimation.

Pick the measurement times that make the parameters of a dynamical system
easiest to estimate: build Fisher information from forward sensitivities,
solve the minimum-eigenvalue design problem over candidate times, and
aggregate rankings across uniform parameter draws so no initial estimate is
needed. A benchmark harness compares selection methods by downstream
least-squares error, with studentized-range tests on the differences.
"""

from .models import (
    TimeGrid,
    ParameterSpace,
    DynamicalModel,
    builtin_lotka_volterra,
    builtin_three_compartment,
    get_model,
    register_model,
    default_space,
    LOTKA_VOLTERRA_SPACE,
    THREE_COMPARTMENT_SPACE,
)
from .integrate import (
    Trajectory,
    AugmentedTrajectory,
    ObservationSeries,
    integrate,
    integrate_with_sensitivities,
    observe,
    full_state_record,
    add_noise,
    finite_difference_sensitivity,
)
from .design import (
    SensitivityRecord,
    FisherInformation,
    DesignWeights,
    RankVector,
    atomic_information,
    fim_from_weights,
    min_eigenpair,
    e_optimal_weights,
    rank_times,
    select_top_n,
)
from .eor import EorConfig, EorResult, eor_design
from .estimate import (
    Dataset,
    EstimationResult,
    sse_objective,
    least_squares_estimate,
    estimation_error,
)
from .bench import (
    MethodSpec,
    BenchConfig,
    SummaryStats,
    TukeyRecord,
    BenchReport,
    run_benchmark,
    summarize,
    tukey_hsd,
    emit_report,
)
from .stats import srange_cdf, srange_quantile
from . import errors

__version__ = "0.1.0"
