"""Perfect nested sampling and estimates of its sampling errors."""

from .errors import (
    ErrorReport,
    bootstrap_ci,
    bootstrap_errors,
    decomposed_estimates,
    simulated_weights_errors,
    split_runs_errors,
)
from .experiments import TableSpec, diagram_data, dimension_sweep, run_coverage, run_table
from .inference import (
    WeightSet,
    evaluate_estimand,
    expected_logx,
    keeton_weight_moments,
    log_evidence,
    posterior_weights,
    simulate_logx,
    trapezium_logw,
    weighted_quantile,
)
from .io import read_run, write_run
from .problems import Estimand, Problem, analytic_logz, true_value
from .run import DeadPoint, Run, combine_runs, split_into_threads, validate_run
from .sampler import SamplerConfig, TerminationRule, repeat_runs, run_perfect_ns

__version__ = "0.1.0"
