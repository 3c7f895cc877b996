from .diagnostics import (
    ConvergenceRow,
    ErrorNorms,
    HarnessError,
    condition_number,
    condition_number_blocks,
    conservation_error,
    convergence_table,
    error_norms,
    error_norms_2d,
    field_from_layout,
    least_squares_order,
    observed_orders,
)
from .presets import PRESETS, ExperimentSpec, RunReport, alpha_values, get_preset, run_convergence, run_experiment
