"""Loss bounds, schedule qualification and scaling-law fits for learning-rate schedules."""

from .bounds import (
    BoundCoefficients,
    BoundKind,
    BoundTrace,
    bound_averaged,
    bound_last,
    bound_last_fast,
    bound_trace,
    closed_form_bound,
    cosine_integral_constant,
    log_tau_grid,
    optimal_peak_lr,
)
from .convex_sim import ConvexProblem, make_problem, sgd_run, sgd_sweep
from .errors import NumericError, SchedlawError, ValidationError
from .fitter import FitReport, LossTrace, build_design, fit_predict, nnls_fit
from .qualifier import QualifyReport, Verdict, exam_functional, qualify
from .scaling import (
    QCurve,
    RunRecord,
    ScalingFit,
    fit_scaling,
    fit_sqrtT_line,
    flops_to_tokens,
    predict_loss,
    q_curve,
    select_eta_ref,
    tokens_to_steps,
    transfer_lr,
)
from .schedule import ScheduleKind, ScheduleSpec, eval_continuous, eval_discrete

__version__ = "0.1.0"
