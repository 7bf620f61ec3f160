"""Nesterov's method as a variable step size linear multistep method, and a
more stable two-step alternative."""

from .core import (L_SAFETY, ObjectiveSpec, Record, RunConfig, StepSchedule, Trajectory,
                   TwoStepCoefficients, check_gradient, safe_lipschitz)
from .lyapunov import (LyapunovParams, certify, conditions_check, lyapunov_value,
                       nag_c_lyapunov_params, optimality_search, proposed_minimax_search)
from .methods import ADAMS2, GRADIENT_DESCENT, METHODS, NAG_C, PROPOSED, get_method, run
from .problems import cahn_hilliard, diag_quadratic, hilbert_quadratic, logistic, logsumexp
from .stability import characteristic_poly, dahlquist_run, region_boundary, spectral_radius

__version__ = "0.1.0"
