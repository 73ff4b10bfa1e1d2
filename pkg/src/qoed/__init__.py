"""Quasi-optimal experimental design: Fisher-information objectives that
focus exploration on identifiable parameters and discount nuisance
coupling."""

from .errors import QoedError
from .fisher import (EigenDecomp, FisherMatrix, crlb_trace, directional_information,
                     eigendecompose, estimate_fim, principal_submatrix_trace)
from .subspace import (EigenSplit, SelectionResult, cosine_rows, select_identifiable,
                       split_observable)
from .objectives import (BonusBreakdown, FimBlocks, QuasiOptConstants, Thresholds,
                         agnostic_objective, analyze_fim, block_partition,
                         boed_objective, projection_residual, qoed_bonus,
                         qoed_objective, quasiopt_constants, residual_regression_trace,
                         rho_factor, schur_complement)
from .models import (LinearGaussian1D, NuisanceCoupled, Push2D, Trajectory,
                     counterexample_family, make_model, simulate_trajectory,
                     trajectory_loglik, trajectory_score)
from .estimation import (CemConfig, ParamBelief, belief_trace, belief_update,
                         cem_estimate, prior_belief)
from .design import (DesignCandidate, ExplorationConfig, HiddenSystem,
                     dynamics_prediction_rmse, evaluate_design, optimize_design,
                     run_exploration)

__version__ = "0.1.0"
