from .arclength import branch_distance, correct_pseudo_arclength, to_forcing_frame, track_branch_arclength
from .equilibrium import (
    EqStepControl,
    NotSettledError,
    correct_equilibrium,
    secant_predict_eq,
    settle_controlled,
    track_equilibrium_branch,
)
from .folds import Fold, detect_folds
from .periodic import (
    canonical_phase,
    classify_stability,
    correct_fixed_point,
    period_amplitudes,
    seed_points,
    track_branch,
    update_fundamental_forcing,
)
from .points import (
    Branch,
    BranchPoint,
    CorrectorFailure,
    DegenerateSecantError,
    EqPoint,
    EquilibriumBranch,
    StepControl,
)

__all__ = [
    "Branch", "BranchPoint", "branch_distance", "CorrectorFailure", "DegenerateSecantError", "EqPoint",
    "EqStepControl", "EquilibriumBranch", "Fold", "NotSettledError", "StepControl",
    "canonical_phase", "classify_stability", "correct_equilibrium", "correct_fixed_point", "correct_pseudo_arclength",
    "detect_folds", "period_amplitudes", "secant_predict_eq", "seed_points", "settle_controlled",
    "to_forcing_frame", "track_branch", "track_branch_arclength", "track_equilibrium_branch",
    "update_fundamental_forcing",
]
