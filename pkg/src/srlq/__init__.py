"""Strategically robust equilibria of finite-horizon linear quadratic dynamic games."""

from .equilibria import (
    AdversaryConcavityFailure,
    AdversaryUnbounded,
    EquilibriumSolution,
    IndefiniteSocialCost,
    PlayerConvexityFailure,
    ReducedLQRIllPosed,
    SingularStageSystem,
    SolverError,
    assemble_stage_system,
    best_response_adversary,
    best_response_player,
    check_spectral_dominance,
    find_existence_boundary,
    riccati_step,
    solve_nash,
    solve_social_optimum,
    solve_strategically_robust,
)
from .game_model import (
    INF,
    AffineTarget,
    GameSpec,
    RobustnessConfig,
    augment_affine_target,
    build_collaborative_game,
    build_motivating_game,
    build_scalar_game,
    build_star_network_game,
    stacked_index_map,
    validate_game,
)
from .simulate import (
    Trajectory,
    augmented_cost,
    biased_policy,
    clipped_adversarial_policy,
    component_policy,
    evaluate_robust_cost,
    linear_policy,
    rollout,
)

__version__ = "0.1.0"
