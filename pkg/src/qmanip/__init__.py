"""Reward adaptation by bounding the target Q-function and pruning actions before learning."""

from .bounds import (
    BoundPair,
    CombinationSpec,
    PruneConfig,
    combine_rewards,
    default_delta,
    mqm_init_linear,
    mqm_init_naive,
    mqm_init_nonlinear,
    mqm_iterate,
    apply_noise_to_init,
    prune_actions,
    pruning_stats,
    qm_iterate,
)
from .mdp import ActionMask, LiteModel, RewardTable, TabularMdp, extract_lite_model, sample_step, sbf, validate
from .solvers import NotConverged, SolveConfig, greedy_policy, policy_evaluation, q_mu, value_iteration

__all__ = [
    "ActionMask", "BoundPair", "CombinationSpec", "LiteModel", "NotConverged", "PruneConfig", "RewardTable",
    "SolveConfig", "TabularMdp", "apply_noise_to_init", "combine_rewards", "default_delta", "extract_lite_model",
    "greedy_policy", "mqm_init_linear", "mqm_init_naive", "mqm_init_nonlinear", "mqm_iterate", "policy_evaluation",
    "prune_actions", "pruning_stats", "q_mu", "qm_iterate", "sample_step", "sbf", "validate", "value_iteration",
]
