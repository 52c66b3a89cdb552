"""Source behaviours and the warm-start / clipping inputs for the transfer baselines."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .bounds import BoundPair
from .mdp import RewardTable, TabularMdp
from .solvers import SolveConfig, greedy_policy, policy_evaluation, q_mu, value_iteration


@dataclass
class SourceBehavior:
    rewards: RewardTable
    q_star: np.ndarray
    q_mu: np.ndarray
    q_star_abs: np.ndarray
    policy: np.ndarray


def solve_source(mdp: TabularMdp, rewards: RewardTable, cfg: SolveConfig = SolveConfig()) -> SourceBehavior:
    """Compute Q*, Q^mu and Q* under |R| for one source reward by value iteration."""
    q_star = value_iteration(mdp, rewards, cfg)
    return SourceBehavior(
        rewards=rewards,
        q_star=q_star,
        q_mu=q_mu(mdp, rewards, cfg),
        q_star_abs=value_iteration(mdp, abs(rewards), cfg),
        policy=greedy_policy(q_star),
    )


def sfql_bootstrap(
    mdp: TabularMdp,
    target_r: RewardTable,
    sources: Sequence[SourceBehavior],
    cfg: SolveConfig = SolveConfig(),
) -> np.ndarray:
    """GPI warm start: pointwise max of the source policies evaluated on the target reward."""
    if not sources:
        raise ValueError("need at least one source behaviour")
    return np.max([policy_evaluation(mdp, target_r, src.policy, cfg) for src in sources], axis=0)


def sqb_bounds_from_mqm(init: BoundPair) -> BoundPair:
    """Pass the initial M-Q-M bounds through as the clipping prior, tagged with their origin."""
    return replace(init, source=f"sqb<{init.source or 'init'}>")
