"""Exact dynamic programming on tabular MDPs.

All sweeps are synchronous: each new table is computed from the previous one.
Terminal rows are carried over unchanged (zero unless the caller seeded them).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ActionMask, RewardTable, TabularMdp


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float = 1e-8
    max_sweeps: int = 100_000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")


class NotConverged(RuntimeError):
    def __init__(self, what: str, sweeps: int, residual: float):
        super().__init__(f"{what} did not converge after {sweeps} sweeps (residual {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


def state_values(q: np.ndarray, mask: ActionMask | np.ndarray | None = None) -> np.ndarray:
    """max over (allowed) actions per state."""
    if mask is None:
        return q.max(axis=1)
    allowed = mask.allowed if isinstance(mask, ActionMask) else mask
    return np.where(allowed, q, -np.inf).max(axis=1)


def bellman_backup(q: np.ndarray, mdp: TabularMdp, r: np.ndarray, mask=None) -> np.ndarray:
    """One synchronous optimality backup. ``r`` is the padded reward array."""
    v = state_values(q, mask)
    out = (mdp.prob * (r + mdp.gamma * v[mdp.succ])).sum(axis=2)
    term = ~mdp.nonterminal
    out[term] = q[term]
    return out


def iterate(op, q0: np.ndarray, cfg: SolveConfig, what: str, history: list | None = None):
    """Apply ``op`` until the sup-norm change is at most ``cfg.epsilon``.

    Returns ``(q, sweeps, residual)``. Per-sweep deltas are appended to ``history``.
    """
    q = q0
    for sweep in range(1, cfg.max_sweeps + 1):
        nxt = op(q)
        delta = float(np.max(np.abs(nxt - q))) if q.size else 0.0
        if history is not None:
            history.append(delta)
        q = nxt
        if delta <= cfg.epsilon:
            return q, sweep, delta
    raise NotConverged(what, cfg.max_sweeps, delta)


def value_iteration(
    mdp: TabularMdp,
    rewards: RewardTable,
    cfg: SolveConfig = SolveConfig(),
    mask: ActionMask | None = None,
    history: list | None = None,
) -> np.ndarray:
    """Optimal Q-table; with ``mask`` the max over successors' actions is restricted to it."""
    r = rewards.array(mdp)
    q0 = np.zeros((mdp.n_states, mdp.n_actions))
    q, _, _ = iterate(lambda q: bellman_backup(q, mdp, r, mask), q0, cfg, "value iteration", history)
    return q


def q_mu(mdp: TabularMdp, rewards: RewardTable, cfg: SolveConfig = SolveConfig()) -> np.ndarray:
    """Q-function of the return-minimising policy, via ``-Q*`` under negated rewards."""
    return -value_iteration(mdp, -rewards, cfg)


def policy_evaluation(
    mdp: TabularMdp, rewards: RewardTable, policy: np.ndarray, cfg: SolveConfig = SolveConfig()
) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.int64)
    r = rewards.array(mdp)
    states = np.arange(mdp.n_states)

    def op(q):
        v = q[states, policy]
        v = np.where(mdp.nonterminal, v, 0.0)
        out = (mdp.prob * (r + mdp.gamma * v[mdp.succ])).sum(axis=2)
        out[~mdp.nonterminal] = q[~mdp.nonterminal]
        return out

    q, _, _ = iterate(op, np.zeros((mdp.n_states, mdp.n_actions)), cfg, "policy evaluation")
    return q


def greedy_policy(q: np.ndarray, mask: ActionMask | None = None) -> np.ndarray:
    """argmax per state over allowed actions; ties go to the lowest action index."""
    if mask is None:
        return np.argmax(q, axis=1)
    allowed = mask.allowed
    empty = ~allowed.any(axis=1)
    if empty.any():
        raise ValueError(f"empty allowed-action set at states {np.flatnonzero(empty).tolist()}")
    return np.argmax(np.where(allowed, q, -np.inf), axis=1)


def expected_return(mdp: TabularMdp, rewards: RewardTable, policy: np.ndarray, t_max: int) -> float:
    """Exact expected undiscounted return from the initial state within ``t_max`` steps."""
    policy = np.asarray(policy, dtype=np.int64)
    r = rewards.array(mdp)
    states = np.arange(mdp.n_states)
    succ, prob = mdp.succ[states, policy], mdp.prob[states, policy]
    rr = r[states, policy]
    v = np.zeros(mdp.n_states)
    for _ in range(t_max):
        v = (prob * (rr + v[succ])).sum(axis=1)
    return float(v[mdp.initial_state])
