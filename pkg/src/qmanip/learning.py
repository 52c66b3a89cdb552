"""Episodic tabular Q-learning with optional action mask, warm start and target clipping."""
from __future__ import annotations

import time
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .bounds import BoundPair
from .mdp import ActionMask, RewardTable, TabularMdp


@dataclass(frozen=True)
class LearnConfig:
    episodes: int = 500
    t_max: int = 100
    alpha: float = 0.1
    alpha_decay: float = 1.0
    alpha_min: float = 0.0
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.99
    epsilon_min: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1 or self.t_max < 1:
            raise ValueError("episodes and t_max must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 <= self.epsilon_min < 1 or not 0 <= self.epsilon_start <= 1:
            raise ValueError("exploration rates must lie in [0, 1] with floor < 1")

    def exploration(self, episode: int) -> float:
        return max(self.epsilon_min, self.epsilon_start * self.epsilon_decay**episode)

    def learning_rate(self, episode: int) -> float:
        return max(self.alpha_min, self.alpha * self.alpha_decay**episode)


@dataclass
class LearningCurve:
    returns: np.ndarray
    discounted: np.ndarray
    steps: np.ndarray
    wall_clock: np.ndarray

    def __len__(self) -> int:
        return len(self.returns)


def _compile(mdp: TabularMdp, rewards: RewardTable):
    """Per-(s, a) (cdf, successors, rewards) lists for the inner loop."""
    table = []
    for s in range(mdp.n_states):
        per_s = []
        for a in range(mdp.n_actions):
            row = mdp.transitions[s][a]
            if not row:
                per_s.append(None)
                continue
            cdf = np.cumsum([p for _, p in row]).tolist()
            per_s.append((cdf, [sp for sp, _ in row], [rewards[(s, a, sp)] for sp, _ in row]))
        table.append(per_s)
    return table


def _draw(entry, u: float):
    cdf, nexts, rs = entry
    k = min(bisect_right(cdf, u * cdf[-1]), len(nexts) - 1)
    return nexts[k], rs[k]


def q_learning(
    mdp: TabularMdp,
    rewards: RewardTable,
    cfg: LearnConfig,
    mask: ActionMask | None = None,
    init_q: np.ndarray | None = None,
    clip: BoundPair | None = None,
    reward_noise: tuple[float, float] | None = None,
    debug: bool = False,
) -> tuple[np.ndarray, LearningCurve]:
    """Run ``cfg.episodes`` episodes of epsilon-greedy Q-learning from the initial state.

    Exploration and bootstrapping are restricted to ``mask``. ``init_q`` warm-starts
    the table. With ``clip`` the TD target is clamped into ``[clip.lb, clip.ub]``
    and, absent ``init_q``, the table starts at the bounds' midpoint.
    ``reward_noise`` adds uniform noise from the given range to every observed reward.

    Random draws per episode have a fixed shape, so runs with the same seed see
    the same exploration and transition streams regardless of mask or init.
    """
    n_s, n_a = mdp.n_states, mdp.n_actions
    allowed = [list(range(n_a))] * n_s if mask is None else [mask.actions(s) for s in range(n_s)]
    for s in range(n_s):
        if s not in mdp.terminal and not allowed[s]:
            raise ValueError(f"no allowed action at non-terminal state {s}")
    if init_q is not None:
        q0 = np.array(init_q, float)
    elif clip is not None:
        q0 = 0.5 * (clip.ub + clip.lb)
    else:
        q0 = np.zeros((n_s, n_a))
    Q = q0.tolist()
    lo_b = clip.lb.tolist() if clip is not None else None
    hi_b = clip.ub.tolist() if clip is not None else None
    n_lo, n_hi = reward_noise if reward_noise is not None else (0.0, 0.0)
    n_span = n_hi - n_lo

    table = _compile(mdp, rewards)
    terminal = [s in mdp.terminal for s in range(n_s)]
    gamma = mdp.gamma
    rng = np.random.default_rng(cfg.seed)

    returns = np.zeros(cfg.episodes)
    discounted = np.zeros(cfg.episodes)
    steps = np.zeros(cfg.episodes, dtype=np.int64)
    clock = np.zeros(cfg.episodes)
    t0 = time.perf_counter()
    for ep in range(cfg.episodes):
        eps = cfg.exploration(ep)
        alpha = cfg.learning_rate(ep)
        u = rng.random((cfg.t_max, 4)).tolist()
        s = mdp.initial_state
        g = gd = 0.0
        disc = 1.0
        t = 0
        while t < cfg.t_max:
            acts = allowed[s]
            ut = u[t]
            row = Q[s]
            if ut[0] < eps:
                a = acts[int(ut[1] * len(acts))]
            else:
                a = acts[0]
                best = row[a]
                for b in acts:
                    if row[b] > best:
                        a, best = b, row[b]
            if debug:
                assert a in acts, f"disallowed action {a} at state {s}"
            sp, r = _draw(table[s][a], ut[2])
            r += n_lo + n_span * ut[3]
            t += 1
            if terminal[sp]:
                target = r
            else:
                qn = Q[sp]
                target = r + gamma * max(qn[b] for b in allowed[sp])
            if lo_b is not None:
                target = min(max(target, lo_b[s][a]), hi_b[s][a])
            row[a] += alpha * (target - row[a])
            g += r
            gd += disc * r
            disc *= gamma
            s = sp
            if terminal[sp]:
                break
        returns[ep], discounted[ep], steps[ep] = g, gd, t
        clock[ep] = time.perf_counter() - t0
    return np.asarray(Q, float), LearningCurve(returns, discounted, steps, clock)


def evaluate_policy_return(
    mdp: TabularMdp,
    rewards: RewardTable,
    policy: np.ndarray,
    n_episodes: int,
    t_max: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo mean undiscounted return of a fixed policy from the initial state."""
    table = _compile(mdp, rewards)
    total = 0.0
    for _ in range(n_episodes):
        s = mdp.initial_state
        for _ in range(t_max):
            sp, r = _draw(table[s][int(policy[s])], rng.random())
            total += r
            s = sp
            if sp in mdp.terminal:
                break
    return total / n_episodes


def smooth(values: np.ndarray, window: int = 50) -> np.ndarray:
    """Trailing moving average; early entries average over what is available."""
    values = np.asarray(values, float)
    c = np.concatenate(([0.0], np.cumsum(values)))
    idx = np.arange(1, len(values) + 1)
    start = np.maximum(0, idx - window)
    return (c[idx] - c[start]) / (idx - start)
