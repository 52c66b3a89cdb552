"""Property checks of the bound machinery against value-iteration oracles on one bundle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import solve_source
from .bounds import (
    PruneConfig,
    default_delta,
    monotone_lower_backup,
    monotone_upper_backup,
    mqm_init_linear,
    mqm_iterate,
    optimistic_backup,
    pessimistic_backup,
    prune_actions,
    qm_iterate,
)
from .domains import DomainBundle
from .mdp import ActionMask, LiteModel, RewardTable, TabularMdp, extract_lite_model, validate
from .solvers import SolveConfig, bellman_backup, iterate, q_mu, value_iteration

SLACK = 1e-12


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def min_value_iteration(mdp: TabularMdp, rewards: RewardTable, cfg: SolveConfig) -> np.ndarray:
    """Q of the return-minimising policy by iterating the min-Bellman backup directly."""
    r = rewards.array(mdp)

    def op(q):
        v = q.min(axis=1)
        out = (mdp.prob * (r + mdp.gamma * v[mdp.succ])).sum(axis=2)
        out[~mdp.nonterminal] = q[~mdp.nonterminal]
        return out

    q, _, _ = iterate(op, np.zeros((mdp.n_states, mdp.n_actions)), cfg, "min value iteration")
    return q


def contraction_ratio_ok(deltas, gamma: float, slack: float = SLACK) -> bool:
    return all(d1 <= gamma * d0 + slack for d0, d1 in zip(deltas, deltas[1:]))


def ordering_holds(mdp: TabularMdp, lite: LiteModel, rewards: RewardTable, q0: np.ndarray, sweeps: int) -> bool:
    """Pessimistic <= standard <= optimistic backups from a common start, at every sweep."""
    r_mdp = rewards.array(mdp)
    r_lite = rewards.gather(lite.succ, lite.valid)
    lb = q = ub = np.array(q0, float)
    for _ in range(sweeps):
        lb = pessimistic_backup(lb, lite, r_lite, mdp.gamma)
        q = bellman_backup(q, mdp, r_mdp)
        ub = optimistic_backup(ub, lite, r_lite, mdp.gamma)
        if not (np.all(lb <= q + SLACK) and np.all(q <= ub + SLACK)):
            return False
    return True


def optimality_preserved(mdp: TabularMdp, rewards: RewardTable, mask: ActionMask, cfg: SolveConfig):
    """Compare VI restricted to ``mask`` with unrestricted VI.

    Returns ``(max value gap over states, states with no optimal action left)``.
    """
    tol = 2 * cfg.epsilon / (1 - mdp.gamma)
    full = value_iteration(mdp, rewards, cfg)
    restricted = value_iteration(mdp, rewards, cfg, mask=mask)
    live = mdp.nonterminal
    v_full = full.max(axis=1)
    v_res = np.where(mask.allowed, restricted, -np.inf).max(axis=1)
    gap = float(np.max(np.abs(v_full - v_res)[live])) if live.any() else 0.0
    optimal = full >= v_full[:, None] - tol
    lost = [int(s) for s in np.flatnonzero(live) if not (optimal[s] & mask.allowed[s]).any()]
    return gap, lost


def non_expansive(lite: LiteModel, rewards: RewardTable, gamma: float, rng, pairs: int = 100) -> bool:
    r = rewards.gather(lite.succ, lite.valid)
    shape = (lite.n_states, lite.n_actions)
    for _ in range(pairs):
        scale = rng.uniform(0.1, 10.0)
        a, b = rng.normal(0, scale, shape), rng.normal(0, scale, shape)
        dist = np.max(np.abs(a - b))
        for op in (monotone_upper_backup, monotone_lower_backup):
            if np.max(np.abs(op(a, lite, r, gamma) - op(b, lite, r, gamma))) > dist + SLACK:
                return False
    return True


def verify_bundle(bundle: DomainBundle, cfg: SolveConfig = SolveConfig(), seed: int = 0) -> list[Check]:
    mdp = bundle.mdp
    target = bundle.target_rewards
    gamma = mdp.gamma
    tight = SolveConfig(min(cfg.epsilon, 1e-12), cfg.max_sweeps)
    checks = []
    report = validate(mdp, target)
    checks.append(Check("mdp and reward table valid", bool(report), "; ".join(report.violations[:3])))
    if not report:
        return checks
    lite = extract_lite_model(mdp)
    rng = np.random.default_rng(seed)

    err = float(np.max(np.abs(q_mu(mdp, target, tight) - min_value_iteration(mdp, target, tight))))
    checks.append(Check("worst-policy Q equals -Q* of negated reward", err <= 1e-9, f"max err {err:.2e}"))

    qm = qm_iterate(lite, target, gamma, cfg)
    ok = contraction_ratio_ok(qm.ub_deltas, gamma) and contraction_ratio_ok(qm.lb_deltas, gamma)
    checks.append(Check("Q-M sweeps contract by gamma", ok, f"{qm.iterations} sweeps"))
    start = rng.normal(0, 5, qm.ub.shape)
    start[lite.terminal_rows] = 0.0
    other = qm_iterate(lite, target, gamma, cfg, start=(start, start))
    diff = max(np.max(np.abs(other.ub - qm.ub)), np.max(np.abs(other.lb - qm.lb)))
    tol = 2 * cfg.epsilon / (1 - gamma)
    checks.append(Check("Q-M fixed point independent of start", diff <= max(tol, 1e-8), f"diff {diff:.2e}"))

    q0 = rng.normal(0, 1, qm.ub.shape)
    q0[lite.terminal_rows] = 0.0
    checks.append(Check("pessimistic <= standard <= optimistic at every sweep",
                        ordering_holds(mdp, lite, target, q0, 200)))

    q_star = value_iteration(mdp, target, tight)
    inside = np.all(qm.lb <= q_star + tol) and np.all(q_star <= qm.ub + tol)
    checks.append(Check("Q-M bounds bracket Q*", bool(inside)))

    checks.append(Check("M-Q-M operators non-expansive", non_expansive(lite, target, gamma, rng)))

    spec = bundle.combination
    if spec.form == "linear" and spec.monotone_positive:
        sources = [solve_source(mdp, r, tight) for r in bundle.source_rewards]
        init = mqm_init_linear([s.q_star for s in sources], [s.q_mu for s in sources], spec.coeffs)
        ok = np.all(init.lb <= q_star + 1e-9) and np.all(q_star <= init.ub + 1e-9)
        checks.append(Check("linear initial bounds bracket Q*", bool(ok)))
        m = mqm_iterate(lite, target, gamma, init, cfg, check_monotone=True)
        ok = contraction_ratio_ok(m.ub_deltas, gamma) and contraction_ratio_ok(m.lb_deltas, gamma)
        checks.append(Check("M-Q-M successive deltas contract by gamma", ok, f"{m.iterations} sweeps"))
        inside = np.all(m.lb <= q_star + tol) and np.all(q_star <= m.ub + tol)
        checks.append(Check("M-Q-M bounds bracket Q*", bool(inside)))
        mask = prune_actions(m, PruneConfig(default_delta(cfg.epsilon, gamma)))
        gap, lost = optimality_preserved(mdp, target, mask, cfg)
        checks.append(Check("pruning keeps optimal values and actions", gap <= tol and not lost,
                            f"value gap {gap:.2e}, states without optimal action {lost[:5]}"))
    else:
        checks.append(Check("linear initial bounds bracket Q*", True, "skipped: combination not nonnegative linear"))
    return checks
