import numpy as np
import pytest

from qmanip import domains
from qmanip.bounds import BoundPair
from qmanip.learning import LearnConfig, evaluate_policy_return, q_learning, smooth
from qmanip.mdp import ActionMask, RewardTable


def test_zero_reward_gives_zero_curve():
    mdp, r = domains.three_state_chain()
    zero = r.map(lambda v: 0.0)
    q, curve = q_learning(mdp, zero, LearnConfig(episodes=20, seed=1))
    assert np.all(curve.returns == 0) and np.all(q == 0)
    assert len(curve) == 20


def test_same_seed_same_curve():
    b = domains.frozen_lake(2, np.random.default_rng(0))
    cfg = LearnConfig(episodes=30, seed=9)
    _, c1 = q_learning(b.mdp, b.target_rewards, cfg)
    _, c2 = q_learning(b.mdp, b.target_rewards, cfg)
    assert np.array_equal(c1.returns, c2.returns)


def test_mask_is_respected():
    b = domains.dollar_euro(1, np.random.default_rng(0))
    allowed = np.zeros((b.mdp.n_states, 4), bool)
    allowed[:, 0] = True
    q, _ = q_learning(b.mdp, b.target_rewards, LearnConfig(episodes=10, seed=0), mask=ActionMask(allowed), debug=True)
    assert np.all(q[:, 1:] == 0)
    allowed[3, 0] = False
    with pytest.raises(ValueError):
        q_learning(b.mdp, b.target_rewards, LearnConfig(episodes=1), mask=ActionMask(allowed))


def test_clipping_keeps_q_in_bounds():
    mdp, r = domains.three_state_chain()
    clip = BoundPair(np.full((3, 1), 1.2), np.full((3, 1), 1.1))
    q, _ = q_learning(mdp, r, LearnConfig(episodes=50, seed=0, alpha=0.5), clip=clip)
    assert np.all(q[:2] >= 1.1 - 1e-12) and np.all(q[:2] <= 1.2 + 1e-12)


def test_learning_improves_on_dollar_euro():
    b = domains.dollar_euro(1, np.random.default_rng(0))
    _, curve = q_learning(b.mdp, b.target_rewards, LearnConfig(episodes=400, seed=3))
    assert curve.returns[-50:].mean() > curve.returns[:50].mean()


def test_config_validation_and_schedules():
    with pytest.raises(ValueError):
        LearnConfig(alpha=0.0)
    cfg = LearnConfig(epsilon_start=1.0, epsilon_decay=0.5, epsilon_min=0.1)
    assert cfg.exploration(0) == 1.0 and cfg.exploration(10) == 0.1


def test_smooth_and_policy_eval():
    assert smooth(np.array([1.0, 3.0, 5.0]), 2).tolist() == [1.0, 2.0, 4.0]
    mdp, r = domains.three_state_chain()
    mean = evaluate_policy_return(mdp, r, np.zeros(3, int), 20_000, 100, np.random.default_rng(0))
    assert mean == pytest.approx(2.0, abs=0.05)  # undiscounted: geometric number of steps, mean 2
