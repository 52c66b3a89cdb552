import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmanip import domains
from qmanip.baselines import solve_source
from qmanip.bounds import (
    BoundPair,
    CombinationSpec,
    PruneConfig,
    apply_noise_to_init,
    combine_rewards,
    default_delta,
    heatmap_rows,
    mqm_init_linear,
    mqm_init_naive,
    mqm_init_nonlinear,
    mqm_iterate,
    prune_actions,
    pruning_stats,
    qm_iterate,
)
from qmanip.mdp import RewardTable, extract_lite_model
from qmanip.solvers import SolveConfig, value_iteration

TIGHT = SolveConfig(1e-12)


def test_combination_values():
    assert CombinationSpec.linear(1, 1)(0.6, 0.6) == pytest.approx(1.2)
    assert CombinationSpec.power_of_sum((1, 1), 3)(0.6, 0.6) == pytest.approx(1.728)
    assert not CombinationSpec.linear(1, -1).monotone_positive
    spec = CombinationSpec.power_of_sum((1, 2), 2)
    assert CombinationSpec.from_dict(spec.to_dict()) == spec


def test_combine_requires_equal_support():
    with pytest.raises(ValueError):
        combine_rewards([RewardTable({(0, 0, 1): 1.0}), RewardTable({(0, 0, 2): 1.0})], CombinationSpec.linear(1, 1))


def test_qm_on_chain():
    mdp, r = domains.three_state_chain()
    b = qm_iterate(extract_lite_model(mdp), r, mdp.gamma, TIGHT)
    assert b.ub[:2, 0] == pytest.approx([2, 2], abs=1e-9)
    assert b.lb[:2, 0] == pytest.approx([1, 1], abs=1e-9)


def test_linear_init_single_source_collapses():
    mdp, r = domains.random_mdp(8, 2, np.random.default_rng(1))
    s = solve_source(mdp, r, TIGHT)
    b = mqm_init_linear([s.q_star], [s.q_mu], [2.0])
    assert np.allclose(b.ub, 2 * s.q_star) and np.allclose(b.lb, 2 * s.q_star)


def test_linear_init_rejects_negative():
    z = np.zeros((2, 2))
    with pytest.raises(ValueError, match="nonnegative"):
        mqm_init_linear([z, z], [z, z], [1.0, -0.5])


def test_nonlinear_init_is_approximate():
    q = np.ones((2, 2))
    b = mqm_init_nonlinear([q, q], CombinationSpec.power_of_sum((1, 1), 3))
    assert b.approximate and np.allclose(b.ub, 8) and np.allclose(b.lb, -8)
    with pytest.raises(ValueError):
        mqm_init_nonlinear([q, q], CombinationSpec.linear(1, -1))


def test_naive_init_brackets():
    mdp, r = domains.random_mdp(15, 3, np.random.default_rng(2))
    lite = extract_lite_model(mdp)
    init = mqm_init_naive(lite, r, mdp.gamma)
    q = value_iteration(mdp, r, TIGHT)
    assert np.all(init.lb <= q + 1e-9) and np.all(q <= init.ub + 1e-9)
    out = mqm_iterate(lite, r, mdp.gamma, init, TIGHT, check_monotone=True)
    assert np.all(out.lb <= q + 1e-9) and np.all(q <= out.ub + 1e-9)


def test_noise_widens_and_keeps_terminal_rows():
    b = BoundPair(np.zeros((2, 1)), np.zeros((2, 1)))
    w = apply_noise_to_init(b, -0.1, 0.2, 0.5, None, np.array([False, True]))
    assert w.ub[:, 0].tolist() == pytest.approx([0.4, 0.0])
    assert w.lb[:, 0].tolist() == pytest.approx([-0.2, 0.0])
    with pytest.raises(ValueError):
        apply_noise_to_init(b, 0.2, -0.1, 0.5)


def test_prune_rule_and_ties():
    b = BoundPair(np.array([[3.0, 1.0, 2.5]]), np.array([[2.0, 0.0, 1.0]]))
    assert prune_actions(b, PruneConfig(0.0)).allowed.tolist() == [[True, False, True]]
    assert prune_actions(b, PruneConfig(1.0)).allowed.tolist() == [[True, False, True]]
    assert prune_actions(b, PruneConfig(1.5)).allowed.tolist() == [[True, True, True]]
    tie = BoundPair(np.array([[1.0, 1.0]]), np.array([[1.0, 1.0]]))
    assert prune_actions(tie, PruneConfig(0.0)).allowed.all()
    with pytest.raises(ValueError):
        PruneConfig(-1.0)


def test_stats_and_heatmap():
    bundle = domains.dollar_euro(1, np.random.default_rng(0))
    mdp = bundle.mdp
    lite = extract_lite_model(mdp)
    b = qm_iterate(lite, bundle.target_rewards, mdp.gamma)
    mask = prune_actions(b, PruneConfig(default_delta(1e-8, mdp.gamma)))
    st_ = pruning_stats(mask, mdp)
    assert 0 < st_.pruned_fraction < 1
    rows = heatmap_rows(st_, mdp, bundle.layout)
    assert len(rows) == mdp.n_states - len(mdp.terminal)
    assert rows[0][1:3] == (0, 0)


def test_bound_pair_round_trip():
    b = BoundPair(np.arange(4.0).reshape(2, 2), -np.ones((2, 2)), 3, True, 1e-9, False, "x", [1.0], [0.5])
    back = BoundPair.from_dict(b.to_dict())
    assert np.array_equal(back.ub, b.ub) and back.source == "x" and back.iterations == 3


def _qm_and_mqm(mdp, sources, coeffs):
    target = combine_rewards(sources, CombinationSpec.linear(*coeffs))
    lite = extract_lite_model(mdp)
    solved = [solve_source(mdp, s, TIGHT) for s in sources]
    init = mqm_init_linear([s.q_star for s in solved], [s.q_mu for s in solved], coeffs)
    return target, lite, qm_iterate(lite, target, mdp.gamma, TIGHT), mqm_iterate(lite, target, mdp.gamma, init, TIGHT)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 20), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_bounds_bracket_and_mqm_tighter(n_states, n_actions, seed):
    rng = np.random.default_rng(seed)
    mdp, r1 = domains.random_mdp(n_states, n_actions, rng)
    r2 = RewardTable.from_function(mdp, lambda s, a, sp: rng.uniform(-1, 1))
    target, lite, qm, mqm = _qm_and_mqm(mdp, [r1, r2], [float(rng.uniform(0, 2)), float(rng.uniform(0, 2))])
    q = value_iteration(mdp, target, TIGHT)
    for b in (qm, mqm):
        assert np.all(b.lb <= q + 1e-8) and np.all(q <= b.ub + 1e-8)
    assert np.all(mqm.ub <= qm.ub + 1e-8) and np.all(mqm.lb >= qm.lb - 1e-8)
