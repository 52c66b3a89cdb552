import numpy as np

from qmanip import domains
from qmanip.mdp import ActionMask
from qmanip.solvers import SolveConfig, value_iteration
from qmanip.verify import contraction_ratio_ok, optimality_preserved, verify_bundle


def test_all_checks_pass_on_each_domain():
    for name in ("frozen_lake", "racetrack", "autogen"):
        checks = verify_bundle(domains.build(name, 2, np.random.default_rng(0)))
        assert all(c.passed for c in checks), [c.line() for c in checks if not c.passed]


def test_optimality_check_catches_a_bad_mask():
    b = domains.dollar_euro(1, np.random.default_rng(0))
    q = value_iteration(b.mdp, b.target_rewards)
    allowed = np.ones_like(q, bool)
    s = b.mdp.initial_state
    allowed[s] = q[s] < q[s].max() - 1e-6  # keep only suboptimal actions at the start
    gap, lost = optimality_preserved(b.mdp, b.target_rewards, ActionMask(allowed), SolveConfig())
    assert gap > 0 and s in lost


def test_contraction_ratio_helper():
    assert contraction_ratio_ok([1.0, 0.5, 0.25], 0.5)
    assert not contraction_ratio_ok([1.0, 0.9], 0.5)
