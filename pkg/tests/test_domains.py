import numpy as np
import pytest

from qmanip import domains
from qmanip.bounds import CombinationSpec
from qmanip.mdp import sbf, validate


def _cell(r, c, cols):
    return r * cols + c


def test_dollar_euro_rewards():
    b = domains.dollar_euro(1, np.random.default_rng(0))
    assert (b.mdp.n_states, b.mdp.n_actions) == (45, 4)
    t = b.target_rewards
    into_split = [v for (s, a, sp), v in t.values.items() if sp == _cell(0, 4, 9)]
    into_dollar = [v for (s, a, sp), v in t.values.items() if sp == _cell(1, 0, 9)]
    assert into_split and into_split == pytest.approx([1.2] * len(into_split))
    assert set(into_dollar) == {1.0}


def test_frozen_lake_rewards():
    b = domains.frozen_lake(2, np.random.default_rng(0))
    assert b.mdp.n_states == 36
    t = b.target_rewards
    holes = [_cell(1, 1, 6), _cell(3, 4, 6), _cell(2, 3, 6), _cell(4, 1, 6)]
    assert all(v == 0 for (s, a, sp), v in t.values.items() if sp in holes)
    assert {v for (s, a, sp), v in t.values.items() if sp == 35} == {1.0}


def test_racetrack_rewards():
    b = domains.racetrack(1, np.random.default_rng(0))
    assert (b.mdp.n_states, b.mdp.n_actions) == (49, 7)
    start = b.mdp.initial_state
    assert b.target_rewards[(start, 0, start)] == pytest.approx(-1.0)
    collisions = {round(v, 12) for (s, a, sp), v in b.target_rewards.values.items() if sp in b.mdp.terminal and sp != 3}
    assert collisions == {-0.6}


def test_autogen_terminals_and_power():
    b = domains.autogen(sbf=5, rng=np.random.default_rng(3))
    assert len(b.mdp.terminal) == 3 and (b.mdp.n_states, b.mdp.n_actions) == (60, 9)
    t_both = next(i for i, l in enumerate(b.labels) if l == "T(+0.6,+0.6)")
    vals = [v for (s, a, sp), v in b.target_rewards.values.items() if sp == t_both]
    assert vals and vals == pytest.approx([1.2] * len(vals))
    p = domains.autogen(sbf=5, rng=np.random.default_rng(3), combination=CombinationSpec.power_of_sum((1, 1), 3))
    vals = [v for (s, a, sp), v in p.target_rewards.values.items() if sp == t_both]
    assert vals == pytest.approx([1.728] * len(vals))


def test_autogen_reproducible():
    a = domains.autogen(sbf=4, rng=np.random.default_rng(11))
    b = domains.autogen(sbf=4, rng=np.random.default_rng(11))
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize("name", ["dollar_euro", "frozen_lake", "racetrack", "autogen"])
def test_bundles_valid_at_every_level(name):
    for k in domains.SBF_LEVELS[name]:
        b = domains.build(name, k, np.random.default_rng(k))
        assert not validate(b.mdp, b.target_rewards).violations
        assert sbf(b.mdp) <= k


def test_randomize_sbf_keeps_modal():
    base = domains.random_transitions(10, 3, 5, np.random.default_rng(0))
    thin = domains.randomize_sbf(base, 2, np.random.default_rng(1))
    for s in range(10):
        for a in range(3):
            modal = max(base.row(s, a), key=lambda x: x[1])[0]
            assert 1 <= len(thin.row(s, a)) <= 2
            assert modal in [sp for sp, _ in thin.row(s, a)]
    assert domains.randomize_sbf(base, 1, np.random.default_rng(0)).transitions != base.transitions
    with pytest.raises(ValueError):
        domains.randomize_sbf(base, 0, np.random.default_rng(0))


def test_bundle_round_trip(tmp_path):
    b = domains.racetrack(5, np.random.default_rng(2))
    b.save(tmp_path / "b.json")
    back = domains.DomainBundle.load(tmp_path / "b.json")
    assert back.mdp == b.mdp and back.layout == (7, 7)
    assert back.target_rewards.values == b.target_rewards.values


def test_unknown_domain():
    with pytest.raises(ValueError, match="unknown domain"):
        domains.build("maze", 1, np.random.default_rng(0))
