"""Evaluation domains: Dollar-Euro, Frozen Lake, Racetrack and random MDPs.

Grid states are numbered row-major, ``s = row * cols + col``. Rewards for
reaching a cell sit on the transitions entering it. Gridworld dynamics move in
the intended direction with probability 0.8 and otherwise take the outcome of
one of the other actions uniformly; ``randomize_sbf`` then thins every row.

Canonical layouts (row, col):

* Dollar-Euro, 5x9: start (4, 4); "$" (1, 0); "EUR" (1, 8); split "$/EUR" (0, 4).
* Frozen Lake, 6x6: start (0, 0); goal (5, 5); holes H = (1, 1), (3, 4);
  holes H^ = (2, 3), (4, 1).
* Racetrack, 7x7: start (6, 3); goal (0, 3); obstacles (3, 1)-(3, 4) and (1, 5).
  Actions: stay, forward 1/2, left 1/2, right 1/2. Multi-cell moves stop at the
  first obstacle (a crash) or the goal; moves off the grid stop at the edge.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bounds import CombinationSpec, combine_rewards
from .mdp import RewardTable, TabularMdp, mdp_from_dict, mdp_to_dict, rewards_from_list, rewards_to_list

SLIP_INTENDED = 0.8

# (1, mid, max) branching factors evaluated per domain
SBF_LEVELS = {
    "dollar_euro": (1, 2, 4),
    "frozen_lake": (1, 2, 4),
    "racetrack": (1, 5, 7),
    "autogen": (1, 5, 9),
}


@dataclass
class DomainBundle:
    name: str
    mdp: TabularMdp
    source_rewards: list[RewardTable]
    combination: CombinationSpec
    labels: list[str]
    layout: tuple[int, int] | None = None

    @property
    def target_rewards(self) -> RewardTable:
        return combine_rewards(self.source_rewards, self.combination)

    def to_dict(self) -> dict:
        out = mdp_to_dict(self.mdp, self.target_rewards)
        out["bundle"] = {
            "name": self.name,
            "source_rewards": [rewards_to_list(r) for r in self.source_rewards],
            "combination": self.combination.to_dict(),
            "labels": self.labels,
            "layout": list(self.layout) if self.layout else None,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DomainBundle":
        mdp, _ = mdp_from_dict(data)
        b = data["bundle"]
        return cls(
            b["name"],
            mdp,
            [rewards_from_list(r) for r in b["source_rewards"]],
            CombinationSpec.from_dict(b["combination"]),
            list(b["labels"]),
            tuple(b["layout"]) if b.get("layout") else None,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "DomainBundle":
        return cls.from_dict(json.loads(Path(path).read_text()))


def randomize_sbf(mdp: TabularMdp, sbf: int, rng: np.random.Generator) -> TabularMdp:
    """Thin each row to k ~ U{1..min(sbf, |row|)} successors.

    The most likely successor is always kept; the other k-1 are drawn without
    replacement from the rest of the row, and the kept mass is renormalised.
    """
    if sbf < 1:
        raise ValueError(f"sbf must be >= 1, got {sbf}")
    rows = {}
    for s in range(mdp.n_states):
        if s in mdp.terminal:
            continue
        for a in range(mdp.n_actions):
            row = mdp.transitions[s][a]
            k = int(rng.integers(1, min(sbf, len(row)) + 1))
            probs = np.array([p for _, p in row])
            modal = int(np.argmax(probs))
            rest = [i for i in range(len(row)) if i != modal]
            picked = [modal] + [rest[i] for i in rng.choice(len(rest), size=k - 1, replace=False)]
            mass = sum(row[i][1] for i in picked)
            rows[(s, a)] = [(row[i][0], row[i][1] / mass) for i in picked]
    return TabularMdp.from_rows(mdp.n_states, mdp.n_actions, rows, mdp.gamma, mdp.terminal, mdp.initial_state)


def _slip_mdp(n_states, n_actions, outcome: Callable[[int, int], int], gamma, terminal, start) -> TabularMdp:
    rows = {}
    slip = (1.0 - SLIP_INTENDED) / (n_actions - 1)
    for s in range(n_states):
        if s in terminal:
            continue
        for a in range(n_actions):
            dist: dict[int, float] = {}
            for b in range(n_actions):
                sp = outcome(s, b)
                dist[sp] = dist.get(sp, 0.0) + (SLIP_INTENDED if b == a else slip)
            rows[(s, a)] = list(dist.items())
    return TabularMdp.from_rows(n_states, n_actions, rows, gamma, terminal, start)


MOVES4 = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right


def _grid_outcome(rows: int, cols: int):
    def outcome(s, a):
        r, c = divmod(s, cols)
        dr, dc = MOVES4[a]
        nr, nc = r + dr, c + dc
        if 0 <= nr < rows and 0 <= nc < cols:
            return nr * cols + nc
        return s
    return outcome


def _labels(rows, cols, tags: dict[tuple[int, int], str]) -> list[str]:
    return [tags.get((r, c), f"r{r}c{c}") for r in range(rows) for c in range(cols)]


def _finish(name, base: TabularMdp, sbf, rng, reward_fns, combination, labels, layout) -> DomainBundle:
    mdp = base if sbf is None else randomize_sbf(base, sbf, rng)
    sources = [RewardTable.from_function(mdp, fn) for fn in reward_fns]
    return DomainBundle(name, mdp, sources, combination, labels, layout)


def dollar_euro(sbf: int | None, rng: np.random.Generator, gamma: float = 0.9) -> DomainBundle:
    rows, cols = 5, 9
    cell = lambda r, c: r * cols + c
    start, dollar, euro, split = cell(4, 4), cell(1, 0), cell(1, 8), cell(0, 4)
    base = _slip_mdp(rows * cols, 4, _grid_outcome(rows, cols), gamma, {dollar, euro, split}, start)

    def r1(s, a, sp):
        return 1.0 if sp == dollar else 0.6 if sp == split else 0.0

    def r2(s, a, sp):
        return 1.0 if sp == euro else 0.6 if sp == split else 0.0

    labels = _labels(rows, cols, {(4, 4): "start", (1, 0): "$", (1, 8): "EUR", (0, 4): "$/EUR"})
    return _finish("dollar_euro", base, sbf, rng, [r1, r2], CombinationSpec.linear(1, 1), labels, (rows, cols))


def frozen_lake(sbf: int | None, rng: np.random.Generator, gamma: float = 0.9) -> DomainBundle:
    rows, cols = 6, 6
    cell = lambda r, c: r * cols + c
    start, goal = cell(0, 0), cell(5, 5)
    holes_h = {cell(1, 1), cell(3, 4)}
    holes_hat = {cell(2, 3), cell(4, 1)}
    base = _slip_mdp(rows * cols, 4, _grid_outcome(rows, cols), gamma, holes_h | holes_hat | {goal}, start)

    def r1(s, a, sp):
        return 1.0 if sp in holes_h else -1.0 if sp in holes_hat else 0.5 if sp == goal else 0.0

    def r2(s, a, sp):
        return -1.0 if sp in holes_h else 1.0 if sp in holes_hat else 0.5 if sp == goal else 0.0

    tags = {(0, 0): "start", (5, 5): "goal", (1, 1): "H", (3, 4): "H", (2, 3): "H^", (4, 1): "H^"}
    return _finish("frozen_lake", base, sbf, rng, [r1, r2], CombinationSpec.linear(1, 1),
                   _labels(rows, cols, tags), (rows, cols))


RACE_ACTIONS = ((0, 0), (-1, 0), (-2, 0), (0, -1), (0, -2), (0, 1), (0, 2))


def racetrack(sbf: int | None, rng: np.random.Generator, gamma: float = 0.95) -> DomainBundle:
    rows, cols = 7, 7
    cell = lambda r, c: r * cols + c
    start, goal = cell(6, 3), cell(0, 3)
    obstacles = {cell(3, 1), cell(3, 2), cell(3, 3), cell(3, 4), cell(1, 5)}

    def outcome(s, a):
        r, c = divmod(s, cols)
        dr, dc = RACE_ACTIONS[a]
        n = max(abs(dr), abs(dc))
        for _ in range(n):
            nr, nc = r + (dr > 0) - (dr < 0), c + (dc > 0) - (dc < 0)
            if not (0 <= nr < rows and 0 <= nc < cols):
                break
            r, c = nr, nc
            if cell(r, c) in obstacles or cell(r, c) == goal:
                break
        return cell(r, c)

    base = _slip_mdp(rows * cols, len(RACE_ACTIONS), outcome, gamma, obstacles | {goal}, start)

    def parked(s, sp):
        return s == start and sp == start

    def r_avoid(s, a, sp):
        return (0.0 if parked(s, sp) else 0.2) - (0.5 if sp in obstacles else 0.0)

    def r_terminate(s, a, sp):
        if parked(s, sp):
            return -4.0
        return -0.3 + (2.0 if sp == goal else 0.0)

    def r_stay(s, a, sp):
        return 3.0 if parked(s, sp) else 0.0

    tags = {(6, 3): "start", (0, 3): "goal"}
    tags.update({divmod(o, cols): "X" for o in obstacles})
    return _finish("racetrack", base, sbf, rng, [r_avoid, r_terminate, r_stay],
                   CombinationSpec.linear(1, 1, 1), _labels(rows, cols, tags), (rows, cols))


def random_transitions(
    n_states: int,
    n_actions: int,
    n_successors: int,
    rng: np.random.Generator,
    terminal: Sequence[int] = (),
    gamma: float = 0.9,
    initial_state: int = 0,
) -> TabularMdp:
    """Dense random rows: ``n_successors`` distinct next states, Dirichlet(1) weights."""
    k = min(n_successors, n_states)
    terminal = set(int(t) for t in terminal)
    rows = {}
    for s in range(n_states):
        if s in terminal:
            continue
        for a in range(n_actions):
            nexts = rng.choice(n_states, size=k, replace=False)
            rows[(s, a)] = list(zip(nexts.tolist(), rng.dirichlet(np.ones(k)).tolist()))
    return TabularMdp.from_rows(n_states, n_actions, rows, gamma, terminal, initial_state)


def autogen(
    n_states: int = 60,
    n_actions: int = 9,
    sbf: int | None = 9,
    rng: np.random.Generator | None = None,
    combination: CombinationSpec | None = None,
    gamma: float = 0.9,
) -> DomainBundle:
    """Random MDP with three rewarded terminals: (+1, -1), (-1, +1) and (+0.6, +0.6)."""
    rng = np.random.default_rng() if rng is None else rng
    t_pos, t_neg, t_both = (int(t) for t in rng.choice(np.arange(1, n_states), size=3, replace=False))
    base = random_transitions(n_states, n_actions, n_actions, rng, (t_pos, t_neg, t_both), gamma)
    pairs = {t_pos: (1.0, -1.0), t_neg: (-1.0, 1.0), t_both: (0.6, 0.6)}

    def source(i):
        return lambda s, a, sp: pairs[sp][i] if sp in pairs else 0.0

    labels = [{t_pos: "T(+1,-1)", t_neg: "T(-1,+1)", t_both: "T(+0.6,+0.6)"}.get(s, f"s{s}") for s in range(n_states)]
    spec = combination or CombinationSpec.linear(1, 1)
    return _finish("autogen", base, sbf, rng, [source(0), source(1)], spec, labels, None)


def random_mdp(
    n_states: int,
    n_actions: int,
    rng: np.random.Generator,
    max_successors: int = 4,
    n_terminal: int = 1,
    gamma: float | None = None,
) -> tuple[TabularMdp, RewardTable]:
    """Random MDP with uniform(-1, 1) rewards on every transition, for property checks."""
    gamma = float(rng.uniform(0.5, 0.95)) if gamma is None else gamma
    n_terminal = min(n_terminal, n_states - 1)
    terminal = rng.choice(np.arange(1, n_states), size=n_terminal, replace=False) if n_terminal else ()
    base = random_transitions(n_states, n_actions, max_successors, rng, terminal, gamma)
    mdp = randomize_sbf(base, max_successors, rng)
    rewards = RewardTable.from_function(mdp, lambda s, a, sp: rng.uniform(-1.0, 1.0))
    return mdp, rewards


def three_state_chain(gamma: float = 0.5) -> tuple[TabularMdp, RewardTable]:
    """s0 -> {s1, s2} and s1 -> {s0, s2} with probability 1/2 each, reward 1; s2 is terminal."""
    mdp = TabularMdp.from_rows(
        3, 1, {(0, 0): [(1, 0.5), (2, 0.5)], (1, 0): [(0, 0.5), (2, 0.5)]}, gamma, terminal={2}, initial_state=0
    )
    return mdp, RewardTable.from_function(mdp, lambda s, a, sp: 1.0)


BUILDERS = {
    "dollar_euro": dollar_euro,
    "frozen_lake": frozen_lake,
    "racetrack": racetrack,
}


def build(name: str, sbf: int | None, rng: np.random.Generator, combination: CombinationSpec | None = None) -> DomainBundle:
    if name == "autogen":
        return autogen(sbf=sbf, rng=rng, combination=combination)
    try:
        bundle = BUILDERS[name](sbf, rng)
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; choose from {sorted([*BUILDERS, 'autogen'])}") from None
    if combination is not None:
        if combination.arity != bundle.combination.arity:
            raise ValueError(f"{name} has {bundle.combination.arity} sources; combination has arity {combination.arity}")
        bundle.combination = combination
    return bundle
