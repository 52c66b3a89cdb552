"""Finite MDPs with sparse transition rows, reward tables and lite-models.

States and actions are integer indices. Terminal states carry no outgoing
rows and contribute zero future value.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-9

Row = tuple[tuple[int, float], ...]


class EpisodeFinished(RuntimeError):
    pass


def _pad(rows: Sequence[Sequence[Sequence[int]]], n_states: int, n_actions: int):
    width = max((len(r) for per_s in rows for r in per_s), default=1) or 1
    succ = np.zeros((n_states, n_actions, width), dtype=np.int64)
    valid = np.zeros((n_states, n_actions, width), dtype=bool)
    for s, per_s in enumerate(rows):
        for a, r in enumerate(per_s):
            k = len(r)
            succ[s, a, :k] = r
            valid[s, a, :k] = True
    return succ, valid


@dataclass(frozen=True)
class TabularMdp:
    """A finite discounted MDP without rewards.

    ``transitions[s][a]`` is a tuple of ``(next_state, probability)`` pairs,
    sorted by next state. Terminal states have empty rows for every action.
    """

    n_states: int
    n_actions: int
    transitions: tuple[tuple[Row, ...], ...]
    gamma: float
    terminal: frozenset[int]
    initial_state: int = 0

    @classmethod
    def from_rows(
        cls,
        n_states: int,
        n_actions: int,
        rows: Mapping[tuple[int, int], Iterable[tuple[int, float]]],
        gamma: float,
        terminal: Iterable[int] = (),
        initial_state: int = 0,
    ) -> "TabularMdp":
        """Build from a ``{(s, a): [(sp, p), ...]}`` mapping; missing rows are empty."""
        table = []
        for s in range(n_states):
            per_s = []
            for a in range(n_actions):
                row = rows.get((s, a), ())
                per_s.append(tuple(sorted((int(sp), float(p)) for sp, p in row)))
            table.append(tuple(per_s))
        return cls(n_states, n_actions, tuple(table), float(gamma), frozenset(int(t) for t in terminal), int(initial_state))

    def row(self, s: int, a: int) -> Row:
        return self.transitions[s][a]

    def support(self):
        """Yield every ``(s, a, sp)`` with nonzero listed probability."""
        for s in range(self.n_states):
            for a in range(self.n_actions):
                for sp, _ in self.transitions[s][a]:
                    yield s, a, sp

    @cached_property
    def nonterminal(self) -> np.ndarray:
        mask = np.ones(self.n_states, dtype=bool)
        mask[list(self.terminal)] = False
        return mask

    @cached_property
    def _padded(self):
        succ, valid = _pad(
            [[[sp for sp, _ in r] for r in per_s] for per_s in self.transitions],
            self.n_states,
            self.n_actions,
        )
        prob = np.zeros(succ.shape)
        for s, per_s in enumerate(self.transitions):
            for a, r in enumerate(per_s):
                prob[s, a, : len(r)] = [p for _, p in r]
        return succ, prob, valid

    @property
    def succ(self) -> np.ndarray:
        """(S, A, K) successor indices, padded with 0 where ``valid`` is False."""
        return self._padded[0]

    @property
    def prob(self) -> np.ndarray:
        return self._padded[1]

    @property
    def valid(self) -> np.ndarray:
        return self._padded[2]

    @cached_property
    def _cdf(self):
        return [[np.cumsum([p for _, p in r]) for r in per_s] for per_s in self.transitions]


@dataclass(frozen=True)
class RewardTable:
    """Reward ``R(s, a, s')`` defined exactly on a transition support.

    Reads off the support raise ``KeyError``.
    """

    values: Mapping[tuple[int, int, int], float]

    def __getitem__(self, key: tuple[int, int, int]) -> float:
        return self.values[key]

    def __len__(self) -> int:
        return len(self.values)

    def gather(self, succ: np.ndarray, valid: np.ndarray) -> np.ndarray:
        """Reward array aligned with a padded ``(S, A, K)`` layout; 0 on padding."""
        out = np.zeros(succ.shape)
        for s, a, k in zip(*np.nonzero(valid)):
            out[s, a, k] = self.values[(int(s), int(a), int(succ[s, a, k]))]
        return out

    def array(self, mdp: TabularMdp) -> np.ndarray:
        return self.gather(mdp.succ, mdp.valid)

    def map(self, fn) -> "RewardTable":
        return RewardTable({k: float(fn(v)) for k, v in self.values.items()})

    def __neg__(self) -> "RewardTable":
        return self.map(lambda v: -v)

    def __abs__(self) -> "RewardTable":
        return self.map(abs)

    @classmethod
    def from_function(cls, mdp: TabularMdp, fn) -> "RewardTable":
        return cls({(s, a, sp): float(fn(s, a, sp)) for s, a, sp in mdp.support()})


@dataclass(frozen=True)
class LiteModel:
    """Per-(s, a) sets of one-step reachable successors, without probabilities."""

    reachable: tuple[tuple[frozenset[int], ...], ...]

    @property
    def n_states(self) -> int:
        return len(self.reachable)

    @property
    def n_actions(self) -> int:
        return len(self.reachable[0]) if self.reachable else 0

    @cached_property
    def _padded(self):
        return _pad(
            [[sorted(r) for r in per_s] for per_s in self.reachable],
            self.n_states,
            self.n_actions,
        )

    @property
    def succ(self) -> np.ndarray:
        return self._padded[0]

    @property
    def valid(self) -> np.ndarray:
        return self._padded[1]

    @cached_property
    def terminal_rows(self) -> np.ndarray:
        """States whose rows are empty for every action."""
        return ~self.valid.any(axis=(1, 2))


@dataclass
class ActionMask:
    """Allowed actions per state as an ``(S, A)`` boolean array."""

    allowed: np.ndarray

    @classmethod
    def full(cls, n_states: int, n_actions: int) -> "ActionMask":
        return cls(np.ones((n_states, n_actions), dtype=bool))

    def actions(self, s: int) -> list[int]:
        return [int(a) for a in np.flatnonzero(self.allowed[s])]

    def __contains__(self, sa: tuple[int, int]) -> bool:
        return bool(self.allowed[sa])


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def validate(mdp: TabularMdp, rewards: RewardTable | None = None) -> ValidationReport:
    """Check structural invariants. Returns a report; empty means valid."""
    report = ValidationReport()
    bad = report.violations
    if mdp.n_states < 1 or mdp.n_actions < 1:
        bad.append(f"non-positive sizes: n_states={mdp.n_states}, n_actions={mdp.n_actions}")
        return report
    if not 0.0 <= mdp.gamma < 1.0:
        bad.append(f"gamma {mdp.gamma} outside [0, 1)")
    if len(mdp.transitions) != mdp.n_states or any(len(r) != mdp.n_actions for r in mdp.transitions):
        bad.append("transition table shape does not match (n_states, n_actions)")
        return report
    for t in mdp.terminal:
        if not 0 <= t < mdp.n_states:
            bad.append(f"terminal state {t} out of range")
    if not 0 <= mdp.initial_state < mdp.n_states:
        bad.append(f"initial_state {mdp.initial_state} out of range")
    elif mdp.initial_state in mdp.terminal:
        bad.append(f"initial_state {mdp.initial_state} is terminal")
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            row = mdp.transitions[s][a]
            if s in mdp.terminal:
                if row:
                    bad.append(f"terminal state {s} has outgoing row for action {a}")
                continue
            if not row:
                bad.append(f"empty transition row at (s={s}, a={a})")
                continue
            nexts = [sp for sp, _ in row]
            if len(set(nexts)) != len(nexts):
                bad.append(f"duplicate successor in row (s={s}, a={a})")
            if any(not 0 <= sp < mdp.n_states for sp in nexts):
                bad.append(f"successor out of range in row (s={s}, a={a})")
            probs = [p for _, p in row]
            if any(p < 0 or not math.isfinite(p) for p in probs):
                bad.append(f"negative or non-finite probability in row (s={s}, a={a})")
            total = math.fsum(probs)
            if abs(total - 1.0) > PROB_TOL:
                bad.append(f"row (s={s}, a={a}) sums to {total!r}, not 1")
    if rewards is not None:
        support = set(mdp.support())
        for key, r in rewards.values.items():
            if key not in support:
                bad.append(f"reward on transition outside support: (s, a, sp)={key}")
            elif not math.isfinite(r):
                bad.append(f"non-finite reward at {key}")
        for key in support - set(rewards.values):
            bad.append(f"missing reward on support transition {key}")
    return report


def extract_lite_model(mdp: TabularMdp) -> LiteModel:
    return LiteModel(
        tuple(
            tuple(frozenset(sp for sp, p in mdp.transitions[s][a] if p > 0) for a in range(mdp.n_actions))
            for s in range(mdp.n_states)
        )
    )


def sbf(mdp: TabularMdp) -> int:
    """Stochastic branching factor: largest successor support over non-terminal rows."""
    sizes = [
        sum(1 for _, p in mdp.transitions[s][a] if p > 0)
        for s in range(mdp.n_states)
        if s not in mdp.terminal
        for a in range(mdp.n_actions)
    ]
    if not sizes:
        raise ValueError("no transitions: every state is terminal")
    return max(sizes)


def sample_step(mdp: TabularMdp, rewards: RewardTable, s: int, a: int, rng: np.random.Generator):
    """Draw ``(s', r, done)`` from ``T(.|s, a)``."""
    if s in mdp.terminal:
        raise EpisodeFinished(f"episode finished: state {s} is terminal")
    row = mdp.transitions[s][a]
    cdf = mdp._cdf[s][a]
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    sp = row[min(k, len(row) - 1)][0]
    return sp, rewards[(s, a, sp)], sp in mdp.terminal


# JSON interchange ----------------------------------------------------------


def mdp_to_dict(mdp: TabularMdp, rewards: RewardTable | None = None) -> dict:
    out = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "initial_state": mdp.initial_state,
        "terminal": sorted(mdp.terminal),
        "transitions": [
            {"s": s, "a": a, "next": [{"sp": sp, "p": p} for sp, p in mdp.transitions[s][a]]}
            for s in range(mdp.n_states)
            for a in range(mdp.n_actions)
            if mdp.transitions[s][a]
        ],
    }
    if rewards is not None:
        out["rewards"] = rewards_to_list(rewards)
    return out


def rewards_to_list(rewards: RewardTable) -> list[dict]:
    return [{"s": s, "a": a, "sp": sp, "r": r} for (s, a, sp), r in sorted(rewards.values.items())]


def rewards_from_list(items: Iterable[Mapping]) -> RewardTable:
    return RewardTable({(int(d["s"]), int(d["a"]), int(d["sp"])): float(d["r"]) for d in items})


def mdp_from_dict(data: Mapping) -> tuple[TabularMdp, RewardTable | None]:
    rows = {(int(t["s"]), int(t["a"])): [(int(n["sp"]), float(n["p"])) for n in t["next"]] for t in data["transitions"]}
    mdp = TabularMdp.from_rows(
        int(data["n_states"]),
        int(data["n_actions"]),
        rows,
        gamma=float(data["gamma"]),
        terminal=data.get("terminal", ()),
        initial_state=int(data.get("initial_state", 0)),
    )
    rewards = rewards_from_list(data["rewards"]) if "rewards" in data else None
    return mdp, rewards


def save_mdp(path: str | Path, mdp: TabularMdp, rewards: RewardTable | None = None) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp, rewards), indent=1))


def load_mdp(path: str | Path) -> tuple[TabularMdp, RewardTable | None]:
    return mdp_from_dict(json.loads(Path(path).read_text()))
