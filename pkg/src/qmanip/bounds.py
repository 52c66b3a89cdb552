"""Upper/lower bounds on the target Q-function and bound-based action pruning.

Two iteration schemes are provided over a lite-model (reachable successor
sets without probabilities):

* ``qm_iterate`` applies the optimistic/pessimistic successor backups, each a
  gamma-contraction with a unique fixed point.
* ``mqm_iterate`` starts from valid bounds and clamps every sweep against the
  previous table, so the upper bound never rises and the lower bound never
  falls. Its fixed point depends on the start.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mdp import ActionMask, LiteModel, RewardTable, TabularMdp
from .solvers import NotConverged, SolveConfig


@dataclass(frozen=True)
class CombinationSpec:
    """Known map from source rewards to the target reward.

    ``form`` is ``"linear"`` (sum c_i R_i) or ``"power"`` ((sum c_i R_i) ** exponent).
    ``noise`` is an optional ``(n_min, n_max)`` range of additive target noise.
    """

    coeffs: tuple[float, ...]
    form: str = "linear"
    exponent: int = 1
    noise: tuple[float, float] | None = None

    def __post_init__(self):
        if self.form not in ("linear", "power"):
            raise ValueError(f"unknown combination form {self.form!r}")
        if self.form == "power" and (int(self.exponent) != self.exponent or self.exponent < 1):
            raise ValueError(f"exponent must be a positive integer, got {self.exponent}")
        if self.noise is not None and self.noise[0] > self.noise[1]:
            raise ValueError(f"noise range reversed: {self.noise}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @classmethod
    def linear(cls, *coeffs: float, noise=None) -> "CombinationSpec":
        return cls(tuple(coeffs), "linear", 1, noise)

    @classmethod
    def power_of_sum(cls, coeffs: Sequence[float], exponent: int, noise=None) -> "CombinationSpec":
        return cls(tuple(coeffs), "power", int(exponent), noise)

    @property
    def arity(self) -> int:
        return len(self.coeffs)

    @property
    def monotone_positive(self) -> bool:
        return all(c >= 0 for c in self.coeffs)

    def __call__(self, *values):
        if len(values) != self.arity:
            raise ValueError(f"combination expects {self.arity} inputs, got {len(values)}")
        total = sum(c * v for c, v in zip(self.coeffs, values))
        return total**self.exponent if self.form == "power" else total

    def to_dict(self) -> dict:
        return {"form": self.form, "coeffs": list(self.coeffs), "exponent": self.exponent,
                "noise": list(self.noise) if self.noise is not None else None}

    @classmethod
    def from_dict(cls, d: dict) -> "CombinationSpec":
        noise = d.get("noise")
        return cls(tuple(d["coeffs"]), d.get("form", "linear"), int(d.get("exponent", 1)),
                   tuple(noise) if noise is not None else None)


@dataclass
class BoundPair:
    ub: np.ndarray
    lb: np.ndarray
    iterations: int = 0
    converged: bool = True
    residual: float = 0.0
    approximate: bool = False
    source: str = ""
    ub_deltas: list[float] = field(default_factory=list, repr=False)
    lb_deltas: list[float] = field(default_factory=list, repr=False)

    @property
    def gap(self) -> np.ndarray:
        return self.ub - self.lb

    def to_dict(self) -> dict:
        return {"ub": self.ub.tolist(), "lb": self.lb.tolist(), "iterations": self.iterations,
                "converged": self.converged, "residual": self.residual,
                "approximate": self.approximate, "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundPair":
        return cls(np.asarray(d["ub"], float), np.asarray(d["lb"], float), d.get("iterations", 0),
                   d.get("converged", True), d.get("residual", 0.0), d.get("approximate", False),
                   d.get("source", ""))


@dataclass(frozen=True)
class PruneConfig:
    delta: float = 0.0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")


def combine_rewards(sources: Sequence[RewardTable], spec: CombinationSpec) -> RewardTable:
    """Pointwise target reward. Noise is not applied here."""
    if len(sources) != spec.arity:
        raise ValueError(f"{len(sources)} source rewards for a combination of arity {spec.arity}")
    keys = set(sources[0].values)
    for i, src in enumerate(sources[1:], 1):
        if set(src.values) != keys:
            raise ValueError(f"source reward {i} is defined on a different transition support")
    return RewardTable({k: float(spec(*(src.values[k] for src in sources))) for k in sorted(keys)})


def geometric_horizon(gamma: float, t_max: int | None) -> float:
    """sum_{t < t_max} gamma**t; infinite horizon when ``t_max`` is None."""
    if t_max is None:
        return 1.0 / (1.0 - gamma)
    return (1.0 - gamma**t_max) / (1.0 - gamma)


# Backups --------------------------------------------------------------------


def _successor_targets(q, lite: LiteModel, r: np.ndarray, gamma: float, shift: float):
    v = q.max(axis=1)
    return r + shift + gamma * v[lite.succ]


def optimistic_backup(q, lite: LiteModel, r: np.ndarray, gamma: float, shift: float = 0.0) -> np.ndarray:
    """max over reachable s' of r + shift + gamma * max_a' q(s', a'); terminal rows copied."""
    t = np.where(lite.valid, _successor_targets(q, lite, r, gamma, shift), -np.inf).max(axis=2)
    term = lite.terminal_rows
    t[term] = q[term]
    return t


def pessimistic_backup(q, lite: LiteModel, r: np.ndarray, gamma: float, shift: float = 0.0) -> np.ndarray:
    """min over reachable s' of r + shift + gamma * max_a' q(s', a'); terminal rows copied."""
    t = np.where(lite.valid, _successor_targets(q, lite, r, gamma, shift), np.inf).min(axis=2)
    term = lite.terminal_rows
    t[term] = q[term]
    return t


def monotone_upper_backup(q, lite, r, gamma, shift=0.0) -> np.ndarray:
    return np.minimum(q, optimistic_backup(q, lite, r, gamma, shift))


def monotone_lower_backup(q, lite, r, gamma, shift=0.0) -> np.ndarray:
    return np.maximum(q, pessimistic_backup(q, lite, r, gamma, shift))


def _run_pair(ub_op, lb_op, ub0, lb0, cfg: SolveConfig, what: str, check_monotone: bool = False) -> BoundPair:
    ub, lb = ub0, lb0
    ub_deltas, lb_deltas = [], []
    for sweep in range(1, cfg.max_sweeps + 1):
        new_ub, new_lb = ub_op(ub), lb_op(lb)
        if check_monotone:
            assert np.all(new_ub <= ub) and np.all(new_lb >= lb), "monotone sweep violated"
        du = float(np.max(np.abs(new_ub - ub)))
        dl = float(np.max(np.abs(new_lb - lb)))
        ub_deltas.append(du)
        lb_deltas.append(dl)
        ub, lb = new_ub, new_lb
        residual = max(du, dl)
        if residual <= cfg.epsilon:
            return BoundPair(ub, lb, sweep, True, residual, source=what,
                             ub_deltas=ub_deltas, lb_deltas=lb_deltas)
    raise NotConverged(what, cfg.max_sweeps, residual)


def _noise(noise) -> tuple[float, float]:
    if noise is None:
        return 0.0, 0.0
    n_min, n_max = noise
    if n_min > n_max:
        raise ValueError(f"noise range reversed: {noise}")
    return float(n_min), float(n_max)


def qm_iterate(
    lite: LiteModel,
    target_r: RewardTable,
    gamma: float,
    cfg: SolveConfig = SolveConfig(),
    noise: tuple[float, float] | None = None,
    start: tuple[np.ndarray, np.ndarray] | None = None,
) -> BoundPair:
    """Fixed points of the optimistic (ub) and pessimistic (lb) successor backups.

    Starts from zeros unless ``start=(ub0, lb0)`` is given; the fixed point is
    the same either way.
    """
    r = target_r.gather(lite.succ, lite.valid)
    n_min, n_max = _noise(noise)
    shape = (lite.n_states, lite.n_actions)
    ub0, lb0 = (np.zeros(shape), np.zeros(shape)) if start is None else (np.array(start[0], float), np.array(start[1], float))
    return _run_pair(
        lambda q: optimistic_backup(q, lite, r, gamma, n_max),
        lambda q: pessimistic_backup(q, lite, r, gamma, n_min),
        ub0, lb0, cfg, "qm",
    )


def mqm_iterate(
    lite: LiteModel,
    target_r: RewardTable,
    gamma: float,
    init: BoundPair,
    cfg: SolveConfig = SolveConfig(),
    noise: tuple[float, float] | None = None,
    check_monotone: bool = False,
) -> BoundPair:
    """Tighten valid initial bounds with the clamped backups.

    The result is only guaranteed to bracket the target Q* if ``init`` does.
    Terminal rows keep their initialised values.
    """
    r = target_r.gather(lite.succ, lite.valid)
    n_min, n_max = _noise(noise)
    out = _run_pair(
        lambda q: monotone_upper_backup(q, lite, r, gamma, n_max),
        lambda q: monotone_lower_backup(q, lite, r, gamma, n_min),
        np.array(init.ub, float), np.array(init.lb, float), cfg, "mqm", check_monotone,
    )
    out.approximate = init.approximate
    out.source = f"mqm<{init.source}>" if init.source else "mqm"
    return out


# Initialisations ------------------------------------------------------------


def mqm_init_naive(lite: LiteModel, target_r: RewardTable, gamma: float, t_max: int | None = None) -> BoundPair:
    """Constant bounds from the extreme rewards summed over the horizon.

    The extremes are widened to include 0; terminal rows are set to 0.
    """
    if not len(target_r):
        raise ValueError("target reward table is empty")
    values = list(target_r.values.values())
    horizon = geometric_horizon(gamma, t_max)
    shape = (lite.n_states, lite.n_actions)
    ub = np.full(shape, max(max(values), 0.0) * horizon)
    lb = np.full(shape, min(min(values), 0.0) * horizon)
    ub[lite.terminal_rows] = 0.0
    lb[lite.terminal_rows] = 0.0
    return BoundPair(ub, lb, source="naive")


def mqm_init_linear(q_stars: Sequence[np.ndarray], q_mus: Sequence[np.ndarray], coeffs: Sequence[float]) -> BoundPair:
    """Bounds for a nonnegative linear combination from source Q* and Q^mu tables.

    ub = sum_i c_i Q*_i;  lb = max_i [c_i Q*_i + sum_{j != i} c_j Q^mu_j].
    """
    coeffs = [float(c) for c in coeffs]
    if not (len(q_stars) == len(q_mus) == len(coeffs)) or not coeffs:
        raise ValueError("need one Q* and one Q^mu table per coefficient")
    if any(c < 0 for c in coeffs):
        raise ValueError("linear initial bounds require nonnegative coefficients")
    q_stars = [np.asarray(q, float) for q in q_stars]
    q_mus = [np.asarray(q, float) for q in q_mus]
    shape = q_stars[0].shape
    if any(q.shape != shape for q in q_stars + q_mus):
        raise ValueError("Q tables have mismatched shapes")
    ub = sum(c * q for c, q in zip(coeffs, q_stars))
    mu_total = sum(c * q for c, q in zip(coeffs, q_mus))
    candidates = [c * qs + (mu_total - c * qm) for c, qs, qm in zip(coeffs, q_stars, q_mus)]
    lb = np.max(candidates, axis=0)
    return BoundPair(np.asarray(ub, float), lb, source="linear")


def mqm_init_nonlinear(q_star_abs: Sequence[np.ndarray], spec: CombinationSpec) -> BoundPair:
    """Approximate bounds ub = f(Q*_{|R_1|}, ...), lb = -ub. Not guaranteed valid."""
    if not spec.monotone_positive:
        raise ValueError("nonlinear initialisation needs a monotone increasing, positive combination (c_i >= 0)")
    ub = np.asarray(spec(*[np.asarray(q, float) for q in q_star_abs]), float)
    return BoundPair(ub, -ub, approximate=True, source="nonlinear")


def apply_noise_to_init(
    bounds: BoundPair,
    n_min: float,
    n_max: float,
    gamma: float,
    t_max: int | None = None,
    terminal: np.ndarray | None = None,
) -> BoundPair:
    """Widen bounds by the noise range summed over the horizon.

    Rows flagged in ``terminal`` are left as they are.
    """
    if n_min > n_max:
        raise ValueError(f"noise range reversed: ({n_min}, {n_max})")
    h = geometric_horizon(gamma, t_max)
    ub_shift = np.full(bounds.ub.shape, n_max * h)
    lb_shift = np.full(bounds.lb.shape, n_min * h)
    if terminal is not None:
        ub_shift[terminal] = 0.0
        lb_shift[terminal] = 0.0
    return replace(bounds, ub=bounds.ub + ub_shift, lb=bounds.lb + lb_shift)


# Pruning --------------------------------------------------------------------


def default_delta(epsilon: float, gamma: float) -> float:
    return 2.0 * epsilon * gamma / (1.0 - gamma)


def prune_actions(bounds: BoundPair, cfg: PruneConfig = PruneConfig()) -> ActionMask:
    """Drop action b at s when some other action a has lb(s, a) - ub(s, b) >= delta.

    With delta == 0 the comparison is strict so exact ties survive.
    """
    lb, ub = bounds.lb, bounds.ub
    if lb.shape != ub.shape:
        raise ValueError("bound tables have mismatched shapes")
    diff = lb[:, :, None] - ub[:, None, :]  # [s, a, b]
    n_actions = lb.shape[1]
    diff[:, np.arange(n_actions), np.arange(n_actions)] = -np.inf
    hit = diff > 0 if cfg.delta == 0 else diff >= cfg.delta
    allowed = ~hit.any(axis=1)
    empty = ~allowed.any(axis=1)
    if empty.any():
        # only reachable with inconsistent (lb > ub) bounds
        allowed[empty, np.argmax(lb[empty], axis=1)] = True
    return ActionMask(allowed)


@dataclass
class PruningStats:
    pruned_count: int
    pruned_fraction: float
    per_state_remaining: np.ndarray


def pruning_stats(mask: ActionMask, mdp: TabularMdp) -> PruningStats:
    live = mdp.nonterminal
    remaining = mask.allowed.sum(axis=1)
    total = int(live.sum()) * mdp.n_actions
    pruned = int(total - remaining[live].sum())
    return PruningStats(pruned, pruned / total if total else 0.0, remaining)


def heatmap_rows(stats: PruningStats, mdp: TabularMdp, layout: tuple[int, int] | None = None):
    """(state_index, row, col, remaining_actions) for non-terminal states.

    Grid coordinates are row-major over ``layout``; empty without a layout.
    """
    rows = []
    for s in np.flatnonzero(mdp.nonterminal):
        r, c = divmod(int(s), layout[1]) if layout else ("", "")
        rows.append((int(s), r, c, int(stats.per_state_remaining[s])))
    return rows
