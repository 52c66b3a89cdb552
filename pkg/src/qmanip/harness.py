"""Config-driven experiments: bounds, pruning and learning curves for each method."""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import stats

from . import domains
from .baselines import SourceBehavior, sfql_bootstrap, solve_source, sqb_bounds_from_mqm
from .bounds import (
    CombinationSpec,
    apply_noise_to_init,
    default_delta,
    mqm_init_linear,
    mqm_init_naive,
    mqm_init_nonlinear,
    mqm_iterate,
    prune_actions,
    PruneConfig,
    pruning_stats,
    qm_iterate,
)
from .learning import LearnConfig, LearningCurve, q_learning, smooth
from .mdp import extract_lite_model
from .solvers import SolveConfig, expected_return, greedy_policy, value_iteration

SCHEMA_VERSION = 1
METHODS = ("QL", "QM", "MQM", "SFQL", "SQB")
PRUNING_METHODS = ("QM", "MQM")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CombinationModel(_Strict):
    form: Literal["linear", "power"] = "linear"
    coeffs: list[float]
    exponent: int = Field(1, ge=1)

    def spec(self) -> CombinationSpec:
        return CombinationSpec(tuple(self.coeffs), self.form, self.exponent)


class DomainModel(_Strict):
    name: Literal["dollar_euro", "frozen_lake", "racetrack", "autogen"]
    sbf: list[int] = Field(default_factory=lambda: [1], min_length=1)
    # a number n means the symmetric range [-n, n]
    noise: list[Union[float, tuple[float, float]]] = Field(default_factory=lambda: [0.0], min_length=1)
    combination: Optional[CombinationModel] = None

    @field_validator("sbf")
    @classmethod
    def _positive(cls, v):
        if any(k < 1 for k in v):
            raise ValueError("sbf values must be >= 1")
        return v

    def noise_ranges(self) -> list[tuple[float, float]]:
        out = []
        for n in self.noise:
            lo, hi = (0.0 - abs(n), abs(n) + 0.0) if isinstance(n, (int, float)) else (float(n[0]), float(n[1]))
            if lo > hi:
                raise ValueError(f"noise range reversed: {n}")
            out.append((lo, hi))
        return out


class LearnModel(_Strict):
    episodes: int = Field(500, ge=1)
    t_max: int = Field(100, ge=1)
    alpha: float = Field(0.1, gt=0, le=1)
    alpha_decay: float = Field(1.0, gt=0, le=1)
    alpha_min: float = Field(0.0, ge=0)
    epsilon_start: float = Field(1.0, ge=0, le=1)
    epsilon_decay: float = Field(0.99, gt=0, le=1)
    epsilon_min: float = Field(0.05, ge=0, lt=1)


class SolveModel(_Strict):
    epsilon: float = Field(1e-8, gt=0)
    max_sweeps: int = Field(100_000, ge=1)


class PruneModel(_Strict):
    delta: Optional[float] = Field(None, ge=0)


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    domain: DomainModel
    methods: list[Literal["QL", "QM", "MQM", "SFQL", "SQB"]] = Field(min_length=1)
    runs: int = Field(30, ge=1)
    learn: LearnModel = Field(default_factory=LearnModel)
    solve: SolveModel = Field(default_factory=SolveModel)
    prune: PruneModel = Field(default_factory=PruneModel)
    init: Literal["auto", "naive", "linear", "nonlinear"] = "auto"
    naive_horizon: Optional[int] = Field(None, ge=1)
    threshold_fraction: float = Field(0.95, gt=0, le=1)
    smoothing_window: int = Field(50, ge=1)
    master_seed: int = 0
    workers: int = Field(1, ge=1)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.model_validate_json(Path(path).read_text())


@dataclass
class RunResult:
    method: str
    run: int
    seed: int
    sbf: int
    noise: tuple[float, float]
    curve: LearningCurve
    pruned_fraction: float
    bound_iteration_time: float | None
    episodes_to_threshold: int | None
    optimal_return: float
    per_state_remaining: np.ndarray | None = None
    layout: tuple[int, int] | None = None
    terminal: tuple[int, ...] = ()


def run_seeds(master_seed: int, run: int) -> tuple[int, int]:
    """(domain seed, learning seed) for one run; shared by every method and setting."""
    a, b = np.random.SeedSequence([master_seed, run]).generate_state(2)
    return int(a), int(b)


def resolve_init(cfg: ExperimentConfig, spec: CombinationSpec) -> str:
    if cfg.init != "auto":
        return cfg.init
    if spec.form == "linear" and spec.monotone_positive:
        return "linear"
    if spec.monotone_positive:
        return "nonlinear"
    return "naive"


def episodes_to_threshold(smoothed: np.ndarray, threshold: float) -> int | None:
    hit = np.flatnonzero(smoothed >= threshold)
    return int(hit[0]) + 1 if hit.size else None


def threshold_for(optimal: float, fraction: float) -> float:
    """``fraction`` of the optimum, measured so that it stays below negative optima too."""
    return optimal - (1.0 - fraction) * abs(optimal)


def _initial_bounds(kind, bundle, lite, target, sources: list[SourceBehavior], t_max):
    gamma = bundle.mdp.gamma
    if kind == "naive":
        return mqm_init_naive(lite, target, gamma, t_max)
    if kind == "linear":
        return mqm_init_linear([s.q_star for s in sources], [s.q_mu for s in sources], bundle.combination.coeffs)
    return mqm_init_nonlinear([s.q_star_abs for s in sources], bundle.combination)


def _run_one(cfg: ExperimentConfig, sbf: int, noise: tuple[float, float], run: int) -> list[RunResult]:
    domain_seed, learn_seed = run_seeds(cfg.master_seed, run)
    spec = cfg.domain.combination.spec() if cfg.domain.combination else None
    bundle = domains.build(cfg.domain.name, sbf, np.random.default_rng(domain_seed), spec)
    mdp, target = bundle.mdp, bundle.target_rewards
    gamma = mdp.gamma
    solve = SolveConfig(cfg.solve.epsilon, cfg.solve.max_sweeps)
    learn = LearnConfig(seed=learn_seed, **cfg.learn.model_dump())
    delta = cfg.prune.delta if cfg.prune.delta is not None else default_delta(solve.epsilon, gamma)
    noisy = noise != (0.0, 0.0)
    noise_arg = noise if noisy else None

    # oracle on the expected target reward
    mean_noise = 0.5 * (noise[0] + noise[1])
    expected_r = target.map(lambda v: v + mean_noise)
    q_opt = value_iteration(mdp, expected_r, solve)
    optimal = expected_return(mdp, expected_r, greedy_policy(q_opt), learn.t_max)
    threshold = threshold_for(optimal, cfg.threshold_fraction)

    lite = extract_lite_model(mdp)
    init_kind = resolve_init(cfg, bundle.combination)
    needs_sources = {"SFQL", "SQB"} & set(cfg.methods) or ("MQM" in cfg.methods and init_kind != "naive")
    sources = [solve_source(mdp, r, solve) for r in bundle.source_rewards] if needs_sources else []
    init = None
    if {"MQM", "SQB"} & set(cfg.methods):
        init = _initial_bounds(init_kind, bundle, lite, target, sources, cfg.naive_horizon)
        if noisy:
            init = apply_noise_to_init(init, noise[0], noise[1], gamma, cfg.naive_horizon, lite.terminal_rows)

    out = []
    for method in cfg.methods:
        mask = init_q = clip = None
        elapsed = remaining = None
        pruned = 0.0
        if method in PRUNING_METHODS:
            t0 = time.perf_counter()
            if method == "QM":
                bounds = qm_iterate(lite, target, gamma, solve, noise_arg)
            else:
                bounds = mqm_iterate(lite, target, gamma, init, solve, noise_arg)
            elapsed = time.perf_counter() - t0
            mask = prune_actions(bounds, PruneConfig(delta))
            st = pruning_stats(mask, mdp)
            pruned, remaining = st.pruned_fraction, st.per_state_remaining
        elif method == "SFQL":
            init_q = sfql_bootstrap(mdp, target, sources, solve)
        elif method == "SQB":
            clip = sqb_bounds_from_mqm(init)
        _, curve = q_learning(mdp, target, learn, mask=mask, init_q=init_q, clip=clip, reward_noise=noise_arg)
        ett = episodes_to_threshold(smooth(curve.returns, cfg.smoothing_window), threshold)
        out.append(RunResult(method, run, learn_seed, sbf, noise, curve, pruned, elapsed, ett, optimal,
                             remaining, bundle.layout, tuple(sorted(mdp.terminal))))
    return out


def _task(args):
    cfg_json, sbf, noise, run = args
    return _run_one(ExperimentConfig.model_validate_json(cfg_json), sbf, noise, run)


def run_experiment(cfg: ExperimentConfig) -> list[RunResult]:
    """Every (sbf, noise) setting x run x method. Sorted by (sbf, noise, method, run)."""
    tasks = [(sbf, noise, run) for sbf in cfg.domain.sbf for noise in cfg.domain.noise_ranges() for run in range(cfg.runs)]
    if cfg.workers > 1:
        payload = cfg.model_dump_json()
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(_task, [(payload, *t) for t in tasks]))
    else:
        chunks = [_run_one(cfg, *t) for t in tasks]
    order = {m: i for i, m in enumerate(METHODS)}
    results = [r for chunk in chunks for r in chunk]
    results.sort(key=lambda r: (r.sbf, r.noise, order[r.method], r.run))
    return results


# Aggregation ----------------------------------------------------------------


def confidence_interval(samples: np.ndarray, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Mean and half-width over axis 0. Student t below 30 samples, normal otherwise."""
    samples = np.asarray(samples, float)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    q = stats.t.ppf(0.5 + level / 2, n - 1) if n < 30 else stats.norm.ppf(0.5 + level / 2)
    return mean, q * samples.std(axis=0, ddof=1) / np.sqrt(n)


@dataclass
class MethodSummary:
    method: str
    runs: int
    episode_mean: np.ndarray
    episode_ci: np.ndarray
    pruned_fraction_mean: float
    pruned_fraction_std: float
    bound_time_mean: float | None
    bound_time_std: float | None
    episodes_to_threshold_mean: float | None
    episodes_to_threshold_std: float | None
    reached_threshold: int


def summarize(results: list[RunResult], window: int = 50) -> dict[str, MethodSummary]:
    """Per-method curve mean/CI of the smoothed return plus pruning, timing and threshold stats."""
    out = {}
    for method in [m for m in METHODS if any(r.method == m for r in results)]:
        rs = [r for r in results if r.method == method]
        curves = np.array([smooth(r.curve.returns, window) for r in rs])
        mean, half = confidence_interval(curves)
        pf = np.array([r.pruned_fraction for r in rs])
        times = np.array([r.bound_iteration_time for r in rs if r.bound_iteration_time is not None])
        ett = np.array([r.episodes_to_threshold for r in rs if r.episodes_to_threshold is not None], float)
        out[method] = MethodSummary(
            method, len(rs), mean, half, float(pf.mean()), float(pf.std()),
            float(times.mean()) if times.size else None, float(times.std()) if times.size else None,
            float(ett.mean()) if ett.size else None, float(ett.std()) if ett.size else None, int(ett.size),
        )
    return out


# Export ---------------------------------------------------------------------


def _artifact_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _write_csv(path: Path, header, rows) -> None:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def setting_tag(sbf: int, noise: tuple[float, float]) -> str:
    return f"sbf{sbf}_noise{noise[0]:g}_{noise[1]:g}"


def export(results: list[RunResult], out_dir, cfg: ExperimentConfig | None = None) -> list[Path]:
    """Write CSV outputs; one subdirectory per (sbf, noise) setting when there are several."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc}") from exc
    window = cfg.smoothing_window if cfg else 50
    settings = sorted({(r.sbf, r.noise) for r in results})
    written = []
    for sbf, noise in settings:
        rs = [r for r in results if (r.sbf, r.noise) == (sbf, noise)]
        d = out_dir if len(settings) == 1 else out_dir / setting_tag(sbf, noise)
        d.mkdir(parents=True, exist_ok=True)
        written += _export_setting(rs, d, window)
    if cfg is not None:
        meta = {
            "config": json.loads(cfg.model_dump_json()),
            "artifact_version": _artifact_version(),
            "seeds": {str(run): dict(zip(("domain", "learn"), run_seeds(cfg.master_seed, run))) for run in range(cfg.runs)},
            "settings": [setting_tag(*s) for s in settings],
        }
        path = out_dir / "config.json"
        path.write_text(json.dumps(meta, indent=1, sort_keys=True))
        written.append(path)
    return written


def _export_setting(rs: list[RunResult], d: Path, window: int) -> list[Path]:
    curves = []
    for r in rs:
        sm = smooth(r.curve.returns, window)
        curves += [(r.method, r.run, i + 1, float(g), float(s)) for i, (g, s) in enumerate(zip(r.curve.returns, sm))]
    _write_csv(d / "curves.csv", ("method", "run", "episode", "return", "smoothed"), curves)

    summ = summarize(rs, window)
    _write_csv(
        d / "curve_summary.csv",
        ("method", "episode", "mean", "ci_low", "ci_high"),
        [(m, i + 1, float(mu), float(mu - h), float(mu + h))
         for m, s in summ.items() for i, (mu, h) in enumerate(zip(s.episode_mean, s.episode_ci))],
    )
    _write_csv(
        d / "summary.csv",
        ("method", "runs", "pruned_fraction_mean", "pruned_fraction_std", "episodes_to_threshold_mean",
         "episodes_to_threshold_std", "reached_threshold", "optimal_return_mean"),
        [(m, s.runs, s.pruned_fraction_mean, s.pruned_fraction_std,
          "" if s.episodes_to_threshold_mean is None else s.episodes_to_threshold_mean,
          "" if s.episodes_to_threshold_std is None else s.episodes_to_threshold_std,
          s.reached_threshold, float(np.mean([r.optimal_return for r in rs if r.method == m])))
         for m, s in summ.items()],
    )
    heat = []
    for m in PRUNING_METHODS:
        mr = [r for r in rs if r.method == m]
        if not mr:
            continue
        mean_remaining = np.mean([r.per_state_remaining for r in mr], axis=0)
        layout, terminal = mr[0].layout, set(mr[0].terminal)
        for s, rem in enumerate(mean_remaining):
            if s in terminal:
                continue
            row, col = divmod(s, layout[1]) if layout else ("", "")
            heat.append((m, s, row, col, float(rem)))
    _write_csv(d / "pruning_heatmap.csv", ("method", "state_index", "row", "col", "remaining_actions"), heat)
    _write_csv(
        d / "timings.csv",
        ("method", "run", "bound_iteration_time_s"),
        [(r.method, r.run, f"{r.bound_iteration_time:.3f}") for r in rs if r.bound_iteration_time is not None],
    )
    return [d / n for n in ("curves.csv", "curve_summary.csv", "summary.csv", "pruning_heatmap.csv", "timings.csv")]
