"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 solver non-convergence, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import domains
from .baselines import solve_source
from .bounds import (
    CombinationSpec,
    PruneConfig,
    apply_noise_to_init,
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
from .harness import ExperimentConfig, export, run_experiment
from .mdp import extract_lite_model, sbf as branching_factor, validate
from .solvers import NotConverged, SolveConfig
from .verify import verify_bundle

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class InvalidInput(Exception):
    pass


def _load_bundle(path) -> domains.DomainBundle:
    try:
        bundle = domains.DomainBundle.load(path)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"{path}: malformed bundle ({exc})") from exc
    report = validate(bundle.mdp, bundle.target_rewards)
    if not report:
        raise InvalidInput(f"{path}: " + "; ".join(report.violations))
    return bundle


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    spec = None
    if args.exponent is not None:
        n = 3 if args.domain == "racetrack" else 2
        spec = CombinationSpec.power_of_sum([1.0] * n, args.exponent)
    bundle = domains.build(args.domain, args.sbf, rng, spec)
    bundle.save(args.out)
    print(f"wrote {args.out}: {bundle.mdp.n_states} states, {bundle.mdp.n_actions} actions, sbf={branching_factor(bundle.mdp)}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    bundle = _load_bundle(args.bundle)
    mdp, target = bundle.mdp, bundle.target_rewards
    cfg = SolveConfig(args.epsilon, args.max_sweeps)
    lite = extract_lite_model(mdp)
    noise = (args.noise_min, args.noise_max)
    if noise[0] > noise[1]:
        raise InvalidInput(f"noise range reversed: {noise}")
    noisy = noise != (0.0, 0.0)
    t0 = time.perf_counter()
    if args.method == "qm":
        bp = qm_iterate(lite, target, mdp.gamma, cfg, noise if noisy else None)
    else:
        if args.init == "naive":
            init = mqm_init_naive(lite, target, mdp.gamma, args.t_max)
        else:
            sources = [solve_source(mdp, r, cfg) for r in bundle.source_rewards]
            try:
                if args.init == "linear":
                    init = mqm_init_linear([s.q_star for s in sources], [s.q_mu for s in sources], bundle.combination.coeffs)
                else:
                    init = mqm_init_nonlinear([s.q_star_abs for s in sources], bundle.combination)
            except ValueError as exc:
                raise InvalidInput(str(exc)) from exc
        if noisy:
            init = apply_noise_to_init(init, *noise, mdp.gamma, args.t_max, lite.terminal_rows)
        bp = mqm_iterate(lite, target, mdp.gamma, init, cfg, noise if noisy else None)
    elapsed = time.perf_counter() - t0
    delta = args.delta if args.delta is not None else default_delta(cfg.epsilon, mdp.gamma)
    mask = prune_actions(bp, PruneConfig(delta))
    st = pruning_stats(mask, mdp)
    out = {
        "method": args.method,
        "init": args.init if args.method == "mqm" else None,
        "noise": list(noise),
        "delta": delta,
        "solve": {"epsilon": cfg.epsilon, "max_sweeps": cfg.max_sweeps},
        "bounds": bp.to_dict(),
        "mask": mask.allowed.tolist(),
        "stats": {
            "pruned_count": st.pruned_count,
            "pruned_fraction": st.pruned_fraction,
            "per_state_remaining": st.per_state_remaining.tolist(),
        },
        "heatmap": [dict(zip(("state_index", "row", "col", "remaining_actions"), r))
                    for r in heatmap_rows(st, mdp, bundle.layout)],
        "bound_iteration_time_s": round(elapsed, 3),
    }
    Path(args.out).write_text(json.dumps(out, indent=1))
    print(f"{args.method}: {bp.iterations} sweeps, pruned {st.pruned_count} actions ({100 * st.pruned_fraction:.1f}%)"
          + (" [approximate bounds]" if bp.approximate else ""))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except ValidationError as exc:
        raise InvalidInput(f"{args.config}: {exc}") from exc
    if args.workers:
        cfg = cfg.model_copy(update={"workers": args.workers})
    results = run_experiment(cfg)
    for path in export(results, args.out, cfg):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    bundle = _load_bundle(args.bundle)
    checks = verify_bundle(bundle, SolveConfig(args.epsilon))
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmanip", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="emit a domain bundle")
    g.add_argument("--domain", required=True, choices=sorted([*domains.BUILDERS, "autogen"]))
    g.add_argument("--sbf", type=int, default=None, help="branching factor cap (default: base dynamics)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--exponent", type=int, default=None, help="use (sum of sources) ** exponent as target")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bounds", help="compute bounds, pruning mask and stats")
    b.add_argument("--bundle", required=True)
    b.add_argument("--method", choices=["qm", "mqm"], required=True)
    b.add_argument("--init", choices=["naive", "linear", "nonlinear"], default="linear")
    b.add_argument("--noise-min", type=float, default=0.0)
    b.add_argument("--noise-max", type=float, default=0.0)
    b.add_argument("--t-max", type=int, default=None, help="horizon for naive/noise widening (default infinite)")
    b.add_argument("--epsilon", type=float, default=1e-8)
    b.add_argument("--max-sweeps", type=int, default=100_000)
    b.add_argument("--delta", type=float, default=None)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=None)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check bound/pruning invariants on a bundle")
    v.add_argument("--bundle", required=True)
    v.add_argument("--epsilon", type=float, default=1e-8)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
