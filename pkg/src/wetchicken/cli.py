"""Command-line experiment driver.

Subcommands cover the full workflow: sample a transition dataset, fit a
transition model, train a policy through it, evaluate on the true river
dynamics, export the interpretability grids, and reproduce the returns
table with a sweep over methods, dataset sizes, and seeds.

Every command is a deterministic function of its inputs, flags, and
seed: file outputs are byte-identical across reruns. Settings resolve
with precedence flags > config file > built-in defaults.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines, dagp, env, report
from . import policy as policy_mod
from .config import METHODS, ExperimentConfig
from .errors import ContractViolation, NumericalError
from .seeding import (STREAM_DATA, STREAM_EVAL, STREAM_GRIDS, STREAM_POLICY,
                      seed_rng)

LOGGER = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad command line that argparse cannot catch on its own."""


# -- model checkpoint files -------------------------------------------------------
#
# One JSON document per transition model: {"kind": "dagp"|"gp", "model": ...}.
# The kind tag lets downstream commands dispatch without guessing.


def save_model_checkpoint(path, kind: str, model) -> None:
    with open(path, "w") as fh:
        json.dump({"kind": kind, "model": model.to_checkpoint()}, fh,
                  indent=1)


def load_model_checkpoint(path):
    """Returns ``(kind, model)``; raises ContractViolation on anything
    that is not a tagged transition-model checkpoint."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContractViolation(
                f"{path}: not a model checkpoint: {exc}") from exc
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "dagp":
        return kind, dagp.DagpModel.from_checkpoint(doc["model"])
    if kind == "gp":
        return kind, baselines.PlainGpModel.from_checkpoint(doc["model"])
    raise ContractViolation(
        f"{path}: not a transition-model checkpoint (kind={kind!r})")


def _sibling(out, suffix: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + suffix)


def save_curve_csv(path, label: str, values: np.ndarray) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", label])
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v))])


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.load(path) if path else ExperimentConfig()


# -- subcommands --------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be a positive transition count")
    dataset = env.sample_dataset(args.n, seed_rng(args.seed, STREAM_DATA))
    dataset.save_csv(args.out)
    falls = int((dataset.next_states == 0.0).all(axis=1).sum())
    print(f"wrote {len(dataset)} transitions to {args.out} "
          f"({falls} fall events)")
    return 0


def cmd_train_model(args) -> int:
    config = _load_config(args.config)
    train_config = config.model
    if args.seed is not None:
        train_config = replace(train_config, seed=args.seed)
    dataset = env.TransitionDataset.load_csv(args.data)
    if args.method == "dagp":
        result = dagp.train(dataset, train_config)
        save_model_checkpoint(args.out, "dagp", result.model)
        dagp.save_beliefs_csv(result.beliefs,
                              _sibling(args.out, ".beliefs.csv"))
    else:
        result = baselines.train_plain_gp(dataset, train_config)
        save_model_checkpoint(args.out, "gp", result.model)
    save_curve_csv(_sibling(args.out, ".curve.csv"), "objective",
                   result.curve)
    print(f"trained {args.method} on {len(dataset)} transitions; "
          f"checkpoint {args.out}")
    return 0


def cmd_train_policy(args) -> int:
    _, model = load_model_checkpoint(args.model)
    config = _load_config(args.config)
    settings = config.policy
    seed = args.seed if args.seed is not None else 0
    if args.data:
        pool = env.TransitionDataset.load_csv(args.data).states
    else:
        pool = env.sample_uniform_states(1000, seed_rng(seed, STREAM_DATA))
    rollout = policy_mod.RolloutConfig(
        initial_states=pool, horizon=settings.horizon,
        samples=settings.samples, gamma=settings.gamma, seed=seed)
    result = policy_mod.train_policy(
        model, rollout, steps=settings.steps, lr=settings.learning_rate,
        rng=seed_rng(seed, STREAM_POLICY))
    result.policy.save(args.out)
    save_curve_csv(_sibling(args.out, ".curve.csv"), "return_estimate",
                   result.curve)
    print(f"policy written to {args.out}")
    return 0


def _parse_seeds(text: str) -> list[int]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError("--seeds must list at least one seed")
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad --seeds value: {exc}") from exc


def _random_policy(rng: np.random.Generator):
    def fn(states: np.ndarray) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(len(states), 2))

    return fn


def _evaluation_policy(method: str, args, seed: int):
    """The state->action callable a given method evaluates with."""
    if method == "random":
        if args.policy or args.qnet:
            raise UsageError("--method random takes no --policy/--qnet")
        return _random_policy(seed_rng(seed, STREAM_POLICY))
    if method == "nfq":
        if not args.qnet:
            raise UsageError("--method nfq needs --qnet")
        q = baselines.QNet.load(args.qnet)
        return baselines.nfq_policy(q, baselines.ActionGrid())
    if not args.policy:
        raise UsageError(f"--method {method} needs --policy")
    net = policy_mod.PolicyNet.load(args.policy)
    return lambda states: policy_mod.act(net, states)


def cmd_evaluate(args) -> int:
    seeds = _parse_seeds(args.seeds)
    config = _load_config(args.config)
    protocol = config.evaluation
    n = args.n if args.n is not None else report.RANDOM_N
    if args.method != "random" and args.n is None:
        raise UsageError("--n (training-set size label) is required "
                         "unless --method random")
    results = report.EvalReport()
    for seed in seeds:
        fn = _evaluation_policy(args.method, args, seed)
        r = env.evaluate_policy_true(
            fn, horizon=protocol.horizon, n_rollouts=protocol.rollouts,
            gamma=protocol.gamma, rng=seed_rng(seed, STREAM_EVAL))
        results.add(args.method, n, seed, r.avg_step_reward,
                    r.discounted_return)
    results.save_csv(args.out)
    sizes = [] if args.method == "random" else [n]
    table = report.render_table(results, sizes, [args.method])
    with open(_sibling(args.out, ".table.csv"), "w") as fh:
        fh.write(table)
    print(table, end="")
    return 0


def cmd_export_grids(args) -> int:
    if not args.model and not args.policy:
        raise UsageError("need --model and/or --policy")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.model:
        kind, model = load_model_checkpoint(args.model)
        if kind != "dagp":
            raise ContractViolation(
                "fall-probability and per-mode noise grids are not "
                f"supported by this model (kind={kind!r}); they require "
                "the mixture model")
        bundle = dagp.export_grids(model, args.resolution,
                                   seed_rng(args.seed, STREAM_GRIDS))
        path = out_dir / "model_grids.csv"
        bundle.save_csv(path)
        print(f"wrote {path}")
    if args.policy:
        net = policy_mod.PolicyNet.load(args.policy)
        rows = policy_mod.policy_grid(net, args.resolution)
        path = out_dir / "policy_quiver.csv"
        policy_mod.save_policy_grid_csv(rows, path)
        print(f"wrote {path}")
    return 0


# -- the returns-table sweep --------------------------------------------------------


def sweep_cell(config: ExperimentConfig, method: str, n: int,
               seed: int) -> tuple[float, float]:
    """One independent (method, dataset size, seed) experiment.

    Returns (average step reward, discounted return) measured on the
    true dynamics. Every random draw comes from streams derived from
    ``seed``, so cells can run in any order or process.
    """
    protocol = config.evaluation
    if method == "random":
        fn = _random_policy(seed_rng(seed, STREAM_POLICY))
    else:
        dataset = env.sample_dataset(n, seed_rng(seed, STREAM_DATA))
        if method == "nfq":
            grid = baselines.ActionGrid()
            q = baselines.nfq_train(dataset, grid,
                                    iterations=config.nfq.iterations,
                                    config=config.nfq.to_config(seed))
            fn = baselines.nfq_policy(q, grid)
        else:
            train_config = replace(config.model, seed=seed)
            if method == "dagp":
                model = dagp.train(dataset, train_config).model
            else:
                model = baselines.train_plain_gp(dataset, train_config).model
            settings = config.policy
            rollout = policy_mod.RolloutConfig(
                initial_states=dataset.states, horizon=settings.horizon,
                samples=settings.samples, gamma=settings.gamma, seed=seed)
            net = policy_mod.train_policy(
                model, rollout, steps=settings.steps,
                lr=settings.learning_rate,
                rng=seed_rng(seed, STREAM_POLICY)).policy
            fn = (lambda p: lambda states: policy_mod.act(p, states))(net)
    r = env.evaluate_policy_true(
        fn, horizon=protocol.horizon, n_rollouts=protocol.rollouts,
        gamma=protocol.gamma, rng=seed_rng(seed, STREAM_EVAL))
    return r.avg_step_reward, r.discounted_return


def _sweep_cells(config: ExperimentConfig) -> list[tuple[str, int, int]]:
    cells = []
    for method in METHODS:
        if method not in config.methods:
            continue
        sizes = [report.RANDOM_N] if method == "random" else config.sizes
        for n in sizes:
            for seed in config.seeds:
                cells.append((method, n, seed))
    return cells


def run_sweep(config: ExperimentConfig, threads: int = 1,
              cell_fn=sweep_cell) -> report.EvalReport:
    """All sweep cells through a worker pool; failures leave holes.

    A cell that raises is logged and recorded as missing rather than
    aborting the sweep; report assembly is single-threaded.
    """
    cells = _sweep_cells(config)
    results = report.EvalReport()

    def record(cell, outcome, error):
        method, n, seed = cell
        if error is not None:
            LOGGER.warning("sweep cell %s N=%d seed=%d failed: %s",
                           method, n, seed, error)
            return
        results.add(method, n, seed, outcome[0], outcome[1])

    if threads <= 1:
        for cell in cells:
            try:
                record(cell, cell_fn(config, *cell), None)
            except Exception as exc:
                record(cell, None, exc)
        return results
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(cell_fn, config, *cell): cell
                   for cell in cells}
        for future in concurrent.futures.as_completed(futures):
            try:
                record(futures[future], future.result(), None)
            except Exception as exc:
                record(futures[future], None, exc)
    return results


def cmd_reproduce_table(args) -> int:
    config = _load_config(args.config)
    results = run_sweep(config, threads=args.threads)
    results.save_csv(_sibling(args.out, ".results.csv"))
    table = report.render_table(results, config.sizes, config.methods)
    with open(args.out, "w") as fh:
        fh.write(table)
    print(table, end="")
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wetchicken",
        description="Wet-Chicken benchmark experiments: data, models, "
                    "policies, evaluation, and the returns table.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample a uniform transition "
                       "dataset to CSV")
    p.add_argument("--n", type=int, required=True,
                   help="number of transitions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-model", help="fit a transition model on a "
                       "dataset CSV")
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--method", required=True, choices=["dagp", "gp"])
    p.add_argument("--config", help="experiment config YAML")
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the config-file model seed")
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.set_defaults(func=cmd_train_model)

    p = sub.add_parser("train-policy", help="train a policy through a "
                       "frozen transition model")
    p.add_argument("--model", required=True, help="model checkpoint path")
    p.add_argument("--data", help="dataset CSV whose states seed the "
                   "rollouts (default: uniform states)")
    p.add_argument("--config", help="experiment config YAML")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="policy checkpoint path")
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("evaluate", help="roll a policy out on the true "
                       "dynamics")
    p.add_argument("--method", required=True, choices=list(METHODS))
    p.add_argument("--policy", help="policy checkpoint (dagp/gp methods)")
    p.add_argument("--qnet", help="Q-network checkpoint (nfq method)")
    p.add_argument("--seeds", required=True,
                   help="comma-separated evaluation seeds")
    p.add_argument("--n", type=int, default=None,
                   help="training-set size label for the report")
    p.add_argument("--config", help="experiment config YAML")
    p.add_argument("--out", required=True, help="per-seed results CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-grids", help="export interpretability "
                       "grids and/or the policy action field")
    p.add_argument("--model", help="mixture-model checkpoint")
    p.add_argument("--policy", help="policy checkpoint")
    p.add_argument("--resolution", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export_grids)

    p = sub.add_parser("reproduce-table", help="full sweep: methods x "
                       "dataset sizes x seeds, aggregated returns table")
    p.add_argument("--config", help="experiment config YAML")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for sweep cells")
    p.add_argument("--out", required=True, help="table CSV path")
    p.set_defaults(func=cmd_reproduce_table)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ContractViolation, NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
