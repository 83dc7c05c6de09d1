"""Command-line interface.

Subcommands mirror the pipeline stages: curate a dataset, train a surrogate,
optimize designs against it, evaluate candidates with the withheld oracle,
run the sweep ablations, and `reproduce` the full acceptance suite. Every
command exits 0 only if its invariant checks pass.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import acceptance, net
from .baselines import Ensemble, train_ensemble, train_naive
from .harness import (InvariantViolation, budget_sweep, evaluate_budget,
                      normalized_score, run_experiment, stability_sweep,
                      tau_sweep)
from .optimizer import (produce_candidates, read_candidates,
                        select_initializations, write_candidates)
from .tasks import (CurationConfig, curate_dataset, get_task, read_dataset,
                    task_names, write_dataset)
from .trainer import TrainerConfig, train, write_training_log


def _add_trainer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--mining-steps", type=int, default=50,
                   help="ascent steps T shared by mining and optimization")
    p.add_argument("--ascent-rate", default="auto",
                   help="eta; 'auto' uses 0.05*sqrt(d) cont., 2.0*sqrt(d) disc.")
    p.add_argument("--adam-lr", type=float, default=1e-3)
    p.add_argument("--tau", default="auto",
                   help="conservatism threshold; 'auto' is 0.5 cont., 2.0 disc.")
    p.add_argument("--alpha-lr", type=float, default=0.01)
    p.add_argument("--alpha-init", type=float, default=0.0)
    p.add_argument("--hidden", default="64,64")
    p.add_argument("--seed", type=int, default=0)


def _trainer_config(args) -> TrainerConfig:
    return TrainerConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        mining_steps=args.mining_steps,
        ascent_rate=None if args.ascent_rate == "auto" else float(args.ascent_rate),
        adam_lr=args.adam_lr,
        seed=args.seed,
        tau=None if args.tau == "auto" else float(args.tau),
        alpha_lr=args.alpha_lr,
        alpha_init=args.alpha_init,
        hidden=tuple(int(h) for h in args.hidden.split(",") if h.strip()),
    )


def _load_surrogate(path):
    data = np.load(path)
    if "n_members" in data:
        members = []
        for m in range(int(data["n_members"])):
            n_layers = int(data[f"m{m}_n_layers"])
            layers = [net.DenseLayer(data[f"m{m}_w{k}"], data[f"m{m}_b{k}"])
                      for k in range(n_layers)]
            members.append(net.ObjectiveModel(layers, float(data["leak"])))
        return Ensemble(members, str(data["aggregate"]))
    return net.load_model(path)


def _save_surrogate(model, path) -> None:
    if isinstance(model, Ensemble):
        arrays = {
            "n_members": np.array(len(model.members)),
            "aggregate": np.array(model.aggregate),
            "leak": np.array(model.members[0].leak),
        }
        for m, member in enumerate(model.members):
            arrays[f"m{m}_n_layers"] = np.array(len(member.layers))
            for k, lyr in enumerate(member.layers):
                arrays[f"m{m}_w{k}"] = lyr.weights
                arrays[f"m{m}_b{k}"] = lyr.bias
        np.savez(path, **arrays)
    else:
        net.save_model(model, path)


def cmd_curate(args) -> int:
    task = get_task(args.task)
    config = CurationConfig(args.n_raw, args.keep_percentile, args.seed)
    dataset = curate_dataset(task, config)
    dataset.validate()
    if dataset.raw_scores().max() >= task.y_max:
        raise InvariantViolation("curated dataset should leave headroom")
    write_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} designs to {args.out} "
          f"(best y {dataset.raw_scores().max():.4f}, "
          f"withheld max {task.y_max:.4f})")
    return 0


def cmd_train(args) -> int:
    dataset = read_dataset(args.data)
    config = _trainer_config(args)
    if args.method == "coms":
        model, log = train(dataset, config)
        logs = [log]
    elif args.method == "grad-naive":
        model, log = train_naive(dataset, config)
        logs = [log]
    else:
        aggregate = args.method.split("-", 1)[1]
        model, logs = train_ensemble(dataset, config, args.ensemble_size,
                                     aggregate)
    _save_surrogate(model, args.out_model)
    if args.log:
        write_training_log(logs[0], args.log)
    final = logs[0][-1]
    print(f"trained {args.method}: final mse {final['mse']:.4f}, "
          f"gap {final['gap']:.4f}, alpha {final['alpha']:.4f}")
    return 0


def cmd_optimize(args) -> int:
    dataset = read_dataset(args.data)
    model = _load_surrogate(args.model)
    config = _trainer_config(args)
    eta = config.resolved_eta(dataset)
    candidates = produce_candidates(model, dataset, args.budget, eta,
                                    config.mining_steps)
    if len(candidates) != args.budget:
        raise InvariantViolation("candidate count must equal the budget")
    write_candidates(candidates, args.out)
    print(f"wrote {len(candidates)} candidates to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    task = get_task(args.task)
    candidates = read_candidates(args.candidates)
    n = args.budget or len(candidates)
    ev = evaluate_budget(candidates, task, n)
    ev.validate()
    result = {
        "task": args.task,
        "budget": n,
        "score_p100": ev.score_p100,
        "score_p50": ev.score_p50,
        "normalized_p100": ev.normalized_p100,
        "normalized_p50": ev.normalized_p50,
    }
    text = json.dumps(result, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_stability(args) -> int:
    task = get_task(args.task)
    dataset = read_dataset(args.data)
    model = _load_surrogate(args.model)
    config = _trainer_config(args)
    eta = config.resolved_eta(dataset)
    seed_design = select_initializations(dataset, 1).designs[0]
    curve = stability_sweep(model, task, seed_design, eta, args.t_max,
                            dataset.stats)
    if len(curve) != args.t_max + 1:
        raise InvariantViolation("stability curve length must be t_max + 1")
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "true_score"])
        for step, score in enumerate(curve.true_scores):
            writer.writerow([step, repr(float(score))])
    print(f"wrote stability curve ({args.t_max + 1} steps) to {args.out}")
    return 0


def cmd_sweep_tau(args) -> int:
    task = get_task(args.task)
    dataset = curate_dataset(task, CurationConfig(args.n_raw,
                                                  args.keep_percentile,
                                                  args.seed))
    taus = [float(t) for t in args.taus.split(",")]
    config = _trainer_config(args)
    curves = tau_sweep(dataset, task, taus, config, args.t_max)
    os.makedirs(args.out_dir, exist_ok=True)
    for tau, curve in curves.items():
        path = os.path.join(args.out_dir, f"stability_tau_{tau}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "true_score"])
            for step, score in enumerate(curve.true_scores):
                writer.writerow([step, repr(float(score))])
    print(f"wrote {len(curves)} tau curves to {args.out_dir}")
    return 0


def cmd_sweep_budget(args) -> int:
    task = get_task(args.task)
    candidates = read_candidates(args.candidates)
    budgets = [int(b) for b in args.budgets.split(",")]
    sweep = budget_sweep(candidates, task, budgets)
    if any(a > b + 1e-12 for a, b in zip(sweep, sweep[1:])):
        raise InvariantViolation("budget sweep must be monotone non-decreasing")
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["budget", "p100", "normalized_p100"])
        for b, p in zip(budgets, sweep):
            writer.writerow([b, repr(float(p)),
                             repr(float(normalized_score(task, p)))])
    print(f"wrote budget sweep to {args.out}")
    return 0


def cmd_run(args) -> int:
    with open(args.config) as fh:
        text = fh.read()
    report = run_experiment(text, args.out)
    agg = report.aggregates()
    print(f"{report.method} on {report.task}: "
          f"normalized p100 {agg['normalized_p100']['mean']:.4f} "
          f"+/- {agg['normalized_p100']['std']:.4f} over "
          f"{len(report.trials)} trials -> {args.out}")
    return 0


def cmd_reproduce(args) -> int:
    results = acceptance.run_all(args.out, fast=args.fast)
    return 0 if all(r["passed"] for r in results["criteria"]) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comopt",
        description="Conservative surrogate training and design optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="build an offline dataset from a task")
    p.add_argument("--task", required=True, choices=task_names())
    p.add_argument("--n-raw", type=int, default=2000)
    p.add_argument("--keep-percentile", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("train", help="train a surrogate on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default="coms",
                   choices=["coms", "grad-naive", "grad-min", "grad-mean"])
    p.add_argument("--ensemble-size", type=int, default=5)
    p.add_argument("--out-model", required=True)
    p.add_argument("--log")
    _add_trainer_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="produce budget-N candidates")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--budget", type=int, default=16)
    p.add_argument("--out", required=True)
    _add_trainer_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="score candidates with the oracle")
    p.add_argument("--candidates", required=True)
    p.add_argument("--task", required=True, choices=task_names())
    p.add_argument("--budget", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stability", help="true-score curve along the ascent")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", required=True, choices=task_names())
    p.add_argument("--t-max", type=int, default=200)
    p.add_argument("--out", required=True)
    _add_trainer_flags(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep-tau", help="stability curves across tau values")
    p.add_argument("--task", required=True, choices=task_names())
    p.add_argument("--taus", required=True, help="comma-separated tau values")
    p.add_argument("--n-raw", type=int, default=2000)
    p.add_argument("--keep-percentile", type=float, default=50.0)
    p.add_argument("--t-max", type=int, default=200)
    p.add_argument("--out-dir", required=True)
    _add_trainer_flags(p)
    p.set_defaults(func=cmd_sweep_tau)

    p = sub.add_parser("sweep-budget", help="p100 as a function of budget")
    p.add_argument("--candidates", required=True)
    p.add_argument("--task", required=True, choices=task_names())
    p.add_argument("--budgets", default="1,2,4,8,16")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_budget)

    p = sub.add_parser("run", help="full experiment from a key=value config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reproduce", help="run the full acceptance suite")
    p.add_argument("--out", default="reproduce_out")
    p.add_argument("--fast", action="store_true",
                   help="reduced trial counts for a quick smoke pass")
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, InvariantViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
