"""Budget-resilience curves on the enumerable sequence task.

Trains a conservative surrogate per trial, produces N=16 candidates, and
records the 100th-percentile true score over nested budget prefixes ranked
by the surrogate's own predictions.

Usage: python scripts/budget_pwm.py --trials 4 --out budget.csv
"""
import argparse
import csv

import numpy as np

from comopt.harness import budget_sweep, normalized_score
from comopt.optimizer import produce_candidates
from comopt.tasks import CurationConfig, curate_dataset, get_task
from comopt.trainer import TrainerConfig, train


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=4)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--budget", type=int, default=16)
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--out", default="pwm_budget.csv")
    args = parser.parse_args()

    task = get_task("pwm")
    budgets = list(range(1, args.budget + 1))
    curves = []
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "budget", "p100", "normalized_p100"])
        for trial in range(args.trials):
            seed = args.base_seed + trial
            dataset = curate_dataset(task, CurationConfig(seed=seed))
            config = TrainerConfig(seed=seed, epochs=args.epochs)
            model, _ = train(dataset, config)
            eta = config.resolved_eta(dataset)
            candidates = produce_candidates(model, dataset, args.budget, eta,
                                            config.mining_steps)
            sweep = budget_sweep(candidates, task, budgets)
            curves.append([normalized_score(task, v) for v in sweep])
            for b, v in zip(budgets, sweep):
                writer.writerow([trial, b, repr(float(v)),
                                 repr(float(normalized_score(task, v)))])
            print(f"trial {trial}: p100@{args.budget} = {sweep[-1]:.3f}")
    mean_curve = np.mean(curves, axis=0)
    print("mean normalized p100 by budget:")
    for b, v in zip(budgets, mean_curve):
        print(f"  N={b:3d}: {v:.3f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
