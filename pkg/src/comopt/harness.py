"""Evaluation protocol and run orchestration.

Budget-N evaluation scores the N candidate designs a method proposes with
the withheld oracle and reports the max (100th percentile) and median
(50th percentile), raw and normalized by the task's withheld score range.
Stability, tau, and budget sweeps reproduce the corresponding ablation
curves at desk scale. `run_experiment` wires curate -> train -> optimize ->
evaluate from a flat key=value config file into a reproducible run
directory.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .baselines import train_ensemble, train_naive
from .optimizer import (CandidateSet, optimize_one, produce_candidates,
                        select_initializations)
from .tasks import (CurationConfig, TaskSpec, curate_dataset, get_task,
                    oracle_eval_batch)
from .trainer import (NormalizationStats, OfflineDataset, TrainerConfig,
                      append_training_log, train)

METHODS = ("coms", "grad-naive", "grad-min", "grad-mean")


class InvariantViolation(AssertionError):
    """A protocol invariant (p100 >= p50, monotone budgets, ...) failed."""


def normalized_score(task: TaskSpec, y: float) -> float:
    """(y - y_min) / (y_max - y_min) using the task's withheld score range;
    the oracle optimum maps to exactly 1.0."""
    return (y - task.y_min) / (task.y_max - task.y_min)


@dataclass
class TrialEvaluation:
    """Budget-N scores for one trial."""

    score_p100: float
    score_p50: float
    normalized_p100: float
    normalized_p50: float

    def validate(self) -> None:
        if self.score_p100 < self.score_p50:
            raise InvariantViolation("p100 must be >= p50")


def evaluate_budget(candidates: CandidateSet, task: TaskSpec, n: int) -> TrialEvaluation:
    """Score the first n candidates with the true oracle; p100 is their max,
    p50 the median (midpoint convention for even counts)."""
    if n < 1:
        raise ValueError("budget must be >= 1")
    if n > len(candidates):
        raise ValueError(f"budget {n} exceeds candidate set of {len(candidates)}")
    raw = candidates.raw_designs()[:n]
    scores = oracle_eval_batch(task, raw)
    p100 = float(scores.max())
    p50 = float(np.median(scores))
    ev = TrialEvaluation(p100, p50, normalized_score(task, p100),
                         normalized_score(task, p50))
    ev.validate()
    return ev


@dataclass
class StabilityCurve:
    """True oracle score of the ascent iterate at every step, 0..t_max."""

    true_scores: np.ndarray

    def __len__(self) -> int:
        return len(self.true_scores)


def stability_sweep(model, task: TaskSpec, seed_design, eta: float,
                    t_max: int, stats: NormalizationStats) -> StabilityCurve:
    """Ascend for t_max steps (deliberately past the trained horizon) and
    score every iterate with the withheld oracle."""
    traj = optimize_one(model, seed_design, eta, t_max)
    raw_points = stats.denormalize_x(traj.points)
    return StabilityCurve(oracle_eval_batch(task, raw_points))


def budget_sweep(candidates: CandidateSet, task: TaskSpec, budgets) -> np.ndarray:
    """p100 as a function of budget over nested prefixes of the candidates
    ranked by surrogate value (descending); monotone by construction."""
    budgets = [int(b) for b in budgets]
    if min(budgets) < 1 or max(budgets) > len(candidates):
        raise ValueError("budgets must lie in [1, candidate count]")
    if candidates.surrogate_values is None:
        raise ValueError("candidates carry no surrogate values to rank by")
    order = np.argsort(-candidates.surrogate_values, kind="stable")
    scores = oracle_eval_batch(task, candidates.raw_designs()[order])
    running_max = np.maximum.accumulate(scores)
    return np.array([running_max[b - 1] for b in budgets])


def tau_sweep(dataset: OfflineDataset, task: TaskSpec, taus,
              config: TrainerConfig, t_max: int) -> dict:
    """Train one conservative surrogate per tau (same seed) and return a
    stability curve for each, keyed by tau."""
    if any(t <= 0 for t in taus):
        raise ValueError("tau values must be positive")
    seed_design = select_initializations(dataset, 1).designs[0]
    eta = config.resolved_eta(dataset)
    curves = {}
    for tau in taus:
        model, _ = train(dataset, replace(config, tau=float(tau)))
        curves[float(tau)] = stability_sweep(model, task, seed_design, eta,
                                             t_max, dataset.stats)
    return curves


@dataclass
class EvaluationReport:
    """Per-trial budget-N scores plus mean/std aggregates across trials."""

    method: str
    task: str
    budget: int
    trials: list

    def validate(self) -> None:
        for t in self.trials:
            t.validate()

    def aggregates(self) -> dict:
        out = {}
        for key in ("score_p100", "score_p50", "normalized_p100", "normalized_p50"):
            vals = np.array([getattr(t, key) for t in self.trials])
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
        return out

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "task": self.task,
            "budget": self.budget,
            "n_trials": len(self.trials),
            "per_trial": [
                {
                    "score_p100": t.score_p100,
                    "score_p50": t.score_p50,
                    "normalized_p100": t.normalized_p100,
                    "normalized_p50": t.normalized_p50,
                }
                for t in self.trials
            ],
            "aggregates": self.aggregates(),
        }


DEFAULT_CONFIG = {
    "task": "cliff",
    "method": "coms",
    "trials": 8,
    "base_seed": 0,
    "n_raw": 2000,
    "keep_percentile": 50.0,
    "budget": 16,
    "epochs": 50,
    "batch_size": 128,
    "mining_steps": 50,
    "ascent_rate": "auto",
    "adam_lr": 1e-3,
    "tau": "auto",
    "alpha_lr": 0.01,
    "alpha_init": 0.0,
    "hidden": "64,64",
    "leak": 0.3,
    "ensemble_size": 5,
    "stability_steps": 0,
    "budgets": "",
}

_INT_KEYS = {"trials", "base_seed", "n_raw", "budget", "epochs", "batch_size",
             "mining_steps", "ensemble_size", "stability_steps"}
_FLOAT_KEYS = {"keep_percentile", "adam_lr", "alpha_lr", "alpha_init", "leak"}
_AUTO_FLOAT_KEYS = {"ascent_rate", "tau"}


def parse_config(text: str) -> dict:
    """Parse a flat key=value config file; unknown keys are an error."""
    values = {}
    unknown = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line {line!r} (expected key=value)")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in DEFAULT_CONFIG:
            unknown.append(key)
            continue
        values[key] = val
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = dict(DEFAULT_CONFIG)
    cfg.update(values)
    for key in _INT_KEYS:
        cfg[key] = int(cfg[key])
    for key in _FLOAT_KEYS:
        cfg[key] = float(cfg[key])
    for key in _AUTO_FLOAT_KEYS:
        if cfg[key] != "auto":
            cfg[key] = float(cfg[key])
    if cfg["method"] not in METHODS:
        raise ValueError(f"unknown method {cfg['method']!r}; choose from {METHODS}")
    return cfg


def dump_config(cfg: dict) -> str:
    lines = [f"{key} = {cfg[key]}" for key in DEFAULT_CONFIG]
    return "\n".join(lines) + "\n"


def trainer_config_from(cfg: dict, seed: int) -> TrainerConfig:
    hidden = tuple(int(h) for h in str(cfg["hidden"]).split(",") if h.strip())
    return TrainerConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        mining_steps=cfg["mining_steps"],
        ascent_rate=None if cfg["ascent_rate"] == "auto" else cfg["ascent_rate"],
        adam_lr=cfg["adam_lr"],
        seed=seed,
        tau=None if cfg["tau"] == "auto" else cfg["tau"],
        alpha_lr=cfg["alpha_lr"],
        alpha_init=cfg["alpha_init"],
        hidden=hidden,
        leak=cfg["leak"],
    )


def train_method(method: str, dataset: OfflineDataset, config: TrainerConfig,
                 ensemble_size: int = 5):
    """Dispatch to the right trainer; returns (model-or-ensemble, logs)."""
    if method == "coms":
        model, log = train(dataset, config)
        return model, [log]
    if method == "grad-naive":
        model, log = train_naive(dataset, config)
        return model, [log]
    if method in ("grad-min", "grad-mean"):
        aggregate = method.split("-", 1)[1]
        return train_ensemble(dataset, config, ensemble_size, aggregate)
    raise ValueError(f"unknown method {method!r}")


def run_experiment(config, out_dir) -> EvaluationReport:
    """Curate, train, optimize, and evaluate for each trial; write the run
    directory (config copy, report.json, training_log.csv, candidates.csv,
    curves/*.csv). Fully reproducible from config + base seed."""
    if isinstance(config, dict):
        cfg = parse_config(dump_config({**DEFAULT_CONFIG, **config}))
    else:
        cfg = parse_config(str(config))
    os.makedirs(out_dir, exist_ok=True)
    task = get_task(cfg["task"])
    budgets = [int(b) for b in str(cfg["budgets"]).split(",") if str(b).strip()]

    trials = []
    stability_rows = []
    budget_rows = []
    log_path = os.path.join(out_dir, "training_log.csv")
    cand_path = os.path.join(out_dir, "candidates.csv")
    with open(log_path, "w", newline="") as log_fh, \
            open(cand_path, "w", newline="") as cand_fh:
        cand_writer = csv.writer(cand_fh)
        for trial in range(cfg["trials"]):
            seed = cfg["base_seed"] + trial
            dataset = curate_dataset(task, CurationConfig(
                n_raw_samples=cfg["n_raw"],
                keep_percentile=cfg["keep_percentile"],
                seed=seed,
            ))
            tcfg = trainer_config_from(cfg, seed)
            model, logs = train_method(cfg["method"], dataset, tcfg,
                                       cfg["ensemble_size"])
            for i, log in enumerate(logs):
                append_training_log(log, log_fh, trial,
                                    write_header=(trial == 0 and i == 0))
            eta = tcfg.resolved_eta(dataset)
            candidates = produce_candidates(model, dataset, cfg["budget"],
                                            eta, tcfg.mining_steps)
            if trial == 0:
                cand_writer.writerow(["trial"]
                                     + [f"x{i}" for i in range(task.input_dim)]
                                     + ["provenance", "surrogate_value"])
            for row, prov, val in zip(candidates.raw_designs(),
                                      candidates.provenance,
                                      candidates.surrogate_values):
                cand_writer.writerow([trial] + [repr(float(v)) for v in row]
                                     + [int(prov), repr(float(val))])
            trials.append(evaluate_budget(candidates, task, cfg["budget"]))
            if cfg["stability_steps"] > 0:
                seed_design = select_initializations(dataset, 1).designs[0]
                curve = stability_sweep(model, task, seed_design, eta,
                                        cfg["stability_steps"], dataset.stats)
                stability_rows.extend(
                    (trial, step, score)
                    for step, score in enumerate(curve.true_scores))
            if budgets:
                sweep = budget_sweep(candidates, task, budgets)
                budget_rows.extend(
                    (trial, b, p, normalized_score(task, p))
                    for b, p in zip(budgets, sweep))

    report = EvaluationReport(cfg["method"], cfg["task"], cfg["budget"], trials)
    report.validate()
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(dump_config(cfg))
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")
    if stability_rows or budget_rows:
        curves_dir = os.path.join(out_dir, "curves")
        os.makedirs(curves_dir, exist_ok=True)
        if stability_rows:
            with open(os.path.join(curves_dir, "stability.csv"), "w",
                      newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["trial", "step", "true_score"])
                for trial, step, score in stability_rows:
                    writer.writerow([trial, step, repr(float(score))])
        if budget_rows:
            with open(os.path.join(curves_dir, "budget.csv"), "w",
                      newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["trial", "budget", "p100", "normalized_p100"])
                for trial, b, p, pn in budget_rows:
                    writer.writerow([trial, b, repr(float(p)), repr(float(pn))])
    return report
