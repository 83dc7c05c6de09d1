"""Design-space search on a trained surrogate.

Fixed-step gradient ascent from high-scoring dataset points, budget-N
candidate production, and the logit relaxation for discrete sequence
designs. The ascent loop is shared with the trainer's adversarial mining:
both run the same recurrence x_{t+1} = x_t + eta * grad(x_t) for the same
number of steps, so the optimizer only visits regions the surrogate was
trained to be conservative on.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import net
from .net import ObjectiveModel

if TYPE_CHECKING:  # pragma: no cover
    from .trainer import NormalizationStats, OfflineDataset


def predict_batch(model, X) -> np.ndarray:
    """Surrogate predictions for any model kind (single net, ensemble, stub)."""
    if isinstance(model, ObjectiveModel):
        return net.forward_batch(model, X)
    return model.predict_batch(X)


def input_grad_batch(model, X) -> np.ndarray:
    """Input gradients for any model kind (single net, ensemble, stub)."""
    if isinstance(model, ObjectiveModel):
        return net.input_gradient_batch(model, X)
    return model.input_grad_batch(X)


@dataclass
class AscentTrajectory:
    """Iterates of fixed-step gradient ascent with their surrogate values.

    `points` has one row per iterate (step_count + 1 rows); `truncated` is
    set when a non-finite gradient stopped the ascent early.
    """

    points: np.ndarray
    surrogate_values: np.ndarray
    step_size: float
    step_count: int
    truncated: bool = False

    def __post_init__(self):
        if len(self.points) != self.step_count + 1:
            raise ValueError("trajectory must hold step_count + 1 points")
        if len(self.surrogate_values) != len(self.points):
            raise ValueError("one surrogate value per point required")

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]


def ascend(model, x0, eta: float, steps: int) -> AscentTrajectory:
    """Run x_{t+1} = x_t + eta * grad(x_t) for `steps` steps, recording the
    surrogate value at every iterate. Truncates at a non-finite gradient."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if eta <= 0.0:
        raise ValueError("step size must be positive")
    x = np.asarray(x0, dtype=np.float64).copy()
    points = [x]
    values = [float(predict_batch(model, x[None, :])[0])]
    truncated = False
    for _ in range(steps):
        g = input_grad_batch(model, x[None, :])[0]
        if not np.all(np.isfinite(g)):
            truncated = True
            break
        x = x + eta * g
        points.append(x)
        values.append(float(predict_batch(model, x[None, :])[0]))
    return AscentTrajectory(
        points=np.stack(points),
        surrogate_values=np.array(values),
        step_size=float(eta),
        step_count=len(points) - 1,
        truncated=truncated,
    )


def optimize_one(model, x_init, eta: float, steps: int) -> AscentTrajectory:
    """Gradient-ascent search from a single initialization; the returned
    endpoint is the optimized design x* = x_T."""
    return ascend(model, x_init, eta, steps)


@dataclass
class CandidateSet:
    """Optimized designs plus the dataset index each one started from.

    Designs are stored in the normalized model space; `raw_designs()` maps
    them back to task coordinates via the attached normalization stats.
    """

    designs: np.ndarray
    provenance: np.ndarray
    stats: "NormalizationStats"
    surrogate_values: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.designs)

    def raw_designs(self) -> np.ndarray:
        return self.stats.denormalize_x(self.designs)


def select_initializations(dataset: "OfflineDataset", n: int) -> CandidateSet:
    """The n dataset designs with highest observed score, ties broken by
    lower index. n = 1 recovers plain start-at-the-dataset-optimum search."""
    if n < 1:
        raise ValueError("need at least one initialization")
    if n > len(dataset):
        raise ValueError(f"requested {n} seeds from a dataset of {len(dataset)}")
    order = np.argsort(-dataset.scores, kind="stable")[:n]
    return CandidateSet(
        designs=dataset.designs[order].copy(),
        provenance=order,
        stats=dataset.stats,
    )


def produce_candidates(model, dataset: "OfflineDataset", n: int,
                       eta: float, steps: int) -> CandidateSet:
    """Budget-n protocol: ascend from each of the top-n dataset designs and
    return the n endpoints with provenance and surrogate values."""
    seeds = select_initializations(dataset, n)
    endpoints = []
    values = []
    for x0 in seeds.designs:
        traj = optimize_one(model, x0, eta, steps)
        endpoints.append(traj.endpoint)
        values.append(traj.surrogate_values[-1])
    return CandidateSet(
        designs=np.stack(endpoints),
        provenance=seeds.provenance,
        stats=dataset.stats,
        surrogate_values=np.array(values),
    )


def encode_discrete(one_hot, eps: float = 0.2) -> np.ndarray:
    """Relax an (L, K) one-hot sequence to L*K log-probabilities.

    The selected letter keeps mass 1 - eps; the remaining eps is spread
    evenly over the other K - 1 letters. Flattened row-major.
    """
    S = np.asarray(one_hot, dtype=np.float64)
    if S.ndim != 2:
        raise ValueError("one_hot must be an (L, K) matrix")
    K = S.shape[1]
    if K < 2:
        raise ValueError("alphabet size must be >= 2")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    is_zero_or_one = np.all((S == 0.0) | (S == 1.0))
    if not is_zero_or_one or not np.all(S.sum(axis=1) == 1.0):
        raise ValueError("each row must be one-hot")
    probs = np.where(S == 1.0, 1.0 - eps, eps / (K - 1))
    return np.log(probs).ravel()


def decode_discrete(x, L: int, K: int) -> np.ndarray:
    """Per-position argmax over the K logits; ties go to the lowest letter."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (L * K,):
        raise ValueError(f"expected a flat vector of length {L * K}, got {x.shape}")
    letters = x.reshape(L, K).argmax(axis=1)
    out = np.zeros((L, K))
    out[np.arange(L), letters] = 1.0
    return out


def write_candidates(candidates: CandidateSet, path) -> None:
    """CSV with denormalized design coordinates, provenance, and the
    surrogate's value for each candidate."""
    raw = candidates.raw_designs()
    values = candidates.surrogate_values
    if values is None:
        values = np.full(len(candidates), np.nan)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(raw.shape[1])]
                        + ["provenance", "surrogate_value"])
        for row, prov, val in zip(raw, candidates.provenance, values):
            writer.writerow([repr(float(v)) for v in row]
                            + [int(prov), repr(float(val))])


def read_candidates(path) -> CandidateSet:
    """Read a candidate CSV back; designs come back in raw coordinates with
    identity normalization stats attached."""
    from .trainer import NormalizationStats

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 2
    designs = np.array([[float(v) for v in row[:d]] for row in body])
    provenance = np.array([int(row[d]) for row in body])
    values = np.array([float(row[d + 1]) for row in body])
    stats = NormalizationStats(np.zeros(d), np.ones(d), 0.0, 1.0)
    return CandidateSet(designs, provenance, stats, values)
