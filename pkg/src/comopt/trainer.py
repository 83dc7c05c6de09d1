"""Conservative surrogate training.

The loop alternates per minibatch: mine adversarial endpoints by running
gradient ascent on the current surrogate from the batch designs, take one
Adam step on a loss of the form

    0.5 * mean((f(x_i) - y_i)^2) + alpha * (mean f(x_T_i) - mean f(x_i)),

then one dual step on alpha that holds the prediction gap between mined
endpoints and data near a threshold tau. With alpha pinned at zero the loop
reduces exactly to supervised regression, which is what the naive baseline
uses.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import net
from .net import GradientError, ObjectiveModel
from .optimizer import AscentTrajectory, ascend, predict_batch

CONTINUOUS_ETA_SCALE = 0.05
DISCRETE_ETA_SCALE = 2.0
CONTINUOUS_TAU = 0.5
DISCRETE_TAU = 2.0

TRAINING_LOG_COLUMNS = ("epoch", "mse", "gap", "alpha",
                        "mean_pred_data", "mean_pred_mined")


class TrainingError(RuntimeError):
    """Raised when training encounters a non-finite loss."""


@dataclass
class NormalizationStats:
    """Per-dimension input and scalar output standardization parameters."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def normalize_x(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.x_mean) / self.x_std

    def denormalize_x(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.x_std + self.x_mean

    def normalize_y(self, y):
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def denormalize_y(self, y):
        return np.asarray(y, dtype=np.float64) * self.y_std + self.y_mean


def fit_normalization(designs, scores) -> NormalizationStats:
    """Population mean/std per input dimension and for the scores; stds that
    come out exactly zero are replaced by one so division stays defined."""
    X = np.asarray(designs, dtype=np.float64)
    y = np.asarray(scores, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or len(X) != len(y):
        raise ValueError("designs must be (n, d) with matching (n,) scores")
    if len(X) < 2:
        raise ValueError("need at least 2 samples to fit normalization")
    x_std = X.std(axis=0)
    x_std = np.where(x_std == 0.0, 1.0, x_std)
    y_std = float(y.std())
    if y_std == 0.0:
        y_std = 1.0
    return NormalizationStats(X.mean(axis=0), x_std, float(y.mean()), y_std)


@dataclass
class OfflineDataset:
    """Normalized (design, score) pairs plus the stats to undo the scaling.

    `oracle_y_min` / `oracle_y_max` record the withheld ground-truth range
    used for score normalization in reports; the trainer never reads them.
    """

    designs: np.ndarray
    scores: np.ndarray
    stats: NormalizationStats
    is_discrete: bool = False
    raw_shape: tuple[int, int] | None = None
    oracle_y_min: float | None = None
    oracle_y_max: float | None = None

    def __len__(self) -> int:
        return len(self.designs)

    @property
    def input_dim(self) -> int:
        return self.designs.shape[1]

    def raw_designs(self) -> np.ndarray:
        return self.stats.denormalize_x(self.designs)

    def raw_scores(self) -> np.ndarray:
        return self.stats.denormalize_y(self.scores)

    def validate(self) -> None:
        if len(self.designs) != len(self.scores) or len(self.designs) < 2:
            raise ValueError("dataset needs matching designs/scores, >= 2 rows")
        degenerate = self.stats.y_std == 1.0 and float(self.scores.std()) == 0.0
        if not degenerate:
            if abs(float(self.scores.mean())) > 1e-8:
                raise ValueError("normalized scores must have mean ~ 0")
            if abs(float(self.scores.std()) - 1.0) > 1e-8:
                raise ValueError("normalized scores must have std ~ 1")


@dataclass
class LagrangeState:
    """Dual variable for the conservatism constraint gap <= tau."""

    alpha: float = 0.0
    tau: float = CONTINUOUS_TAU
    alpha_lr: float = 0.01

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")


def dual_update(state: LagrangeState, gap: float) -> LagrangeState:
    """Dual ascent on the constraint violation, clipped at zero:
    alpha <- max(0, alpha + alpha_lr * (gap - tau))."""
    alpha = max(0.0, state.alpha + state.alpha_lr * (gap - state.tau))
    return replace(state, alpha=alpha)


@dataclass
class TrainerConfig:
    """Hyperparameters shared by the trainer and the design optimizer.

    `mining_steps` is the single T used both for adversarial mining and for
    the final design search; `ascent_rate` and `tau` default to the standard
    per-modality values (0.05*sqrt(d) / tau 0.5 continuous, 2.0*sqrt(d) /
    tau 2.0 discrete) when left unset.
    """

    epochs: int = 50
    batch_size: int = 128
    mining_steps: int = 50
    ascent_rate: float | None = None
    adam_lr: float = 1e-3
    seed: int = 0
    tau: float | None = None
    alpha_lr: float = 0.01
    alpha_init: float = 0.0
    hidden: tuple = (64, 64)
    leak: float = 0.3

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mining_steps < 1:
            raise ValueError("mining_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.ascent_rate is not None and self.ascent_rate <= 0.0:
            raise ValueError("ascent_rate must be positive")
        if self.alpha_init < 0.0 or self.alpha_lr < 0.0:
            raise ValueError("alpha_init and alpha_lr must be >= 0")

    def resolved_eta(self, dataset: OfflineDataset) -> float:
        if self.ascent_rate is not None:
            return float(self.ascent_rate)
        scale = DISCRETE_ETA_SCALE if dataset.is_discrete else CONTINUOUS_ETA_SCALE
        return scale * math.sqrt(dataset.input_dim)

    def resolved_tau(self, dataset: OfflineDataset) -> float:
        if self.tau is not None:
            return float(self.tau)
        return DISCRETE_TAU if dataset.is_discrete else CONTINUOUS_TAU


def mine_adversarial(model, x0, eta: float, steps: int) -> AscentTrajectory:
    """Gradient-ascent mining of one adversarial endpoint starting from a
    training design. A non-finite gradient aborts with an error."""
    traj = ascend(model, x0, eta, steps)
    if traj.truncated:
        raise GradientError("non-finite gradient during adversarial mining")
    return traj


def _mine_endpoints(model: ObjectiveModel, X0: np.ndarray,
                    eta: float, steps: int) -> np.ndarray:
    """Batched mining: endpoints of `steps` ascent steps from each row of X0."""
    Xt = X0
    for _ in range(steps):
        G = net.input_gradient_batch(model, Xt)
        if not np.all(np.isfinite(G)):
            raise GradientError("non-finite gradient during adversarial mining")
        Xt = Xt + eta * G
    return Xt


def com_loss(model, batch, mined_batch, alpha: float):
    """Returns (mse, gap, total) where mse = 0.5 * mean squared error on the
    data batch, gap = mean prediction on mined endpoints minus mean
    prediction on the data batch, total = mse + alpha * gap."""
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    X, y = batch
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_mined = np.asarray(mined_batch, dtype=np.float64)
    if len(X) != len(y) or len(X) != len(X_mined):
        raise ValueError("data batch and mined batch lengths must match")
    preds = predict_batch(model, X)
    preds_mined = predict_batch(model, X_mined)
    mse = 0.5 * float(np.mean((preds - y) ** 2))
    gap = float(preds_mined.mean() - preds.mean())
    return mse, gap, mse + alpha * gap


def train(dataset: OfflineDataset, config: TrainerConfig):
    """Train a conservative surrogate on an offline dataset.

    Returns (model, log) where log is one dict per epoch with the keys in
    TRAINING_LOG_COLUMNS. Deterministic given config.seed. When alpha is
    pinned at zero (alpha_init == alpha_lr == 0) mining is skipped and the
    loop is plain supervised regression; gap columns are then NaN.
    """
    config.validate()
    dataset.validate()
    eta = config.resolved_eta(dataset)
    tau = config.resolved_tau(dataset)
    rng = np.random.default_rng(config.seed)
    model = net.build_model(dataset.input_dim, config.hidden, config.leak, rng=rng)
    adam = net.init_adam(model, config.adam_lr)
    lagrange = LagrangeState(alpha=config.alpha_init, tau=tau,
                             alpha_lr=config.alpha_lr)
    conservative = not (config.alpha_init == 0.0 and config.alpha_lr == 0.0)

    X, y = dataset.designs, dataset.scores
    n = len(dataset)
    log = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = {"mse": 0.0, "gap": 0.0, "pred_data": 0.0, "pred_mined": 0.0}
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb, yb = X[idx], y[idx]
            nb = len(idx)
            preds = net.forward_batch(model, Xb)
            mse = 0.5 * float(np.mean((preds - yb) ** 2))
            if conservative:
                X_mined = _mine_endpoints(model, Xb, eta, config.mining_steps)
                preds_mined = net.forward_batch(model, X_mined)
                gap = float(preds_mined.mean() - preds.mean())
                if not (np.isfinite(mse) and np.isfinite(gap)):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} (mse={mse}, gap={gap})")
                g_data = (preds - yb) / nb - lagrange.alpha / nb
                grads = net.loss_gradients(model, Xb, g_data)
                grads = net.add_gradients(
                    grads,
                    net.loss_gradients(model, X_mined,
                                       np.full(nb, lagrange.alpha / nb)))
            else:
                gap = math.nan
                preds_mined = None
                if not np.isfinite(mse):
                    raise TrainingError(f"non-finite loss at epoch {epoch} (mse={mse})")
                grads = net.loss_gradients(model, Xb, (preds - yb) / nb)
            net.adam_step(adam, model, grads)
            if conservative:
                lagrange = dual_update(lagrange, gap)
            sums["mse"] += mse * nb
            sums["pred_data"] += float(preds.mean()) * nb
            if conservative:
                sums["gap"] += gap * nb
                sums["pred_mined"] += float(preds_mined.mean()) * nb
        row = {
            "epoch": epoch,
            "mse": sums["mse"] / n,
            "gap": sums["gap"] / n if conservative else math.nan,
            "alpha": lagrange.alpha,
            "mean_pred_data": sums["pred_data"] / n,
            "mean_pred_mined": sums["pred_mined"] / n if conservative else math.nan,
        }
        log.append(row)
    return model, log


def write_training_log(log, path, trial: int | None = None) -> None:
    """Training log as CSV; an optional leading trial column lets multiple
    trials share one file."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        cols = list(TRAINING_LOG_COLUMNS)
        if trial is not None:
            cols = ["trial"] + cols
        writer.writerow(cols)
        for row in log:
            out = [row[c] if c == "epoch" else repr(float(row[c]))
                   for c in TRAINING_LOG_COLUMNS]
            if trial is not None:
                out = [trial] + out
            writer.writerow(out)


def append_training_log(log, fh, trial: int, write_header: bool) -> None:
    writer = csv.writer(fh)
    if write_header:
        writer.writerow(["trial"] + list(TRAINING_LOG_COLUMNS))
    for row in log:
        writer.writerow([trial] + [row[c] if c == "epoch" else repr(float(row[c]))
                                   for c in TRAINING_LOG_COLUMNS])
