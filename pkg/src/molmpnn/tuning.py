"""Dual-objective random hyperparameter search with pruning.

Trials draw (hidden_channels, dropout, batch_size) uniformly from the search
ranges, run k-fold cross-validation, and report an objective pair:
classification minimizes |val − train| loss gap while maximizing validation
F1; regression minimizes both the gap and the validation RMSE. Underperforming
trials stop early — classification prunes at epoch 30 when F1 < 0.65,
regression at epoch 20 when the absolute loss gap exceeds 0.15. The returned
set is the nondominated front plus the knee point (closest to the ideal corner
after min–max scaling).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .featurize import FeaturizedGraph
from .model import Model, ModelSpec
from .training import TrainConfig, kfold_splits, train_model

HIDDEN_RANGE = (50, 400)
DROPOUT_RANGE = (0.05, 0.5)
BATCH_RANGE = (20, 180)

CLASSIFICATION_PRUNE_EPOCH = 30
CLASSIFICATION_PRUNE_F1 = 0.65
REGRESSION_PRUNE_EPOCH = 20
REGRESSION_PRUNE_GAP = 0.15


class AllTrialsPrunedError(RuntimeError):
    pass


@dataclass
class Trial:
    trial_id: int
    hidden_channels: int
    dropout: float
    batch_size: int
    loss_gap: float = float("nan")
    score: float = float("nan")        # val F1 (classification) or RMSE
    pruned: bool = False
    prune_reason: str = ""
    pareto: bool = False


@dataclass
class TuneResult:
    trials: list[Trial]
    pareto_ids: list[int]
    best_id: int

    @property
    def best(self) -> Trial:
        return next(t for t in self.trials if t.trial_id == self.best_id)


def sample_trial(rng: np.random.Generator, trial_id: int) -> Trial:
    return Trial(
        trial_id=trial_id,
        hidden_channels=int(rng.integers(HIDDEN_RANGE[0], HIDDEN_RANGE[1] + 1)),
        dropout=float(rng.uniform(*DROPOUT_RANGE)),
        batch_size=int(rng.integers(BATCH_RANGE[0], BATCH_RANGE[1] + 1)),
    )


def should_prune(task: str, epochs_completed: int, snapshot: dict) -> bool:
    """The early-termination rule, as a pure function of one epoch snapshot."""
    if task == "classification":
        return (epochs_completed == CLASSIFICATION_PRUNE_EPOCH
                and snapshot.get("f1", 0.0) < CLASSIFICATION_PRUNE_F1)
    gap = abs(snapshot["val_loss"] - snapshot["train_loss"])
    return epochs_completed == REGRESSION_PRUNE_EPOCH and gap > REGRESSION_PRUNE_GAP


def _dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """Both objectives are expressed as costs (lower is better)."""
    return (a[0] <= b[0] and a[1] <= b[1]) and (a[0] < b[0] or a[1] < b[1])


def pareto_front(costs: list[tuple[float, float]]) -> list[int]:
    out = []
    for i, c in enumerate(costs):
        if not any(_dominates(other, c) for j, other in enumerate(costs) if j != i):
            out.append(i)
    return out


def knee_point(costs: list[tuple[float, float]],
               front: list[int]) -> int:
    """Front member closest to the ideal corner on min–max-scaled axes."""
    arr = np.array(costs, dtype=np.float64)
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    scaled = (arr - lo) / span
    dist = np.sqrt((scaled ** 2).sum(axis=1))
    best = min(front, key=lambda i: (dist[i], i))
    return best


def tune(graphs: list[FeaturizedGraph], variant: str, n_trials: int,
         seed: int, task: str = "classification", cv_folds: int = 5,
         epochs: int = 50, lr: float = 0.003,
         feature_dims: tuple[int, int, int] | None = None) -> TuneResult:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    labels = np.array([g.y for g in graphs])
    stratify = task == "classification"
    folds = kfold_splits(labels, cv_folds, seed=seed, stratify=stratify)
    if feature_dims is None:
        m = graphs[0].mask
        feature_dims = (m.n_atom, m.n_bond, m.n_global)

    trials: list[Trial] = []
    for t in range(n_trials):
        trial = sample_trial(rng, t)
        gaps, scores = [], []
        pruned = False
        for fold_no, (tr, va) in enumerate(folds):
            spec = ModelSpec(variant, task, trial.hidden_channels,
                             dropout=trial.dropout,
                             n_atom_features=feature_dims[0],
                             n_bond_features=feature_dims[1],
                             n_global_features=feature_dims[2])
            model = Model(spec, seed=seed * 10000 + t * 10 + fold_no)
            tc = TrainConfig(lr=lr, batch_size=trial.batch_size, epochs=epochs,
                             seed=seed * 10000 + t * 10 + fold_no, task=task)

            def callback(epoch, snapshot):
                return should_prune(task, epoch + 1, snapshot)

            result = train_model(model, [graphs[i] for i in tr],
                                 [graphs[i] for i in va], tc,
                                 epoch_callback=callback)
            if result.stopped_early:
                pruned = True
                trial.prune_reason = (
                    f"fold {fold_no} stopped at epoch {len(result.train_loss)}")
                break
            gaps.append(abs(result.val_loss[-1] - result.train_loss[-1]))
            last = result.val_metrics[-1]
            scores.append(last["f1"] if task == "classification"
                          else last["rmse"])
        trial.pruned = pruned
        if not pruned:
            trial.loss_gap = float(np.mean(gaps))
            trial.score = float(np.mean(scores))
        trials.append(trial)

    alive = [t for t in trials if not t.pruned]
    if not alive:
        raise AllTrialsPrunedError(
            f"all {n_trials} trials were pruned; widen the search or relax "
            "the pruning thresholds")

    # cost space: gap is minimized; F1 flips sign, RMSE is already a cost
    costs = [(t.loss_gap, -t.score if task == "classification" else t.score)
             for t in alive]
    front_local = pareto_front(costs)
    for i in front_local:
        alive[i].pareto = True
    best_local = knee_point(costs, front_local)
    return TuneResult(trials=trials,
                      pareto_ids=[alive[i].trial_id for i in front_local],
                      best_id=alive[best_local].trial_id)
