"""Dataset splitting, imbalance handling, the epoch loop, and metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .chem import parse_smiles, randomized_traversal, standardize
from .featurize import FeaturizedGraph, FeatureMask, featurize
from .model import Batch, Model, make_batch
from .optim import Adam, PlateauScheduler, clip_grad_norm


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    lr: float = 0.003
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    clip_max_norm: float = 1.0
    sampler: str = "weighted"        # "weighted" | "uniform"
    augment_minority: bool = False
    task: str = "classification"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sampler not in ("weighted", "uniform"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class TrainResult:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_metrics: list[dict] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    stopped_early: bool = False


# -- splits -------------------------------------------------------------------------


def _shuffled_class_indices(labels: np.ndarray, rng) -> list[np.ndarray]:
    out = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        out.append(idx)
    return out


def blind_split(labels: np.ndarray, seed: int,
                test_fraction: float = 0.2,
                stratify: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled 80/20 split, stratified per class when asked."""
    labels = np.asarray(labels)
    n = labels.size
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    test: list[np.ndarray] = []
    if stratify:
        for idx in _shuffled_class_indices(labels, rng):
            n_test = int(round(idx.size * test_fraction))
            test.append(idx[:n_test])
    else:
        idx = rng.permutation(n)
        test.append(idx[:int(round(n * test_fraction))])
    test_idx = np.sort(np.concatenate(test)) if test else np.array([], dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx.astype(np.int64)


def kfold_splits(labels: np.ndarray, k: int, seed: int,
                 stratify: bool = True) -> list[tuple[np.ndarray, np.ndarray]]:
    """k disjoint validation folds covering the dataset; round-robin per class."""
    labels = np.asarray(labels)
    n = labels.size
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    if stratify:
        for idx in _shuffled_class_indices(labels, rng):
            fold_of[idx] = np.arange(idx.size) % k
    else:
        idx = rng.permutation(n)
        fold_of[idx] = np.arange(n) % k
    out = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        out.append((train, val))
    return out


# -- imbalance ----------------------------------------------------------------------


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Per-sample weight = reciprocal of the sample's class count."""
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise ValueError("class weights need at least two classes")
    count_of = dict(zip(classes.tolist(), counts.tolist()))
    return np.array([1.0 / count_of[y] for y in labels.tolist()])


def augment_minority(graphs: list[FeaturizedGraph],
                     seed: int) -> list[FeaturizedGraph]:
    """Append re-featurized randomized-SMILES duplicates of minority graphs
    until class counts match, capped at one duplicate per original."""
    labels = np.array([g.y for g in graphs])
    binary = (labels > 0.5).astype(int)
    n_pos, n_neg = int(binary.sum()), int((1 - binary).sum())
    if n_pos == n_neg:
        return list(graphs)
    minority_label = 1 if n_pos < n_neg else 0
    minority = [i for i, b in enumerate(binary) if b == minority_label]
    need = abs(n_pos - n_neg)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(minority))
    out = list(graphs)
    for j in order[:min(need, len(minority))]:
        g = graphs[minority[j]]
        if not g.smiles:
            raise ValueError(
                f"graph {g.name!r} has no source SMILES; augmentation needs "
                "SMILES-born inputs")
        mol = standardize(parse_smiles(g.smiles))
        alt, _ = randomized_traversal(mol, seed=int(rng.integers(2 ** 31)))
        alt_mol = standardize(parse_smiles(alt, name=f"{g.name}:aug"))
        out.append(featurize(alt_mol, g.mask, y=g.y))
    return out


# -- metrics ------------------------------------------------------------------------


def confusion_counts(probs: np.ndarray, labels: np.ndarray,
                     threshold: float = 0.5) -> dict[str, int]:
    probs = np.asarray(probs)
    labels = np.asarray(labels).astype(int)
    pred = (probs > threshold).astype(int)
    return {
        "tp": int(((pred == 1) & (labels == 1)).sum()),
        "fp": int(((pred == 1) & (labels == 0)).sum()),
        "tn": int(((pred == 0) & (labels == 0)).sum()),
        "fn": int(((pred == 0) & (labels == 1)).sum()),
    }


def f1_score(counts: dict[str, int]) -> float:
    denom = counts["tp"] + 0.5 * (counts["fp"] + counts["fn"])
    return counts["tp"] / denom if denom > 0 else 0.0


def accuracy(counts: dict[str, int]) -> float:
    total = sum(counts.values())
    return (counts["tp"] + counts["tn"]) / total if total else 0.0


def rmse(pred: np.ndarray, true: np.ndarray) -> float:
    pred, true = np.asarray(pred), np.asarray(true)
    return float(np.sqrt(np.mean((pred - true) ** 2)))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC area by trapezoid over the threshold sweep.

    Thresholds walk the unique score values from high to low, so tied scores
    move as one block — this makes the result equal to the Mann–Whitney
    statistic with ties counted half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined for single-class labels")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # block boundaries where the score strictly drops
    distinct = np.flatnonzero(np.diff(sorted_scores)) + 1
    boundaries = np.concatenate([distinct, [scores.size]])
    tps = np.cumsum(sorted_labels)[boundaries - 1]
    fps = boundaries - tps
    tpr = np.concatenate([[0.0], tps / n_pos])
    fpr = np.concatenate([[0.0], fps / n_neg])
    return float(np.trapezoid(tpr, fpr))


def youden_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Reporting utility: threshold maximizing TPR − FPR over observed scores."""
    scores = np.asarray(scores)
    labels = np.asarray(labels).astype(int)
    best_t, best_j = 0.5, -np.inf
    for t in np.unique(scores):
        c = confusion_counts(scores, labels, threshold=t - 1e-12)
        tpr = c["tp"] / max(c["tp"] + c["fn"], 1)
        fpr = c["fp"] / max(c["fp"] + c["tn"], 1)
        if tpr - fpr > best_j:
            best_j, best_t = tpr - fpr, float(t - 1e-12)
    return best_t


def activity_threshold(ic50_values: np.ndarray,
                       threshold_nm: float = 100.0) -> np.ndarray:
    """IC50 ≤ threshold (inclusive) → active (1)."""
    vals = np.asarray(ic50_values, dtype=np.float64)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError("IC50 values must be finite and positive")
    return (vals <= threshold_nm).astype(np.float64)


def classification_metrics(probs: np.ndarray, labels: np.ndarray) -> dict:
    counts = confusion_counts(probs, labels)
    out = {"f1": f1_score(counts), "accuracy": accuracy(counts), **counts}
    if len(np.unique(labels)) == 2:
        out["auc"] = auc(probs, labels)
    else:
        out["auc"] = float("nan")
    return out


# -- the epoch loop -----------------------------------------------------------------


def _iter_batches(graphs: list[FeaturizedGraph], order: np.ndarray,
                  batch_size: int):
    for start in range(0, order.size, batch_size):
        chunk = order[start:start + batch_size]
        yield make_batch([graphs[i] for i in chunk])


def _loss_for(model: Model, batch: Batch, training: bool, rng) -> ad.Tensor:
    out = model.forward(batch, training=training, rng=rng)["output"]
    if model.spec.task == "classification":
        return ad.bce_with_logits(out, batch.y)
    return ad.mse(out, batch.y)


def evaluate_model(model: Model, graphs: list[FeaturizedGraph],
                   batch_size: int = 64) -> dict:
    """Loss plus task metrics on a held-out list of graphs (eval mode)."""
    losses, weights, preds, labels = [], [], [], []
    for start in range(0, len(graphs), batch_size):
        batch = make_batch(graphs[start:start + batch_size])
        losses.append(float(_loss_for(model, batch, False, None).data))
        weights.append(batch.n_graphs)
        preds.append(model.predict(batch))
        labels.append(batch.y)
    loss = float(np.average(losses, weights=weights))
    preds = np.concatenate(preds)
    labels = np.concatenate(labels)
    out = {"loss": loss, "n": len(graphs)}
    if model.spec.task == "classification":
        out.update(classification_metrics(preds, labels))
    else:
        out["rmse"] = rmse(preds, labels)
    return out


def train_model(model: Model, train_graphs: list[FeaturizedGraph],
                val_graphs: list[FeaturizedGraph], config: TrainConfig,
                epoch_callback=None) -> TrainResult:
    """Run the full epoch loop in place on ``model``.

    Per epoch: draw an index order (weighted with replacement when configured),
    run batches through forward/loss/backward, clip the global gradient norm,
    take an Adam step, then score the validation set and feed its loss to the
    plateau scheduler. A non-finite loss aborts with diagnostics. The optional
    ``epoch_callback(epoch, snapshot)`` may return True to stop early (used by
    hyperparameter pruning).
    """
    if not train_graphs:
        raise ValueError("empty training set")
    if not val_graphs:
        raise ValueError("empty validation set")
    if config.task != model.spec.task:
        raise ValueError("config task does not match model task")

    if config.augment_minority and config.task == "classification":
        train_graphs = augment_minority(train_graphs, seed=config.seed)

    labels = np.array([g.y for g in train_graphs])
    n = len(train_graphs)
    if config.sampler == "weighted" and config.task == "classification":
        weights = class_weights(labels)
        weights = weights / weights.sum()
    else:
        weights = None

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.store, lr=config.lr)
    scheduler = PlateauScheduler(optimizer)
    result = TrainResult()

    for epoch in range(config.epochs):
        if weights is not None:
            order = rng.choice(n, size=n, replace=True, p=weights)
        else:
            order = rng.permutation(n)
        epoch_loss, epoch_graphs = 0.0, 0
        for batch_no, batch in enumerate(_iter_batches(train_graphs, order,
                                                       config.batch_size)):
            model.store.zero_grad()
            loss = _loss_for(model, batch, True, rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}",
                    {"epoch": epoch, "batch": batch_no, "loss": value,
                     "lr": optimizer.lr, "variant": model.spec.variant})
            ad.backward(loss)
            clip_grad_norm(model.store, config.clip_max_norm)
            optimizer.step()
            epoch_loss += value * batch.n_graphs
            epoch_graphs += batch.n_graphs
        result.train_loss.append(epoch_loss / epoch_graphs)

        val = evaluate_model(model, val_graphs,
                             batch_size=max(config.batch_size, 64))
        result.val_loss.append(val["loss"])
        result.val_metrics.append(val)
        result.lr_trace.append(scheduler.step(val["loss"]))

        if epoch_callback is not None:
            snapshot = {"epoch": epoch, "train_loss": result.train_loss[-1],
                        "val_loss": val["loss"], **val}
            if epoch_callback(epoch, snapshot):
                result.stopped_early = True
                break
    return result
