"""Hybrid backward/forward feature selection.

Each round trains a cross-validated model once per candidate ablation:
(a) every active feature is removed in turn and the validation F1 recorded;
(b) features are ranked — the largest F1 drop on removal earns the most
points (rank positions as points, alphabetical tie-break); (c) the features
whose individual removal improved on the round baseline are removed greedily
in descending-improvement order, re-validating after each removal and keeping
only removals that don't hurt the best F1 so far; (d) eliminated features are
offered back one at a time and re-added when that strictly improves F1;
(e) rounds repeat until one ends with no change.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .featurize import FeatureMask, FeaturizedGraph, narrow_graph
from .model import Model, ModelSpec
from .training import TrainConfig, kfold_splits, train_model


@dataclass
class SelectionConfig:
    """Fixed training setup for every ablation run.

    Defaults follow the selection protocol's published constants; tests shrink
    them for speed.
    """

    variant: str = "BMP"
    hidden_channels: int = 250
    lr: float = 0.003
    batch_size: int = 32
    epochs: int = 50
    dropout: float = 0.25
    cv_folds: int = 5
    seed: int = 0
    max_rounds: int = 10


@dataclass
class SelectionResult:
    mask: FeatureMask
    eliminated: list[str]
    ranking: list[dict] = field(default_factory=list)   # per-feature rows
    rounds: list[dict] = field(default_factory=list)    # per-round audit trail
    baseline_f1: float = 0.0
    final_f1: float = 0.0


def cross_validated_f1(graphs: list[FeaturizedGraph], mask: FeatureMask,
                       config: SelectionConfig) -> float:
    """Mean validation F1 over k folds with the given feature subset."""
    narrowed = [narrow_graph(g, mask) for g in graphs]
    labels = np.array([g.y for g in narrowed])
    if len(narrowed) < config.cv_folds:
        raise ValueError(
            f"dataset of {len(narrowed)} graphs is too small for "
            f"{config.cv_folds}-fold cross-validation")
    folds = kfold_splits(labels, config.cv_folds, seed=config.seed)
    scores = []
    for fold_no, (tr, va) in enumerate(folds):
        spec = ModelSpec(config.variant, "classification",
                         config.hidden_channels, dropout=config.dropout,
                         n_atom_features=mask.n_atom,
                         n_bond_features=mask.n_bond,
                         n_global_features=mask.n_global)
        model = Model(spec, seed=config.seed * 1000 + fold_no)
        tc = TrainConfig(lr=config.lr, batch_size=config.batch_size,
                         epochs=config.epochs, seed=config.seed * 1000 + fold_no)
        result = train_model(model, [narrowed[i] for i in tr],
                             [narrowed[i] for i in va], tc)
        scores.append(result.val_metrics[-1]["f1"])
    return float(np.mean(scores))


def select_features(graphs: list[FeaturizedGraph],
                    config: SelectionConfig | None = None) -> SelectionResult:
    config = config or SelectionConfig()
    active = list(graphs[0].mask.active_names())
    if len(active) < 2:
        raise ValueError("feature selection needs at least 2 active features")
    points: dict[str, float] = {name: 0.0 for name in active}
    per_round_points: dict[str, list[float]] = {name: [] for name in active}
    eliminated: list[str] = []

    baseline = cross_validated_f1(graphs, FeatureMask.from_active(active),
                                  config)
    initial_baseline = baseline
    result = SelectionResult(mask=FeatureMask.from_active(active),
                             eliminated=[], baseline_f1=initial_baseline)

    for round_no in range(config.max_rounds):
        if len(active) < 2:
            break
        round_baseline = cross_validated_f1(
            graphs, FeatureMask.from_active(active), config)

        ablation_f1: dict[str, float] = {}
        for name in active:
            trial_mask = FeatureMask.from_active(set(active) - {name})
            ablation_f1[name] = cross_validated_f1(graphs, trial_mask, config)

        # largest F1 drop (lowest score with the feature removed) earns the
        # most points; ties break alphabetically
        ranked = sorted(active, key=lambda n: (ablation_f1[n], n))
        for pos, name in enumerate(ranked):
            pts = float(len(ranked) - pos)
            points[name] += pts
            per_round_points[name].append(pts)
        for name in eliminated:
            per_round_points[name].append(0.0)

        candidates = [n for n in active if ablation_f1[n] > round_baseline]
        candidates.sort(key=lambda n: (-(ablation_f1[n] - round_baseline), n))

        best_f1 = round_baseline
        changed = False
        for name in candidates:
            if len(active) == 1:
                break
            if name not in active:
                continue
            trial = cross_validated_f1(
                graphs, FeatureMask.from_active(set(active) - {name}), config)
            if trial >= best_f1:
                active.remove(name)
                eliminated.append(name)
                best_f1 = trial
                changed = True

        # forward refinement: offer eliminated features back
        for name in list(eliminated):
            trial = cross_validated_f1(
                graphs, FeatureMask.from_active(set(active) | {name}), config)
            if trial > best_f1:
                eliminated.remove(name)
                active.append(name)
                best_f1 = trial
                changed = True

        result.rounds.append({
            "round": round_no, "baseline_f1": round_baseline,
            "ablation_f1": dict(ablation_f1), "active_after": list(active),
            "best_f1": best_f1,
        })
        if not changed:
            break

    final_mask = FeatureMask.from_active(active)
    ordering = sorted(points, key=lambda n: (-points[n], n))
    result.mask = final_mask
    result.eliminated = eliminated
    result.final_f1 = cross_validated_f1(graphs, final_mask, config)
    result.ranking = [
        {"feature": name, "points_per_round": per_round_points[name],
         "cumulative_points": points[name],
         "final_rank": ordering.index(name) + 1,
         "retained": name in active}
        for name in ordering
    ]
    return result
