"""Splits, sampling, metrics oracles and the training loop."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molmpnn.chem import parse_smiles, standardize
from molmpnn.featurize import featurize
from molmpnn.model import Model, ModelSpec, make_batch
from molmpnn.training import (
    TrainConfig,
    TrainingDivergedError,
    accuracy,
    activity_threshold,
    auc,
    augment_minority,
    blind_split,
    class_weights,
    classification_metrics,
    confusion_counts,
    evaluate_model,
    f1_score,
    kfold_splits,
    rmse,
    train_model,
    youden_threshold,
)


def mannwhitney_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """O(n^2) oracle: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def toy_graphs(n_per_class: int = 10):
    actives = ["CCO", "CCCO", "CCCCO", "CC(C)O", "CCC(O)C",
               "OCCCO", "CC(O)CC", "CCOC", "OCC(C)C", "CCCC(O)C"]
    inactives = ["CCC", "CCCC", "CCCCC", "CC(C)C", "CCC(C)C",
                 "c1ccccc1", "CCc1ccccc1", "CCCCCC", "CC(C)CC", "CCCCCCC"]
    graphs = []
    for i, smi in enumerate(actives[:n_per_class] + inactives[:n_per_class]):
        mol = standardize(parse_smiles(smi, name=f"m{i}"))
        graphs.append(featurize(mol, y=float(i < n_per_class)))
    return graphs


class TestSplits:
    def test_blind_split_is_stratified_and_complete(self):
        labels = np.array([0] * 30 + [1] * 10)
        train, test = blind_split(labels, seed=0)
        assert len(test) == 8 and len(train) == 32
        assert np.sum(labels[test]) == 2          # 20% of each class
        combined = np.sort(np.concatenate([train, test]))
        np.testing.assert_array_equal(combined, np.arange(40))

    def test_blind_split_deterministic_per_seed(self):
        labels = np.array([0, 1] * 20)
        a = blind_split(labels, seed=7)
        b = blind_split(labels, seed=7)
        c = blind_split(labels, seed=8)
        np.testing.assert_array_equal(a[0], b[0])
        assert not np.array_equal(a[0], c[0])

    def test_kfold_covers_everything_once(self):
        labels = np.array([0] * 12 + [1] * 8)
        folds = kfold_splits(labels, k=5, seed=0)
        assert len(folds) == 5
        all_val = np.sort(np.concatenate([va for _, va in folds]))
        np.testing.assert_array_equal(all_val, np.arange(20))
        for tr, va in folds:
            assert set(tr) & set(va) == set()
            assert 0 < np.mean(labels[va]) < 1  # both classes in each fold

    def test_kfold_rejects_bad_k(self):
        labels = np.array([0, 1, 0, 1])
        with pytest.raises(ValueError):
            kfold_splits(labels, k=1, seed=0)
        with pytest.raises(ValueError):
            kfold_splits(labels, k=5, seed=0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_blind_split_disjoint_for_any_seed(self, seed):
        labels = np.array([0] * 17 + [1] * 13)
        train, test = blind_split(labels, seed=seed)
        assert set(train) & set(test) == set()
        assert len(train) + len(test) == 30


class TestClassWeights:
    def test_reciprocal_of_class_count(self):
        w = class_weights(np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(w, [0.5, 0.5, 1.0])

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            class_weights(np.zeros(5))

    def test_weighted_sampling_balances_classes(self):
        """Sampling with reciprocal-count weights draws classes ~1:1."""
        labels = np.array([0] * 90 + [1] * 10)
        w = class_weights(labels)
        p = w / w.sum()
        rng = np.random.default_rng(0)
        draws = rng.choice(labels, size=100_000, replace=True, p=p)
        assert abs(draws.mean() - 0.5) < 0.02


class TestAugmentation:
    def test_balances_up_to_one_copy_per_original(self):
        graphs = toy_graphs()
        minority = [g for g in graphs if g.y == 1.0][:6]
        majority = [g for g in graphs if g.y == 0.0]
        out = augment_minority(majority + minority, seed=0)
        ys = np.array([g.y for g in out])
        assert (ys == 1.0).sum() == 10 and (ys == 0.0).sum() == 10
        # sharper imbalance than originals can cover: adds at most len(minority)
        out2 = augment_minority(majority + minority[:3], seed=0)
        ys2 = np.array([g.y for g in out2])
        assert (ys2 == 1.0).sum() == 6

    def test_copies_are_isomorphic_refeaturizations(self):
        graphs = toy_graphs()[:12]  # 10 actives, 2 inactives
        out = augment_minority(graphs, seed=1)
        added = out[len(graphs):]
        assert all(g.name.endswith(":aug") for g in added)
        by_name = {g.name: g for g in graphs}
        for g in added:
            src = by_name[g.name[:-4]]
            assert g.x.shape == src.x.shape
            assert g.edge_index.shape == src.edge_index.shape
            # same multiset of atom feature rows under any atom relabeling
            np.testing.assert_allclose(
                np.sort(g.x, axis=0), np.sort(src.x, axis=0), atol=1e-12)

    def test_requires_smiles_provenance(self):
        graphs = toy_graphs()[:10] + toy_graphs()[10:12]  # 10 vs 2 imbalance
        stripped = [type(g)(x=g.x, edge_index=g.edge_index, edge_attr=g.edge_attr,
                            u=g.u, y=g.y, name=g.name, smiles="", mask=g.mask)
                    for g in graphs]
        with pytest.raises(ValueError, match="SMILES"):
            augment_minority(stripped, seed=0)


class TestMetricOracles:
    def test_f1_worked_example(self):
        counts = {"tp": 3, "fp": 1, "fn": 2, "tn": 4}
        assert f1_score(counts) == pytest.approx(3 / 4.5)
        assert accuracy(counts) == pytest.approx(7 / 10)

    def test_f1_degenerate_zero(self):
        assert f1_score({"tp": 0, "fp": 0, "fn": 0, "tn": 5}) == 0.0

    def test_confusion_counts_threshold(self):
        probs = np.array([0.2, 0.6, 0.5, 0.9])
        labels = np.array([0, 1, 1, 0])
        c = confusion_counts(probs, labels, threshold=0.5)
        assert (c["tp"], c["fp"], c["fn"], c["tn"]) == (1, 1, 1, 1)

    def test_rmse(self):
        assert rmse(np.array([1.0, 3.0]), np.array([0.0, 0.0])) == \
            pytest.approx(np.sqrt(5.0))

    def test_auc_against_pairwise_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            n = rng.integers(6, 40)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            # quantized scores force plenty of ties
            scores = np.round(rng.random(n), 1)
            assert auc(scores, labels) == \
                pytest.approx(mannwhitney_auc(scores, labels), abs=1e-9), trial

    def test_auc_perfect_and_inverted(self):
        labels = np.array([0, 0, 1, 1])
        assert auc(np.array([0.1, 0.2, 0.8, 0.9]), labels) == 1.0
        assert auc(np.array([0.9, 0.8, 0.2, 0.1]), labels) == 0.0
        assert auc(np.array([0.5, 0.5, 0.5, 0.5]), labels) == pytest.approx(0.5)

    def test_auc_monotone_transform_invariant(self):
        rng = np.random.default_rng(1)
        scores = rng.random(30)
        labels = rng.integers(0, 2, 30)
        labels[:2] = [0, 1]
        base = auc(scores, labels)
        assert auc(scores * 100 - 3, labels) == pytest.approx(base, abs=1e-12)
        assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)

    def test_auc_single_class_rejected(self):
        with pytest.raises(ValueError):
            auc(np.array([0.1, 0.9]), np.array([1, 1]))

    def test_youden_threshold_separob_point(self):
        scores = np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9])
        labels = np.array([0, 0, 0, 1, 1, 1])
        t = youden_threshold(scores, labels)
        preds = scores > t
        assert np.array_equal(preds.astype(int), labels)

    def test_classification_metrics_single_class_auc_nan(self):
        m = classification_metrics(np.array([0.4, 0.6]), np.array([1.0, 1.0]))
        assert np.isnan(m["auc"])
        assert m["accuracy"] == 0.5


class TestActivityThreshold:
    def test_boundary_inclusive(self):
        out = activity_threshold(np.array([50.0, 100.0, 150.0]))
        np.testing.assert_array_equal(out, [1.0, 1.0, 0.0])

    def test_custom_threshold(self):
        out = activity_threshold(np.array([400.0, 600.0]), threshold_nm=500.0)
        np.testing.assert_array_equal(out, [1.0, 0.0])

    def test_rejects_nonpositive_and_nonfinite(self):
        with pytest.raises(ValueError):
            activity_threshold(np.array([10.0, 0.0]))
        with pytest.raises(ValueError):
            activity_threshold(np.array([10.0, -5.0]))
        with pytest.raises(ValueError):
            activity_threshold(np.array([10.0, np.nan]))


class TestTrainingLoop:
    @staticmethod
    def _spec(hidden=16, task="classification"):
        return ModelSpec(variant="BMP", task=task, hidden_channels=hidden)

    def test_loss_decreases_on_separable_toy(self):
        graphs = toy_graphs()
        model = Model(self._spec(), seed=0)
        result = train_model(model, graphs, graphs,
                             TrainConfig(epochs=20, batch_size=8, seed=0))
        assert result.train_loss[-1] < result.train_loss[0] * 0.7
        assert len(result.train_loss) == 20
        assert result.val_metrics[-1]["f1"] > 0.8

    def test_lr_zero_leaves_parameters_unchanged(self):
        graphs = toy_graphs()
        model = Model(self._spec(), seed=1)
        before = {k: t.data.copy() for k, t in model.store.params.items()}
        train_model(model, graphs, graphs,
                    TrainConfig(lr=0.0, epochs=2, batch_size=8, seed=0))
        for name, data in before.items():
            np.testing.assert_array_equal(model.store.params[name].data, data)

    def test_same_seed_reproduces_loss_trace(self):
        graphs = toy_graphs()
        r1 = train_model(Model(self._spec(), seed=2), graphs, graphs,
                         TrainConfig(epochs=4, batch_size=8, seed=5))
        r2 = train_model(Model(self._spec(), seed=2), graphs, graphs,
                         TrainConfig(epochs=4, batch_size=8, seed=5))
        assert r1.train_loss == r2.train_loss
        assert r1.val_loss == r2.val_loss

    def test_divergence_aborts_with_diagnostics(self):
        graphs = []
        for i, g in enumerate(toy_graphs()[:8]):
            graphs.append(type(g)(x=g.x, edge_index=g.edge_index,
                                  edge_attr=g.edge_attr, u=g.u,
                                  y=float(1e4 * (i + 1)), name=g.name,
                                  smiles=g.smiles, mask=g.mask))
        model = Model(self._spec(task="regression"), seed=3)
        config = TrainConfig(lr=1e18, epochs=30, batch_size=4, seed=0,
                             clip_max_norm=1e30, sampler="uniform",
                             task="regression")
        with pytest.raises(TrainingDivergedError) as err, \
                np.errstate(over="ignore", invalid="ignore"):
            train_model(model, graphs, graphs, config)
        diag = err.value.diagnostics
        assert {"epoch", "batch", "loss", "lr", "variant"} <= set(diag)
        assert diag["variant"] == "BMP"

    def test_epoch_callback_stops_early(self):
        graphs = toy_graphs()
        model = Model(self._spec(), seed=4)
        seen = []

        def cb(epoch, snapshot):
            seen.append((epoch, snapshot["train_loss"]))
            return epoch >= 2

        result = train_model(model, graphs, graphs,
                             TrainConfig(epochs=50, batch_size=8, seed=0),
                             epoch_callback=cb)
        assert result.stopped_early
        assert len(result.train_loss) == 3
        assert [e for e, _ in seen] == [0, 1, 2]

    def test_evaluate_model_matches_final_val_metrics(self):
        graphs = toy_graphs()
        model = Model(self._spec(), seed=5)
        result = train_model(model, graphs, graphs,
                             TrainConfig(epochs=3, batch_size=8, seed=0))
        again = evaluate_model(model, graphs)
        assert again["loss"] == pytest.approx(result.val_loss[-1], abs=1e-12)
        assert again["f1"] == result.val_metrics[-1]["f1"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(sampler="stratified")
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(task="clustering")
