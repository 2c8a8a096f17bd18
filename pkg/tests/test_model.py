"""Model variants: parameter accounting, invariances and persistence."""
from __future__ import annotations

import numpy as np
import pytest

from molmpnn.chem import parse_smiles, standardize
from molmpnn.featurize import featurize, permute_graph
from molmpnn.model import (
    Batch,
    Model,
    ModelSpec,
    VARIANTS,
    copy_common_parameters,
    load_checkpoint,
    make_batch,
    save_checkpoint,
)

SMILES = ["CCO", "CC(C)O", "c1ccccc1", "CC(N)C(=O)O", "C1CCNCC1", "CCOC"]


def graphs_for(smiles=SMILES, y=None):
    out = []
    for i, smi in enumerate(smiles):
        label = float(i % 2) if y is None else y[i]
        out.append(featurize(standardize(parse_smiles(smi)), y=label))
    return out


def spec_for(variant: str, hidden: int = 16, heads: int = 1) -> ModelSpec:
    return ModelSpec(variant=variant, task="classification",
                     hidden_channels=hidden, attention_heads=heads)


class TestParameterAccounting:
    # Node-block sizes at H=250 with the Table-1 feature dims (6/4/6); the
    # relative ordering across variants is the load-bearing property.
    NODE_COUNTS = {
        "BMP": 188_000,
        "CBMP": 188_000,
        "BMP_SN": 189_500,
        "ABMP": 193_500,
        "ABMP_SN": 195_000,
        "UMP": 255_500,
    }

    def test_node_block_sizes_at_reference_width(self):
        for variant, want in self.NODE_COUNTS.items():
            model = Model(spec_for(variant, hidden=250))
            assert model.count_parameters()["node"] == want, variant

    def test_message_and_global_blocks_at_reference_width(self):
        model = Model(spec_for("BMP", hidden=250))
        counts = model.count_parameters()
        assert counts["message"] == 67_000
        assert counts["global"] == 127_251

    def test_variant_size_ordering(self):
        node = {v: Model(spec_for(v, hidden=250)).count_parameters()["node"]
                for v in self.NODE_COUNTS}
        assert node["UMP"] > node["ABMP_SN"] > node["ABMP"] > node["BMP_SN"] \
            > node["CBMP"] == node["BMP"]

    def test_attention_head_increment(self):
        one = Model(spec_for("ABMP", hidden=250, heads=1)).count_parameters()
        two = Model(spec_for("ABMP", hidden=250, heads=2)).count_parameters()
        H = 250
        per_head = (6 * H + H) + (4 * H + H) + (6 * H + H) + 3 * H  # phi_i/e/j + a
        assert per_head == 22 * H == 5_500
        widened_mlp = 2 * H * H  # node-MLP input grows from 2H to 4H
        assert two["node"] - one["node"] == per_head + widened_mlp

    def test_groups_sum_to_total_and_match_store(self):
        for variant in VARIANTS:
            model = Model(spec_for(variant))
            counts = model.count_parameters()
            assert counts["total"] == model.store.count(), variant
            assert counts["total"] == sum(v for k, v in counts.items()
                                          if k != "total"), variant


class TestModelSpecValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            ModelSpec(variant="GNN", task="classification", hidden_channels=8)
        with pytest.raises(ValueError):
            ModelSpec(variant="BMP", task="ranking", hidden_channels=8)
        with pytest.raises(ValueError):
            ModelSpec(variant="BMP", task="classification", hidden_channels=0)
        with pytest.raises(ValueError):
            ModelSpec(variant="BMP", task="classification", hidden_channels=8,
                      dropout=1.0)

    def test_heads_only_for_attention_variants(self):
        with pytest.raises(ValueError):
            ModelSpec(variant="BMP", task="classification", hidden_channels=8,
                      attention_heads=2)
        ModelSpec(variant="ABMP", task="classification", hidden_channels=8,
                  attention_heads=3)  # fine

    def test_dict_round_trip(self):
        spec = spec_for("ABMP_SN", hidden=32, heads=2)
        assert ModelSpec.from_dict(spec.to_dict()) == spec


class TestForward:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_output_shape_and_finiteness(self, variant):
        batch = make_batch(graphs_for())
        model = Model(spec_for(variant), seed=1)
        out = model.forward(batch, training=False)
        assert out["output"].data.shape == (batch.n_graphs,)
        assert out["node_embeddings"].data.shape == (batch.x.shape[0], 16)
        assert np.all(np.isfinite(out["output"].data))

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_batching_matches_single_molecule_eval(self, variant):
        """Evaluating a batch equals evaluating its members one at a time."""
        graphs = graphs_for()
        model = Model(spec_for(variant), seed=2)
        model.forward(make_batch(graphs), training=True,
                      rng=np.random.default_rng(0))  # warm the norm buffers
        batched = model.predict(make_batch(graphs))
        single = np.concatenate([model.predict(make_batch([g])) for g in graphs])
        np.testing.assert_allclose(batched, single, atol=1e-9)

    def test_training_mode_requires_rng(self):
        model = Model(spec_for("BMP"))
        with pytest.raises(ValueError):
            model.forward(make_batch(graphs_for()), training=True)

    def test_feature_width_mismatch_rejected(self):
        model = Model(ModelSpec(variant="BMP", task="classification",
                                hidden_channels=8, n_atom_features=3))
        with pytest.raises(ValueError):
            model.forward(make_batch(graphs_for()), training=False)

    def test_permutation_invariance_and_equivariance(self):
        """Relabeling atoms permutes node embeddings and fixes the output."""
        g = graphs_for(["CC(N)C(=O)O"])[0]
        model = Model(spec_for("BMP"), seed=3)
        rng = np.random.default_rng(11)
        base = model.forward(make_batch([g]), training=False)
        for _ in range(5):
            perm = rng.permutation(g.x.shape[0])
            out = model.forward(make_batch([permute_graph(g, perm)]),
                                training=False)
            assert abs(out["output"].data[0] - base["output"].data[0]) < 1e-9
            np.testing.assert_allclose(
                out["node_embeddings"].data[perm],
                base["node_embeddings"].data, atol=1e-9)

    def test_edge_direction_changes_bidirectional_output(self):
        """BMP treats forward and backward aggregation distinctly, so
        reversing one edge on an asymmetric path must move the logit."""
        g = graphs_for(["CCO"])[0]
        fwd = Batch(x=g.x, edge_index=g.edge_index, edge_attr=g.edge_attr,
                    u=g.u.reshape(1, -1), node_graph=np.zeros(3, dtype=np.int64),
                    edge_graph=np.zeros(2, dtype=np.int64),
                    y=np.array([0.0]), n_graphs=1)
        flipped_index = g.edge_index.copy()
        flipped_index[:, 0] = flipped_index[::-1, 0]
        rev = Batch(x=g.x, edge_index=flipped_index, edge_attr=g.edge_attr,
                    u=g.u.reshape(1, -1), node_graph=np.zeros(3, dtype=np.int64),
                    edge_graph=np.zeros(2, dtype=np.int64),
                    y=np.array([0.0]), n_graphs=1)
        model = Model(spec_for("BMP"), seed=4)
        a = model.forward(fwd, training=False)["output"].data[0]
        b = model.forward(rev, training=False)["output"].data[0]
        assert abs(a - b) > 1e-12

    def test_regression_predict_is_raw_logit(self):
        spec = ModelSpec(variant="BMP", task="regression", hidden_channels=8)
        model = Model(spec, seed=5)
        batch = make_batch(graphs_for())
        out = model.forward(batch, training=False)["output"].data
        np.testing.assert_array_equal(model.predict(batch), out)

    def test_classification_predict_is_probability(self):
        model = Model(spec_for("BMP"), seed=5)
        preds = model.predict(make_batch(graphs_for()))
        assert np.all((preds > 0) & (preds < 1))


class TestBatchAssembly:
    def test_offsets_and_degrees(self):
        graphs = graphs_for(["CCO", "CC"])
        batch = make_batch(graphs)
        assert batch.x.shape[0] == 5
        np.testing.assert_array_equal(batch.node_graph, [0, 0, 0, 1, 1])
        np.testing.assert_array_equal(batch.edge_graph, [0, 0, 1])
        # second molecule's single bond references offset atom ids
        np.testing.assert_array_equal(batch.edge_index[:, 2], [3, 4])
        # heavy-atom degrees count both endpoints of every bond
        np.testing.assert_array_equal(batch.degrees, [1, 2, 1, 1, 1])

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            make_batch([])


class TestEquivalences:
    def test_copy_common_parameters_transfers_matching_shapes(self):
        src = Model(spec_for("BMP"), seed=6)
        dst = Model(spec_for("ABMP"), seed=7)
        copy_common_parameters(src, dst)
        for name, t in src.store.params.items():
            if name in dst.store.params and \
                    dst.store.params[name].data.shape == t.data.shape:
                np.testing.assert_array_equal(dst.store.params[name].data, t.data)

    def test_aump_equals_ump_on_singleton_attention(self):
        """Every node of a diatomic has one incoming mirrored edge, so the
        attention softmax is exactly 1 and AUMP must reproduce UMP bitwise."""
        g = graphs_for(["CC"])[0]
        ump = Model(ModelSpec(variant="UMP", task="classification",
                              hidden_channels=12), seed=8)
        aump = Model(ModelSpec(variant="AUMP", task="classification",
                               hidden_channels=12), seed=9)
        copy_common_parameters(ump, aump)
        batch = make_batch([g])
        a = ump.forward(batch, training=False)["output"].data
        b = aump.forward(batch, training=False)["output"].data
        np.testing.assert_array_equal(a, b)


class TestNodeRelevance:
    def test_constant_embeddings_score_half(self):
        model = Model(spec_for("BMP"), seed=10)
        emb = np.ones((4, 16))
        scores = model.node_relevance(emb, np.zeros(4, dtype=np.int64), 1)
        np.testing.assert_array_equal(scores, 0.5)

    def test_min_max_is_per_molecule(self):
        model = Model(spec_for("BMP"), seed=10)
        batch = make_batch(graphs_for())
        out = model.forward(batch, training=False)
        scores = model.node_relevance(out["node_embeddings"].data,
                                      batch.node_graph, batch.n_graphs)
        assert np.all((scores >= 0.0) & (scores <= 1.0))
        for gid in range(batch.n_graphs):
            s = scores[batch.node_graph == gid]
            if np.ptp(s) > 0:
                assert s.min() == 0.0 and s.max() == 1.0


class TestCheckpoint:
    def test_round_trip_preserves_predictions_bitwise(self, tmp_path):
        graphs = graphs_for()
        model = Model(spec_for("ABMP_SN", heads=2), seed=11)
        model.forward(make_batch(graphs), training=True,
                      rng=np.random.default_rng(1))  # move the norm buffers
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, manifest_hash="abc123",
                        extra_meta={"seed": 11})
        loaded, meta = load_checkpoint(path)
        assert meta["feature_manifest_hash"] == "abc123"
        assert meta["seed"] == 11
        assert loaded.spec == model.spec
        np.testing.assert_array_equal(loaded.predict(make_batch(graphs)),
                                      model.predict(make_batch(graphs)))

    def test_wrong_container_kind_rejected(self, tmp_path):
        from molmpnn.container import write_container
        path = tmp_path / "notamodel.bin"
        write_container(path, {"kind": "graph_cache"}, {"a": np.ones(2)})
        with pytest.raises(ValueError):
            load_checkpoint(path)
