"""Message-passing models over featurized molecular graphs.

One architecture skeleton — input batch norm, a shared per-edge message MLP, a
variant-specific node block, and a pooled global readout — with nine node-block
variants. Directions follow the stored canonical edges: "forward" aggregates a
message onto its destination node, "backward" onto its source. Bidirectional
blocks concatenate the two directional aggregates in that fixed order.

All MLPs are two layers (in → H → H) with ReLU and dropout after the first
layer. The undirected variants (UMP/AUMP) duplicate edges in both orientations
and run an inner MLP over [x_src ‖ message ‖ x_dst] before mean-aggregation
and an outer MLP over [x ‖ aggregate]; they also pool nodes into the global
readout with a mean instead of a max.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .container import read_container, write_container
from .featurize import FeaturizedGraph
from .optim import ParameterStore, bias_init, glorot

VARIANTS = ("MP", "AMP", "UMP", "AUMP", "BMP", "BMP_SN", "CBMP", "ABMP", "ABMP_SN")
ATTENTION_VARIANTS = frozenset({"AMP", "ABMP", "ABMP_SN", "AUMP"})
MIRRORED_VARIANTS = frozenset({"UMP", "AUMP"})
SELF_NODE_VARIANTS = frozenset({"BMP_SN", "ABMP_SN"})
TASKS = ("classification", "regression")


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    task: str
    hidden_channels: int
    dropout: float = 0.0
    attention_heads: int = 1
    leaky_slope: float = 0.2
    n_atom_features: int = 6
    n_bond_features: int = 4
    n_global_features: int = 6

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.hidden_channels <= 0:
            raise ValueError("hidden_channels must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.attention_heads < 1:
            raise ValueError("attention_heads must be >= 1")
        if self.attention_heads > 1 and self.variant not in ATTENTION_VARIANTS:
            raise ValueError(
                f"attention_heads > 1 is meaningless for {self.variant}")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "task": self.task,
            "hidden_channels": self.hidden_channels,
            "dropout": self.dropout,
            "attention_heads": self.attention_heads,
            "leaky_slope": self.leaky_slope,
            "n_atom_features": self.n_atom_features,
            "n_bond_features": self.n_bond_features,
            "n_global_features": self.n_global_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class Batch:
    """Graphs stacked into flat arrays with node/edge→graph index vectors."""

    x: np.ndarray                 # (N, Fa)
    edge_index: np.ndarray        # (2, E) into the stacked node rows
    edge_attr: np.ndarray         # (E, Fb)
    u: np.ndarray                 # (B, Fg)
    node_graph: np.ndarray        # (N,)
    edge_graph: np.ndarray        # (E,)
    y: np.ndarray                 # (B,) possibly nan for unlabeled
    n_graphs: int
    degrees: np.ndarray = field(default=None)  # (N,) heavy-atom degree

    def __post_init__(self):
        if self.degrees is None:
            deg = np.zeros(self.x.shape[0], dtype=np.float64)
            if self.edge_index.size:
                deg += np.bincount(self.edge_index[0], minlength=self.x.shape[0])
                deg += np.bincount(self.edge_index[1], minlength=self.x.shape[0])
            self.degrees = deg


def make_batch(graphs: list[FeaturizedGraph]) -> Batch:
    if not graphs:
        raise ValueError("cannot batch zero graphs")
    xs, eis, eas, us, ys = [], [], [], [], []
    node_graph, edge_graph = [], []
    offset = 0
    for gid, g in enumerate(graphs):
        n = g.x.shape[0]
        xs.append(g.x)
        eis.append(g.edge_index + offset)
        eas.append(g.edge_attr)
        us.append(g.u)
        ys.append(np.nan if g.y is None else float(g.y))
        node_graph.append(np.full(n, gid, dtype=np.int64))
        edge_graph.append(np.full(g.edge_index.shape[1], gid, dtype=np.int64))
        offset += n
    return Batch(
        x=np.concatenate(xs, axis=0),
        edge_index=np.concatenate(eis, axis=1),
        edge_attr=np.concatenate(eas, axis=0),
        u=np.stack(us, axis=0),
        node_graph=np.concatenate(node_graph),
        edge_graph=np.concatenate(edge_graph),
        y=np.asarray(ys, dtype=np.float64),
        n_graphs=len(graphs),
    )


class Model:
    """A single message-passing pass with a variant node block and readout."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        H = spec.hidden_channels
        fa, fb, fg = (spec.n_atom_features, spec.n_bond_features,
                      spec.n_global_features)
        K = spec.attention_heads

        for tag, width in (("x", fa), ("e", fb), ("u", fg)):
            self.store.add_param(f"norm/{tag}_gamma", np.ones(width))
            self.store.add_param(f"norm/{tag}_beta", np.zeros(width))
            self.store.add_buffer(f"norm/{tag}_mean", np.zeros(width))
            self.store.add_buffer(f"norm/{tag}_var", np.ones(width))

        self._add_mlp(rng, "message", 2 * fa + fb, H)

        if spec.variant in ATTENTION_VARIANTS:
            for k in range(K):
                self.store.add_param(f"att/h{k}/phi_i_w", glorot(rng, fa, H))
                self.store.add_param(f"att/h{k}/phi_i_b", bias_init(rng, fa, H))
                self.store.add_param(f"att/h{k}/phi_e_w", glorot(rng, fb, H))
                self.store.add_param(f"att/h{k}/phi_e_b", bias_init(rng, fb, H))
                self.store.add_param(f"att/h{k}/phi_j_w", glorot(rng, fa, H))
                self.store.add_param(f"att/h{k}/phi_j_b", bias_init(rng, fa, H))
                self.store.add_param(f"att/h{k}/a", glorot(rng, 3 * H, 1))

        if spec.variant in MIRRORED_VARIANTS:
            self._add_mlp(rng, "node/inner", 2 * fa + H, H)
            self._add_mlp(rng, "node/outer", fa + K * H, H)
        else:
            node_in = {"MP": H, "AMP": K * H, "BMP": 2 * H, "CBMP": 2 * H,
                       "BMP_SN": fa + 2 * H, "ABMP": 2 * K * H,
                       "ABMP_SN": fa + 2 * K * H}[spec.variant]
            self._add_mlp(rng, "node", node_in, H)

        self._add_mlp(rng, "global", H + fg, H)
        self.store.add_param("global/head_w", glorot(rng, H, 1))
        self.store.add_param("global/head_b", bias_init(rng, H, 1))

    def _add_mlp(self, rng, name: str, n_in: int, n_out: int) -> None:
        self.store.add_param(f"{name}/w1", glorot(rng, n_in, n_out))
        self.store.add_param(f"{name}/b1", bias_init(rng, n_in, n_out))
        self.store.add_param(f"{name}/w2", glorot(rng, n_out, n_out))
        self.store.add_param(f"{name}/b2", bias_init(rng, n_out, n_out))

    # -- forward pieces ---------------------------------------------------------

    def _mlp(self, name: str, x: Tensor, training: bool, rng) -> Tensor:
        p = self.store.params
        h = ad.relu(ad.dense(x, p[f"{name}/w1"], p[f"{name}/b1"]))
        if training and self.spec.dropout > 0.0:
            h = ad.dropout(h, self.spec.dropout, rng, training)
        return ad.dense(h, p[f"{name}/w2"], p[f"{name}/b2"])

    def _input_norm(self, tag: str, raw: np.ndarray, training: bool) -> Tensor:
        p, b = self.store.params, self.store.buffers
        return ad.batch_norm(Tensor(raw), p[f"norm/{tag}_gamma"],
                             p[f"norm/{tag}_beta"], b[f"norm/{tag}_mean"],
                             b[f"norm/{tag}_var"], training)

    def _attention(self, head: int, x_i: Tensor, e: Tensor,
                   x_j: Tensor) -> Tensor:
        """Per-edge unnormalized attention score for one head, shape (E, 1)."""
        p = self.store.params
        pre = f"att/h{head}"
        zi = ad.dense(x_i, p[f"{pre}/phi_i_w"], p[f"{pre}/phi_i_b"])
        ze = ad.dense(e, p[f"{pre}/phi_e_w"], p[f"{pre}/phi_e_b"])
        zj = ad.dense(x_j, p[f"{pre}/phi_j_w"], p[f"{pre}/phi_j_b"])
        cat = ad.concat([zi, ze, zj], axis=1)
        return ad.leaky_relu(ad.matmul(cat, p[f"{pre}/a"]),
                             self.spec.leaky_slope)

    def forward(self, batch: Batch, training: bool = False,
                rng: np.random.Generator | None = None) -> dict:
        """Returns {"output": Tensor (B,), "node_embeddings": Tensor (N, H)}.

        "output" is a logit for classification and a raw value for regression.
        """
        spec = self.spec
        if batch.x.shape[1] != spec.n_atom_features:
            raise ValueError(
                f"batch has {batch.x.shape[1]} atom features, model expects "
                f"{spec.n_atom_features}")
        if batch.edge_attr.shape[1] != spec.n_bond_features:
            raise ValueError(
                f"batch has {batch.edge_attr.shape[1]} bond features, model "
                f"expects {spec.n_bond_features}")
        if batch.u.shape[1] != spec.n_global_features:
            raise ValueError(
                f"batch has {batch.u.shape[1]} global features, model expects "
                f"{spec.n_global_features}")
        if training and rng is None:
            raise ValueError("training forward passes need an rng for dropout")

        n_nodes = batch.x.shape[0]
        x = self._input_norm("x", batch.x, training)
        u = self._input_norm("u", batch.u, training)

        if spec.variant in MIRRORED_VARIANTS:
            src = np.concatenate([batch.edge_index[0], batch.edge_index[1]])
            dst = np.concatenate([batch.edge_index[1], batch.edge_index[0]])
            e_raw = np.concatenate([batch.edge_attr, batch.edge_attr], axis=0)
        else:
            src, dst = batch.edge_index[0], batch.edge_index[1]
            e_raw = batch.edge_attr
        e = self._input_norm("e", e_raw, training)

        x_i = ad.gather(x, src)
        x_j = ad.gather(x, dst)
        m = self._mlp("message", ad.concat([x_i, e, x_j], axis=1),
                      training, rng)

        node = self._node_block(batch, x, e, m, x_i, x_j, src, dst,
                                n_nodes, training, rng)

        if spec.variant in MIRRORED_VARIANTS:
            pooled = ad.segment_mean(node, batch.node_graph, batch.n_graphs)
        else:
            pooled = ad.segment_max(node, batch.node_graph, batch.n_graphs)
        g = self._mlp("global", ad.concat([pooled, u], axis=1), training, rng)
        out = ad.dense(g, self.store.params["global/head_w"],
                       self.store.params["global/head_b"])
        return {"output": ad.reshape(out, (batch.n_graphs,)),
                "node_embeddings": node}

    def _node_block(self, batch: Batch, x: Tensor, e: Tensor, m: Tensor,
                    x_i: Tensor, x_j: Tensor, src: np.ndarray,
                    dst: np.ndarray, n_nodes: int, training: bool,
                    rng) -> Tensor:
        spec = self.spec
        K = spec.attention_heads

        if spec.variant in MIRRORED_VARIANTS:
            inner = self._mlp("node/inner", ad.concat([x_i, m, x_j], axis=1),
                              training, rng)
            if spec.variant == "AUMP":
                aggs = []
                for k in range(K):
                    score = self._attention(k, x_i, e, x_j)
                    att = ad.segment_softmax(score, dst, n_nodes)
                    aggs.append(ad.segment_mean(ad.mul(inner, att), dst,
                                                n_nodes))
                agg = aggs[0] if K == 1 else ad.concat(aggs, axis=1)
            else:
                agg = ad.segment_mean(inner, dst, n_nodes)
            return self._mlp("node/outer", ad.concat([x, agg], axis=1),
                             training, rng)

        if spec.variant == "MP":
            return self._mlp("node", ad.segment_max(m, dst, n_nodes),
                             training, rng)

        if spec.variant == "AMP":
            heads = []
            for k in range(K):
                score = self._attention(k, x_i, e, x_j)
                att = ad.segment_softmax(score, dst, n_nodes)
                heads.append(ad.segment_max(ad.mul(m, att), dst, n_nodes))
            agg = heads[0] if K == 1 else ad.concat(heads, axis=1)
            return self._mlp("node", agg, training, rng)

        if spec.variant in ("BMP", "BMP_SN", "CBMP"):
            msg = m
            if spec.variant == "CBMP":
                scale = 1.0 / (batch.degrees[src] * batch.degrees[dst])
                msg = ad.mul(m, Tensor(scale[:, None]))
            fwd = ad.segment_max(msg, dst, n_nodes)
            bwd = ad.segment_max(msg, src, n_nodes)
            parts = [fwd, bwd]
            if spec.variant == "BMP_SN":
                parts = [x] + parts
            return self._mlp("node", ad.concat(parts, axis=1), training, rng)

        # ABMP / ABMP_SN: per-direction softmax of one shared score per head
        fwd_heads, bwd_heads = [], []
        for k in range(K):
            score = self._attention(k, x_i, e, x_j)
            att_f = ad.segment_softmax(score, dst, n_nodes)
            att_b = ad.segment_softmax(score, src, n_nodes)
            fwd_heads.append(ad.segment_max(ad.mul(m, att_f), dst, n_nodes))
            bwd_heads.append(ad.segment_max(ad.mul(m, att_b), src, n_nodes))
        parts = fwd_heads + bwd_heads
        if spec.variant == "ABMP_SN":
            parts = [x] + parts
        return self._mlp("node", ad.concat(parts, axis=1), training, rng)

    # -- inference helpers ------------------------------------------------------

    def predict(self, batch: Batch) -> np.ndarray:
        """Probabilities (classification) or raw values (regression)."""
        out = self.forward(batch, training=False)["output"].data
        if self.spec.task == "classification":
            return 1.0 / (1.0 + np.exp(-np.clip(out, -500, 500)))
        return out

    def node_relevance(self, node_embeddings: np.ndarray,
                       node_graph: np.ndarray, n_graphs: int) -> np.ndarray:
        """Per-atom scores in [0,1]: the global head projects each pre-pooling
        embedding to one channel, sigmoid squashes it, and scores are min-max
        rescaled per molecule (constant molecules map to 0.5)."""
        w = self.store.params["global/head_w"].data
        b = self.store.params["global/head_b"].data
        raw = 1.0 / (1.0 + np.exp(-(node_embeddings @ w + b)))[:, 0]
        scores = np.empty_like(raw)
        for gid in range(n_graphs):
            idx = node_graph == gid
            lo, hi = raw[idx].min(), raw[idx].max()
            if hi - lo < 1e-12:
                scores[idx] = 0.5
            else:
                scores[idx] = (raw[idx] - lo) / (hi - lo)
        return scores

    def count_parameters(self) -> dict[str, int]:
        """Sizes by block; attention weights count toward the node block."""
        groups = {"message": 0, "node": 0, "global": 0, "input_norm": 0}
        for name, t in self.store.params.items():
            if name.startswith("message/"):
                groups["message"] += t.data.size
            elif name.startswith(("node/", "att/")):
                groups["node"] += t.data.size
            elif name.startswith("global/"):
                groups["global"] += t.data.size
            else:
                groups["input_norm"] += t.data.size
        groups["total"] = sum(groups.values())
        return groups


def copy_common_parameters(source: Model, target: Model) -> None:
    """Copy every parameter/buffer whose name and shape match."""
    for name, t in source.store.params.items():
        other = target.store.params.get(name)
        if other is not None and other.data.shape == t.data.shape:
            other.data = t.data.copy()
    for name, buf in source.store.buffers.items():
        other = target.store.buffers.get(name)
        if other is not None and other.shape == buf.shape:
            other[...] = buf


def save_checkpoint(path, model: Model, manifest_hash: str,
                    extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "checkpoint",
        "model_spec": model.spec.to_dict(),
        "feature_manifest_hash": manifest_hash,
    }
    if extra_meta:
        meta.update(extra_meta)
    write_container(path, meta, model.store.state_arrays())


def load_checkpoint(path) -> tuple[Model, dict]:
    meta, arrays = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise ValueError(f"{path}: not a checkpoint container")
    model = Model(ModelSpec.from_dict(meta["model_spec"]))
    model.store.load_state_arrays(arrays)
    return model, meta
