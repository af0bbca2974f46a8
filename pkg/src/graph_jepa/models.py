"""Networks: subgraph GNN, context/target encoder, coordinate predictor, EMA twin.

One trainable encoder stack (pre-norm blocks with single-head self-attention)
processes the context; an EMA copy of the same stack processes targets. On a
single context token the attention sublayer degenerates to a per-token map.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class ModelConfig:
    d: int = 128              # embedding width
    k: int = 15               # random-walk encoding order
    blocks: int = 4           # encoder depth
    gnn_layers: int = 2
    node_feat_dim: int = 1
    edge_feat_dim: int = 1
    predictor_out: int = 2    # 2 for hyperbola coords, d for latent regression
    seed: int = 0


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class JepaModel:
    """All learnable parameter groups plus the non-trainable EMA copies."""

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, k = config.d, config.k
        p = {}

        def linear(name, fan_in, fan_out):
            p[f"{name}.W"] = Tensor(_glorot(rng, fan_in, fan_out), requires_grad=True)
            p[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)

        linear("gnn.node_in", config.node_feat_dim, d)
        linear("gnn.edge_in", config.edge_feat_dim, d)
        for i in range(config.gnn_layers):
            linear(f"gnn.layer{i}.mlp1", d, d)
            linear(f"gnn.layer{i}.mlp2", d, d)
        linear("pe_proj", k, d)
        for i in range(config.blocks):
            for part in ("q", "k", "v", "o"):
                linear(f"encoder.block{i}.attn.{part}", d, d)
            linear(f"encoder.block{i}.ffn.1", d, 2 * d)
            linear(f"encoder.block{i}.ffn.2", 2 * d, d)
        hidden = max(d // 2, 1)
        linear("predictor.1", d, hidden)
        linear("predictor.2", hidden, config.predictor_out)

        self.params = p
        # EMA twin of the full target branch, cloned at step 0
        self.ema = {
            name: t.data.copy() for name, t in p.items() if self._in_ema_group(name)
        }

    @staticmethod
    def _in_ema_group(name):
        return name.startswith("gnn.") or name.startswith("encoder.")

    def weights(self, use_ema=False):
        """Name->Tensor view; EMA weights come back gradient-free."""
        if not use_ema:
            return self.params
        out = {}
        for name, t in self.params.items():
            if name in self.ema:
                out[name] = Tensor(self.ema[name])
            else:
                out[name] = t
        return out

    def ema_update(self, tau):
        """ema <- tau * ema + (1 - tau) * online, elementwise."""
        if not (0.0 <= tau <= 1.0):
            raise ValueError(f"tau must be in [0, 1], got {tau}")
        for name in self.ema:
            self.ema[name] = tau * self.ema[name] + (1.0 - tau) * self.params[name].data

    def param_count(self, prefix=""):
        return sum(t.data.size for n, t in self.params.items() if n.startswith(prefix))

    # forward passes --------------------------------------------------------

    def gine_encode(self, node_feats, edge_pairs, edge_feats, weights=None):
        """Message passing over one (possibly edgeless) patch or batch of
        patches laid out as a single disjoint node set.

        node update: MLP((1 + eps) * x_v + sum_u relu(x_u + proj(e_uv)))
        """
        w = weights if weights is not None else self.params
        nf = ad.as_tensor(node_feats)
        if nf.shape[1] != self.config.node_feat_dim:
            raise ad.DimensionError(
                f"node feature width {nf.shape[1]} != {self.config.node_feat_dim}"
            )
        n = nf.shape[0]
        x = nf @ w["gnn.node_in.W"] + w["gnn.node_in.b"]
        has_edges = len(edge_pairs) > 0
        if has_edges:
            ef = ad.as_tensor(edge_feats)
            if ef.shape[1] != self.config.edge_feat_dim:
                raise ad.DimensionError(
                    f"edge feature width {ef.shape[1]} != {self.config.edge_feat_dim}"
                )
            e = ef @ w["gnn.edge_in.W"] + w["gnn.edge_in.b"]
            # both directions of every undirected edge
            src = np.array([u for u, v in edge_pairs] + [v for u, v in edge_pairs])
            dst = np.array([v for u, v in edge_pairs] + [u for u, v in edge_pairs])
            e2 = ad.concat([e, e], axis=0)
        for i in range(self.config.gnn_layers):
            if has_edges:
                msg = ad.relu(ad.index_select(x, src) + e2)
                agg = ad.scatter_add(msg, dst, n)
                h = x + agg  # eps = 0
            else:
                h = x
            hidden = ad.relu(h @ w[f"gnn.layer{i}.mlp1.W"] + w[f"gnn.layer{i}.mlp1.b"])
            x = hidden @ w[f"gnn.layer{i}.mlp2.W"] + w[f"gnn.layer{i}.mlp2.b"]
        return x

    def embed_patches(self, ps, pe, use_ema=False):
        """Mean-pooled GNN embedding per patch plus projected positional
        encoding: one row per patch."""
        w = self.weights(use_ema)
        node_feats, edge_pairs, edge_feats, seg = _flatten_patches(ps)
        x = self.gine_encode(node_feats, edge_pairs, edge_feats, weights=w)
        p = ps.num_patches
        sums = ad.scatter_add(x, seg, p)
        counts = np.bincount(seg, minlength=p).astype(np.float64)[:, None]
        pooled = sums * (1.0 / counts)
        pos = ad.as_tensor(pe.per_patch) @ w["pe_proj.W"] + w["pe_proj.b"]
        h = pooled + pos
        return ad.stop_gradient(h) if use_ema else h

    def encode_tokens(self, h, use_ema=False):
        """Pre-norm blocks: x += SelfAttn(LN(x)); x += FFN(LN(x))."""
        w = self.weights(use_ema)
        h = ad.as_tensor(h)
        if use_ema:
            h = ad.stop_gradient(h)
        d = self.config.d
        scale = 1.0 / np.sqrt(d)
        for i in range(self.config.blocks):
            pre = f"encoder.block{i}"
            a = ad.layer_norm(h)
            q = a @ w[f"{pre}.attn.q.W"] + w[f"{pre}.attn.q.b"]
            k = a @ w[f"{pre}.attn.k.W"] + w[f"{pre}.attn.k.b"]
            v = a @ w[f"{pre}.attn.v.W"] + w[f"{pre}.attn.v.b"]
            scores = (q @ _transpose(k)) * scale
            attn = ad.softmax(scores, axis=-1)
            out = (attn @ v) @ w[f"{pre}.attn.o.W"] + w[f"{pre}.attn.o.b"]
            h = h + out
            f = ad.layer_norm(h)
            ff = ad.gelu(f @ w[f"{pre}.ffn.1.W"] + w[f"{pre}.ffn.1.b"])
            h = h + ff @ w[f"{pre}.ffn.2.W"] + w[f"{pre}.ffn.2.b"]
        return h

    def encode_context(self, h_x):
        """Online encoding of the single context token (1 x d)."""
        return self.encode_tokens(h_x, use_ema=False)

    def encode_targets(self, h_y, use_ema=True):
        """Joint encoding of the m target tokens; EMA weights by default."""
        return self.encode_tokens(h_y, use_ema=use_ema)

    def predict_coords(self, z_x, patch_pe_rows):
        """z_x (1 x d) + projected target positional rows -> predictor MLP."""
        w = self.params
        pos = ad.as_tensor(patch_pe_rows) @ w["pe_proj.W"] + w["pe_proj.b"]
        t = pos + z_x
        hidden = ad.gelu(t @ w["predictor.1.W"] + w["predictor.1.b"])
        return hidden @ w["predictor.2.W"] + w["predictor.2.b"]

    # checkpointing ----------------------------------------------------------

    def save(self, path):
        save_checkpoint(path, self)

    @staticmethod
    def load(path):
        return load_checkpoint(path)


def _transpose(t):
    out_data = t.data.T

    def backward(g):
        if t.requires_grad:
            t._accumulate(g.T)

    return ad._make(out_data, (t,), backward)


def _flatten_patches(ps):
    """Lay all patch-local graphs out as one disjoint union with segment ids."""
    node_feats, edge_pairs, edge_feats, seg = [], [], [], []
    offset = 0
    for pi, patch in enumerate(ps.patches):
        lg = patch.local_graph
        node_feats.append(lg.node_features)
        seg.extend([pi] * lg.num_nodes)
        for u, v in lg.edges:
            edge_pairs.append((u + offset, v + offset))
        if lg.num_edges:
            edge_feats.append(lg.edge_features)
        offset += lg.num_nodes
    nf = np.concatenate(node_feats, axis=0)
    ef = (
        np.concatenate(edge_feats, axis=0)
        if edge_feats
        else np.zeros((0, ps.patches[0].local_graph.edge_features.shape[1]))
    )
    return nf, edge_pairs, ef, np.array(seg, dtype=np.int64)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, model):
    """Named-tensor archive: length-prefixed JSON header, then raw
    little-endian row-major f64 buffers in header order. EMA tensors are
    stored under the "ema/" prefix."""
    entries = []
    buffers = []
    for name in sorted(model.params):
        arr = model.params[name].data
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f64"})
        buffers.append(arr.astype("<f8").tobytes(order="C"))
    for name in sorted(model.ema):
        arr = model.ema[name]
        entries.append({"name": f"ema/{name}", "shape": list(arr.shape), "dtype": "f64"})
        buffers.append(arr.astype("<f8").tobytes(order="C"))
    header = json.dumps(
        {
            "version": CHECKPOINT_VERSION,
            "config": asdict(model.config),
            "tensors": entries,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for buf in buffers:
            fh.write(buf)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        model = JepaModel(ModelConfig(**header["config"]))
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape).copy()
            name = entry["name"]
            if name.startswith("ema/"):
                model.ema[name[len("ema/"):]] = arr
            else:
                model.params[name] = Tensor(arr, requires_grad=True)
    return model
