"""Context/target sampling, the unit-hyperbola objective, the training loop,
and the least-squares collapse analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, smooth_l1, zero_grads
from .models import JepaModel, ModelConfig
from .partition import PatchSet, expand_one_hop, partition_multilevel, partition_random
from .posenc import PatchPE, patch_pe_max, patch_pe_relative, rwse_nodes


class TrainingDiverged(RuntimeError):
    def __init__(self, snapshot):
        super().__init__(f"loss diverged at {snapshot}")
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    batch_graphs: int = 1
    p: int = 4                    # patches per graph
    m: int = 2                    # targets per step
    k: int = 15                   # random-walk order
    d: int = 128
    B: int = 4                    # encoder blocks
    L: int = 2                    # GNN layers
    beta: float = 1.0             # smooth-L1 transition point
    ema_tau_start: float = 0.996
    ema_tau_end: float = 1.0
    loss_kind: str = "hyperbola"  # hyperbola | euclidean | poincare
    partition_method: str = "metis"  # metis | random
    pe_kind: str = "node_max"     # node_max | relative_patch
    seed: int = 0

    def validate(self):
        if not (1 <= self.m <= self.p - 1):
            raise ValueError(f"need 1 <= m <= p-1, got m={self.m}, p={self.p}")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        for tau in (self.ema_tau_start, self.ema_tau_end):
            if not (0.0 <= tau <= 1.0):
                raise ValueError(f"tau must be in [0, 1], got {tau}")
        if self.loss_kind not in ("hyperbola", "euclidean", "poincare"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.partition_method not in ("metis", "random"):
            raise ValueError(f"unknown partition_method {self.partition_method!r}")
        if self.pe_kind not in ("node_max", "relative_patch"):
            raise ValueError(f"unknown pe_kind {self.pe_kind!r}")


@dataclass(frozen=True)
class ContextTargetBatch:
    context_idx: int
    target_idxs: tuple
    graph_idx: int = 0

    def __post_init__(self):
        if self.context_idx in self.target_idxs:
            raise ValueError("context cannot be a target")
        if len(set(self.target_idxs)) != len(self.target_idxs):
            raise ValueError("targets must be distinct")


@dataclass(frozen=True)
class HyperbolicTarget:
    alpha: np.ndarray  # (m,)
    psi: np.ndarray    # (m, 2) rows (cosh a, sinh a)


def sample_batch(ps, m, seed, graph_idx=0):
    """One uniform context patch and m distinct uniform targets from the rest."""
    p = ps.num_patches
    if p <= m:
        raise ValueError(f"need p > m, got p={p}, m={m}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    context = int(rng.integers(0, p))
    rest = [i for i in range(p) if i != context]
    targets = rng.choice(len(rest), size=m, replace=False)
    return ContextTargetBatch(context, tuple(rest[i] for i in sorted(targets)), graph_idx)


def hyperbolic_target(z_y):
    """Detached unit-hyperbola coordinates of target embeddings.

    alpha_l is the mean of row l over the d embedding dimensions;
    psi_l = (cosh alpha_l, sinh alpha_l).
    """
    data = z_y.data if isinstance(z_y, Tensor) else np.asarray(z_y, dtype=np.float64)
    alpha = data.mean(axis=1)
    psi = np.stack([np.cosh(alpha), np.sinh(alpha)], axis=1)
    return HyperbolicTarget(alpha, psi)


def hyperbola_coords(z_y):
    """Differentiable (cosh, sinh) coordinates; carries gradients iff z_y does."""
    z_y = ad.as_tensor(z_y)
    alpha = ad.tmean(z_y, axis=1, keepdims=True)
    return ad.concat([ad.cosh(alpha), ad.sinh(alpha)], axis=1)


def jepa_loss(psi_hat, target, beta=1.0):
    """Smooth-L1 between predicted and reference hyperbola coordinates,
    averaged over targets and both coordinates."""
    ref = target.psi if isinstance(target, HyperbolicTarget) else target
    return smooth_l1(psi_hat, ref, beta)


def alt_loss_euclidean(z_pred, z_y, beta=1.0):
    """Latent regression baseline: smooth-L1 directly between d-dim vectors."""
    return smooth_l1(z_pred, z_y, beta)


_BALL_LIMIT = 1.0 - 1e-5


def _to_ball(x, instability):
    norm = ad.sqrt(ad.tsum(x * x, axis=1, keepdims=True) + 1e-15)
    mapped = x / (1.0 + norm)
    mnorm = ad.sqrt(ad.tsum(mapped * mapped, axis=1, keepdims=True) + 1e-15)
    if instability is not None:
        instability.count += int(np.sum(mnorm.data >= _BALL_LIMIT))
    scale = ad.clamp_max(mnorm, _BALL_LIMIT) / mnorm
    return mapped * scale


@dataclass
class InstabilityCounter:
    count: int = 0


def alt_loss_poincare(u, v, instability=None):
    """Mean Poincare-ball distance after mapping rows into the open unit ball
    via x / (1 + ||x||); near-boundary rows are clamped and counted."""
    u = _to_ball(ad.as_tensor(u), instability)
    v = _to_ball(ad.as_tensor(v), instability)
    diff = u - v
    d2 = ad.tsum(diff * diff, axis=1, keepdims=True)
    un = ad.tsum(u * u, axis=1, keepdims=True)
    vn = ad.tsum(v * v, axis=1, keepdims=True)
    arg = 1.0 + (2.0 * d2) / ((1.0 - un) * (1.0 - vn)) + 1e-12
    return ad.tmean(ad.acosh(arg))


def _graph_seed(seed, graph_idx):
    return (seed * 1_000_003 + graph_idx * 7919 + 17) % (2**63)


def prepare_graph(g, cfg, graph_idx):
    """Partition, expand, and attach positional encodings for one graph.

    Patch count is capped at the graph size so small graphs stay usable.
    """
    p = max(2, min(cfg.p, g.num_nodes))
    seed = _graph_seed(cfg.seed, graph_idx)
    if cfg.partition_method == "random":
        ps = partition_random(g, p, seed)
    else:
        ps = partition_multilevel(g, p, seed)
    ps = expand_one_hop(g, ps)
    if cfg.pe_kind == "relative_patch":
        pe = patch_pe_relative(g, ps, cfg.k)
    else:
        pe = patch_pe_max(rwse_nodes(g, cfg.k), ps)
    return ps, pe


def _patch_subset(ps, idxs):
    return PatchSet(tuple(ps.patches[i] for i in idxs), ps.assignment, ps.expanded)


def _step_loss(model, ps, pe, batch, cfg, collapse_mode):
    """Forward pass for one graph: context through the online branch, targets
    through the EMA branch (or the shared online branch in ablation mode)."""
    use_ema = collapse_mode == "ema"
    ctx = _patch_subset(ps, [batch.context_idx])
    ctx_pe = PatchPE(pe.per_patch[[batch.context_idx]], pe.kind)
    h_x = model.embed_patches(ctx, ctx_pe, use_ema=False)
    z_x = model.encode_context(h_x)

    tgt = _patch_subset(ps, list(batch.target_idxs))
    tgt_pe = PatchPE(pe.per_patch[list(batch.target_idxs)], pe.kind)
    h_y = model.embed_patches(tgt, tgt_pe, use_ema=use_ema)
    z_y = model.encode_targets(h_y, use_ema=use_ema)

    pred = model.predict_coords(z_x, pe.per_patch[list(batch.target_idxs)])
    if cfg.loss_kind == "hyperbola":
        psi = hyperbola_coords(z_y)
        loss = jepa_loss(pred, psi, cfg.beta)
        alpha = z_y.data.mean(axis=1)
    elif cfg.loss_kind == "euclidean":
        loss = alt_loss_euclidean(pred, z_y, cfg.beta)
        alpha = z_y.data.mean(axis=1)
    else:
        loss = alt_loss_poincare(pred, z_y)
        alpha = z_y.data.mean(axis=1)
    return loss, z_y.data, alpha


def predictor_out_width(cfg):
    return 2 if cfg.loss_kind == "hyperbola" else cfg.d


def build_model(ds, cfg):
    g0 = ds.graphs[0]
    return JepaModel(
        ModelConfig(
            d=cfg.d,
            k=cfg.k,
            blocks=cfg.B,
            gnn_layers=cfg.L,
            node_feat_dim=g0.node_features.shape[1],
            edge_feat_dim=g0.edge_features.shape[1],
            predictor_out=predictor_out_width(cfg),
            seed=cfg.seed,
        )
    )


def train(ds, cfg, collapse_mode="ema", on_epoch=None):
    """Pretrain on a dataset; returns (model, per-epoch log).

    collapse_mode "ema" is the standard recipe (EMA target branch under
    stop-gradient); "shared" co-trains the target branch through the loss,
    the ablation expected to collapse.
    """
    cfg.validate()
    if collapse_mode not in ("ema", "shared"):
        raise ValueError(f"unknown collapse_mode {collapse_mode!r}")
    model = build_model(ds, cfg)
    adam = AdamState(model.params, lr=cfg.lr)
    prep = [prepare_graph(g, cfg, gi) for gi, g in enumerate(ds.graphs)]

    num_graphs = len(ds.graphs)
    batches_per_epoch = math.ceil(num_graphs / cfg.batch_graphs)
    total_updates = cfg.epochs * batches_per_epoch
    rng = np.random.default_rng(cfg.seed + 1)
    log = []
    update = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(num_graphs)
        losses, alphas, target_rows = [], [], []
        for start in range(0, num_graphs, cfg.batch_graphs):
            idxs = order[start : start + cfg.batch_graphs]
            zero_grads(model.params)
            step_losses = []
            for gi in idxs:
                gi = int(gi)
                ps, pe = prep[gi]
                m_eff = min(cfg.m, ps.num_patches - 1)
                batch = sample_batch(ps, m_eff, rng, graph_idx=gi)
                loss, z_y_data, alpha = _step_loss(model, ps, pe, batch, cfg, collapse_mode)
                step_losses.append(loss)
                target_rows.append(z_y_data)
                alphas.extend(alpha.tolist())
            total = step_losses[0]
            for extra in step_losses[1:]:
                total = total + extra
            total = total * (1.0 / len(step_losses))
            if np.isnan(total.data):
                raise TrainingDiverged(
                    {"epoch": epoch, "update": update, "loss": float(total.data)}
                )
            total.backward()
            adam_step(model.params, adam)
            if collapse_mode == "ema":
                frac = update / (total_updates - 1) if total_updates > 1 else 0.0
                tau = cfg.ema_tau_start + (cfg.ema_tau_end - cfg.ema_tau_start) * frac
                model.ema_update(tau)
            update += 1
            losses.append(float(total.data))
        stacked = np.concatenate(target_rows, axis=0)
        log.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)),
                "target_std": float(stacked.std(axis=0).mean()),
                "psi_spread": float(np.std(alphas)),
            }
        )
        if on_epoch is not None:
            on_epoch(epoch, model)
    return model, log


def effective_rank(x):
    """exp(entropy of normalized singular values); 1 for rank-one matrices."""
    s = np.linalg.svd(x, compute_uv=False)
    total = s.sum()
    if total <= 0:
        return 1.0
    p = s / total
    p = p[p > 1e-15]
    return float(np.exp(-np.sum(p * np.log(p))))


def collapse_metrics(model, ds, cfg, use_ema=True):
    """Spread diagnostics of the frozen embeddings: per-dimension std of the
    pooled graph embeddings, std of the hyperbolic angle over all patches,
    and the effective rank of the embedding matrix."""
    from .probe import embed_dataset, graph_patch_encodings

    emb = embed_dataset(ds, model, cfg, use_ema=use_ema)
    alphas = []
    for gi, g in enumerate(ds.graphs):
        tokens = graph_patch_encodings(g, model, cfg, gi, use_ema=use_ema)
        alphas.extend(tokens.mean(axis=1).tolist())
    return {
        "embedding_std": float(emb.std(axis=0).mean()),
        "psi_std": float(np.std(alphas)),
        "effective_rank": effective_rank(emb),
    }


@dataclass(frozen=True)
class OlsResult:
    weights: np.ndarray
    residual: float
    regularized: bool


def ols_solve(x, y):
    """Multivariate least squares W = (X^T X)^-1 X^T Y with the residual of
    the orthogonal projection of Y off Col(X). Singular normal equations fall
    back to a tiny ridge and are flagged."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xtx = x.T @ x
    regularized = False
    try:
        if np.linalg.cond(xtx) > 1e12:
            raise np.linalg.LinAlgError
        w = np.linalg.solve(xtx, x.T @ y)
    except np.linalg.LinAlgError:
        regularized = True
        w = np.linalg.solve(xtx + 1e-8 * np.eye(xtx.shape[0]), x.T @ y)
    residual = float(np.linalg.norm(x @ w - y) ** 2)
    return OlsResult(w, residual, regularized)


def collapse_experiment(ds, cfg, seeds=(0, 1, 2, 3, 4)):
    """Short A/B training: EMA + stop-gradient vs a co-trained target branch.

    Returns per-seed trajectories of collapse metrics for both runs.
    """
    report = {"ema": [], "shared": []}
    for mode in ("ema", "shared"):
        for seed in seeds:
            run_cfg = TrainConfig(**{**cfg.__dict__, "seed": seed})
            trajectory = []

            def record(epoch, model, _cfg=run_cfg, _traj=trajectory, _mode=mode):
                _traj.append(
                    collapse_metrics(model, ds, _cfg, use_ema=(_mode == "ema"))
                )

            train(ds, run_cfg, collapse_mode=mode, on_epoch=record)
            report[mode].append({"seed": seed, "trajectory": trajectory})
    return report
