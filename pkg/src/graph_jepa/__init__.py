"""Graph-JEPA: self-supervised graph representation learning via latent
patch prediction on the 2D unit hyperbola."""

from .graphs import (
    Graph,
    GraphDataset,
    GraphError,
    ParseError,
    SchemaError,
    generate_csl,
    graph_stats,
    load_dataset,
    random_graph,
    random_graph_dataset,
    wl1_color_histogram,
)
from .partition import (
    PatchSet,
    Subgraph,
    edge_cut,
    expand_one_hop,
    partition_multilevel,
    partition_random,
)
from .posenc import PatchPE, Rwse, patch_pe_max, patch_pe_relative, rwse_nodes
from .models import JepaModel, ModelConfig, load_checkpoint, save_checkpoint
from .training import (
    ContextTargetBatch,
    HyperbolicTarget,
    TrainConfig,
    TrainingDiverged,
    alt_loss_euclidean,
    alt_loss_poincare,
    collapse_experiment,
    collapse_metrics,
    hyperbolic_target,
    jepa_loss,
    ols_solve,
    sample_batch,
    train,
)
from .probe import ProbeReport, cross_validate, embed_dataset, logreg_fit, ridge_fit

__version__ = "0.1.0"
