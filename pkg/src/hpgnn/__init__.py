"""Higher-order Personalized PageRank operators and the HPGNN node classifier."""

from .cliques import (
    HigherOrderAdjacency,
    SimplicialComplex,
    complex_stats,
    enumerate_cliques,
    higher_adjacency,
    load_complex,
    save_complex,
)
from .estimators import HiPPRTransformer, HPGNNClassifier
from .graph import Graph, load_bundle, load_graph, node_homophily, normalize, save_graph
from .harness import ExperimentConfig, RunReport, dataset_sanity, make_splits, run_experiment
from .model import HpgnnModel, TrainConfig, embed, forward, init_model, loss_and_grads, predict, train
from .operators import build_operators
from .ppr import (
    PprEstimate,
    PprMatrix,
    PushParams,
    exact_ppr_matrix,
    push_ppr_matrix,
    push_ppr_vector,
    symmetrize,
)

__version__ = "0.1.0"

__all__ = [
    "build_operators",
    "complex_stats",
    "dataset_sanity",
    "embed",
    "enumerate_cliques",
    "exact_ppr_matrix",
    "ExperimentConfig",
    "forward",
    "Graph",
    "higher_adjacency",
    "HigherOrderAdjacency",
    "HiPPRTransformer",
    "HPGNNClassifier",
    "HpgnnModel",
    "init_model",
    "load_bundle",
    "load_complex",
    "load_graph",
    "loss_and_grads",
    "make_splits",
    "node_homophily",
    "normalize",
    "PprEstimate",
    "PprMatrix",
    "predict",
    "push_ppr_matrix",
    "push_ppr_vector",
    "PushParams",
    "run_experiment",
    "RunReport",
    "save_complex",
    "save_graph",
    "SimplicialComplex",
    "symmetrize",
    "train",
    "TrainConfig",
]
