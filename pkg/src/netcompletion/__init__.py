"""Network completion: infer missing nodes and edges of a partially observed graph."""
from .completion import CompletionResult, EmConfig, deepnc_em, deepnc_l
from .graph import Graph, NodeOrdering, PartialObservation, read_edge_list, write_edge_list
from .grnn import ModelParams, TrainConfig, load_model, save_model, train
from .metrics import approximate_ged, exact_ged_small, normalized_ged

__version__ = "0.1.0"

__all__ = [
    "CompletionResult", "EmConfig", "Graph", "ModelParams", "NodeOrdering",
    "PartialObservation", "TrainConfig", "approximate_ged", "deepnc_em", "deepnc_l",
    "exact_ged_small", "load_model", "normalized_ged", "read_edge_list", "save_model",
    "train", "write_edge_list",
]
