"""Graph-level anomaly detection with one-class graph transformation learning."""

from .data import Dataset, Graph, load_fixture, load_tu_dataset, make_batch
from .errors import ConfigError, DataError, GraphADError, NumericalAbort
from .gnn import FeatureExtractor, GinConfig
from .losses import gtl_loss, occ_loss
from .models import GTLModel, GTPModel, OCGINModel, OCGTLModel, build_model, score_graphs
from .ocpool import OcPool, OcPoolConfig
from .training import TrainConfig, train

__all__ = [
    "ConfigError", "DataError", "Dataset", "FeatureExtractor", "GTLModel", "GTPModel", "GinConfig", "Graph",
    "GraphADError", "NumericalAbort", "OCGINModel", "OCGTLModel", "OcPool", "OcPoolConfig", "TrainConfig",
    "build_model", "gtl_loss", "load_fixture", "load_tu_dataset", "make_batch", "occ_loss", "score_graphs", "train",
]
