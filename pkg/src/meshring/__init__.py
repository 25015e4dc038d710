"""Ring-expansion convolutional networks for per-vertex mesh classification."""
from .architectures import Network, NetworkSpec, LayerSpec, custom, instantiate, preset, required_rings
from .dataset import Dataset, MeshSample, load_split
from .estimator import MeshFeatureExtractor, MeshSegmenter
from .expansion import ExpandedTensor, expand, expand_slice
from .features import FeatureMatrix, FeatureSelection, assemble_features, curvatures, mean_neighbor_distance
from .mesh import Mesh, RingAdjacency, labels_from_colors, ring_adjacency, ring_neighbors
from .nn import SgdSchedule, sgd_step, weighted_ce_loss
from .objio import parse_obj, write_obj
from .synth import SynthConfig, generate, generate_dataset
from .training import MetricsReport, evaluate, export_colored_mesh, predict, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "ExpandedTensor", "FeatureMatrix", "FeatureSelection", "LayerSpec", "Mesh",
    "MeshFeatureExtractor", "MeshSample", "MeshSegmenter", "MetricsReport", "Network",
    "NetworkSpec", "RingAdjacency", "SgdSchedule", "SynthConfig", "assemble_features",
    "curvatures", "custom", "evaluate", "expand", "expand_slice", "export_colored_mesh",
    "generate", "generate_dataset", "instantiate", "labels_from_colors", "load_split",
    "mean_neighbor_distance", "parse_obj", "predict", "preset", "required_rings",
    "ring_adjacency", "ring_neighbors", "sgd_step", "train", "weighted_ce_loss", "write_obj",
]
