"""Graph-convolutional multi-agent trajectory prediction on a small numpy
autodiff engine."""
from .errors import (CapacityError, DataError, DimensionError, DivergenceError, GripError,
                     ParameterError, UsageError)
from .metrics import CLASS_WEIGHTS, MetricsReport, metrics, weighted_sum
from .model import Batch, GripModel, ModelConfig, PredictionResult, collate
from .preprocess import ModelInput, build_graphs, make_input, normalize_adjacency, to_velocity
from .scenes import (AgentRecord, AgentType, SceneClip, SynthSpec, downsample, parse_apolloscape,
                     parse_csv, read_clips, segment_clips, split_train_val, synth_scenes, write_clips)
from .tensor import Tensor, no_grad
from .training import LossReport, TrainConfig, augment_rotate, cv_baseline, evaluate, loss, train

__version__ = "0.1.0"

__all__ = [
    "AgentRecord", "AgentType", "Batch", "CLASS_WEIGHTS", "CapacityError", "DataError",
    "DimensionError", "DivergenceError", "GripError", "GripModel", "LossReport", "MetricsReport",
    "ModelConfig", "ModelInput", "ParameterError", "PredictionResult", "SceneClip", "SynthSpec",
    "Tensor", "TrainConfig", "UsageError", "augment_rotate", "build_graphs", "collate", "cv_baseline",
    "downsample", "evaluate", "loss", "make_input", "metrics", "no_grad", "normalize_adjacency",
    "parse_apolloscape", "parse_csv", "read_clips", "segment_clips", "split_train_val",
    "synth_scenes", "to_velocity", "train", "weighted_sum", "write_clips",
]
