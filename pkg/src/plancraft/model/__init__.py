from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import GENERATORS, HEAD_KINDS, MINI_CONFIG, ModelConfig
from .losses import label_deltas, planner_loss, two_hot_targets
from .network import (DTYPE, GRUCell, NumericalFault, PlannerNetwork,
                      cumsum_points)
from .planner import ModelPlanner, infer, scene_batch
from .train import (TrainConfig, TrainResult, TrainingDiverged, evaluate_loss,
                    evaluate_point_error, make_batch, prepare_arrays, train,
                    validation_loss_of)

__all__ = [
    "CheckpointError", "DTYPE", "GENERATORS", "GRUCell", "HEAD_KINDS",
    "MINI_CONFIG", "ModelConfig", "ModelPlanner", "NumericalFault",
    "PlannerNetwork", "TrainConfig", "TrainResult", "TrainingDiverged",
    "cumsum_points", "evaluate_loss", "evaluate_point_error", "infer", "label_deltas",
    "load_checkpoint", "make_batch", "planner_loss", "prepare_arrays",
    "save_checkpoint", "scene_batch", "train", "two_hot_targets",
    "validation_loss_of",
]
