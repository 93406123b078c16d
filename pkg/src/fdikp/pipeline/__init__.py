from .ablate import GRIDS, ablate
from .evaluate import MetricsReport, evaluate, image_metrics
from .model import deblur, fdikp_forward, init_model, stage_inputs
from .train import Checkpoint, TrainingError, train

__all__ = [
    "GRIDS", "ablate", "MetricsReport", "evaluate", "image_metrics", "deblur", "fdikp_forward",
    "init_model", "stage_inputs", "Checkpoint", "TrainingError", "train",
]
