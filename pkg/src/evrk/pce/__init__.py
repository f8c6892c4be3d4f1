"""Power consumption estimation CNN: layers, network, training and model files."""

from .network import CnnArchitecture, CnnModel, forward, forward_batch, init_model, predict_arrays
from .optim import AdamState, DivergenceError, adam_step
from .training import TrainResult, train

__all__ = [
    "AdamState", "CnnArchitecture", "CnnModel", "DivergenceError", "TrainResult", "adam_step", "forward",
    "forward_batch", "init_model", "predict_arrays", "train",
]
