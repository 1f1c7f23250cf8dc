from .functional import ShapeError
from .layers import (
    LSTM,
    BatchNorm1d,
    Branches,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool1d,
    Param,
    ReLU,
    Sequential,
    Softmax,
    ToSequence,
)
from .optim import SGDM, SgdmState, sgdm_step

__all__ = [
    "LSTM", "BatchNorm1d", "Branches", "Conv1d", "Dense", "Dropout", "Flatten", "Layer",
    "MaxPool1d", "Param", "ReLU", "Sequential", "Softmax", "ToSequence", "SGDM", "SgdmState",
    "sgdm_step", "ShapeError",
]
