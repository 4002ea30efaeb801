"""leafnet: from-scratch CNN/LSTM leaf-disease classifiers and CLI."""

from .models import (CnnConfig, LstmConfig, SequentialModel, build_cnn, build_lstm,
                     forward, predict, summary)
from .training import TrainConfig, evaluate_loss_acc, train

__all__ = [
    "CnnConfig", "LstmConfig", "SequentialModel", "build_cnn", "build_lstm",
    "forward", "predict", "summary", "TrainConfig", "train", "evaluate_loss_acc",
]

__version__ = "0.1.0"
