"""Small numpy classifier with backpropagation, Adam and EWC."""

from rfdsa.nnet.layers import Conv1d, Dense, Dropout, Flatten, MaxPool1d, SELUConfig, ShapeMismatch, ZeroPad1d
from rfdsa.nnet.model import (
    NeuralModel, accuracy, build_model, classify, confusion_matrix, cross_entropy, default_layers,
    default_model, extract_features, forward, gradient, loss_and_gradient, model_confusion, one_hot,
    gradient_agreement, numeric_gradient, predict_scores, softmax,
)
from rfdsa.nnet.train import AdamState, History, TrainConfig, adam_step, sgd_step, train
from rfdsa.nnet.ewc import FisherDiag, ewc_loss, ewc_loss_and_gradient, fisher_diagonal

__all__ = [
    "Conv1d", "Dense", "Dropout", "Flatten", "MaxPool1d", "SELUConfig", "ShapeMismatch", "ZeroPad1d",
    "NeuralModel", "accuracy", "build_model", "classify", "confusion_matrix", "cross_entropy",
    "default_layers", "default_model", "extract_features", "forward", "gradient", "loss_and_gradient",
    "model_confusion", "one_hot", "predict_scores", "softmax", "gradient_agreement", "numeric_gradient",
    "AdamState", "History", "TrainConfig", "adam_step", "sgd_step", "train",
    "FisherDiag", "ewc_loss", "ewc_loss_and_gradient", "fisher_diagonal",
]
