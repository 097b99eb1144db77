"""Deep-network joint MIMO detection and decoding receiver."""

from .checkpoint import load_model, save_model
from .network import (
    MlpArchitecture,
    MlpModel,
    backward,
    bce_loss,
    default_hidden_widths,
    feature_width,
    featurize,
    forward,
    init_model,
)
from .training import (
    AdamConfig,
    TrainingSet,
    adam_step,
    dnn_receive,
    generate_training_set,
    train,
)

__all__ = [
    "AdamConfig",
    "MlpArchitecture",
    "MlpModel",
    "TrainingSet",
    "adam_step",
    "backward",
    "bce_loss",
    "default_hidden_widths",
    "dnn_receive",
    "feature_width",
    "featurize",
    "forward",
    "generate_training_set",
    "init_model",
    "load_model",
    "save_model",
    "train",
]
