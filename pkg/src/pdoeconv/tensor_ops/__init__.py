"""Minimal numpy training engine for PDO-based equivariant networks."""
from .conv import ShapeError, correlate2d, correlate2d_backward
from .functional import (
    FeatureMap,
    act_on_features,
    group_batchnorm,
    groupconv_forward,
    lifting_forward,
    orientation_pool,
    relu,
)
from .model import (
    ModelConfig,
    TrainingDivergedError,
    accuracy,
    build_model,
    load_checkpoint,
    predict_logits,
    read_checkpoint,
    save_checkpoint,
    train,
)
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    GlobalAvgPool,
    GroupBatchNorm,
    GroupConv,
    LiftingConv,
    MaxPool2d,
    OrientationPool,
    ReLU,
    Sequential,
    softmax_cross_entropy,
)
from .model import CheckpointError, Normalizer, TrainResult, metrics_to_csv
from .optim import SGD, Adam, step_decay
