from .layers import (
    KINDS,
    LayerSpec,
    batchnorm,
    conv2d,
    dense,
    depthwise,
    dropout,
    global_avgpool,
    infer_shapes,
    maxpool,
    pointwise,
    relu,
    residual_add,
    softmax,
    softmax_rows,
)
from .network import (
    ModelParams,
    as_specs,
    backward,
    backward_from,
    cross_entropy,
    cross_entropy_loss,
    forward,
    init_params,
    param_count,
    predict_proba,
)
from .optim import SGD, Adam, make_optimizer

__all__ = [
    "KINDS", "LayerSpec", "ModelParams", "SGD", "Adam",
    "batchnorm", "conv2d", "dense", "depthwise", "dropout", "global_avgpool", "maxpool",
    "pointwise", "relu", "residual_add", "softmax", "softmax_rows", "infer_shapes",
    "as_specs", "backward", "backward_from", "cross_entropy", "cross_entropy_loss", "forward",
    "init_params", "param_count", "predict_proba", "make_optimizer",
]
