from .layers import LRN, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, Param, ReLU, Softmax, softmax
from .network import (
    LayerSpec,
    Network,
    NetworkConfig,
    build_alexnet,
    conv,
    dense,
    dropout,
    flatten,
    infer_shapes,
    lrn,
    maxpool,
    parameter_count,
    predict_topk,
    relu,
    softmax_cross_entropy,
    softmax_spec,
)
from .optim import Adam
from .weights import load_weights, network_from_weights, save_weights

__all__ = [
    "Adam",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "LRN",
    "Layer",
    "LayerSpec",
    "MaxPool2D",
    "Network",
    "NetworkConfig",
    "Param",
    "ReLU",
    "Softmax",
    "build_alexnet",
    "conv",
    "dense",
    "dropout",
    "flatten",
    "infer_shapes",
    "load_weights",
    "lrn",
    "maxpool",
    "network_from_weights",
    "parameter_count",
    "predict_topk",
    "relu",
    "save_weights",
    "softmax",
    "softmax_cross_entropy",
    "softmax_spec",
]
