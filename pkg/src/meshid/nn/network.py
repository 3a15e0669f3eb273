"""Declarative network configs and the network object built from them.

A config is an ordered list of layer specs plus the input shape and the
class count. Shape inference walks the list once and rejects stacks
that do not chain, naming the offending layer. Two presets are built
in: the full eight layer classification network for 227 pixel inputs,
and a small desk preset for 64 pixel inputs that trains in minutes on a
laptop CPU.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import BadK, BadLabel, ShapeMismatch
from .layers import LRN, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, Param, ReLU, Softmax
from .layers import softmax as _softmax

_KINDS = ("conv", "relu", "maxpool", "lrn", "flatten", "dense", "dropout", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    window: int = 0
    out_features: int = 0
    p: float = 0.0
    depth_radius: int = 2
    alpha: float = 1e-4
    beta: float = 0.75
    bias: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ShapeMismatch(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "LayerSpec":
        return cls(**payload)


def conv(out_channels: int, kernel: int, stride: int = 1, pad: int = 0) -> LayerSpec:
    return LayerSpec(kind="conv", out_channels=out_channels, kernel=kernel, stride=stride, pad=pad)


def relu() -> LayerSpec:
    return LayerSpec(kind="relu")


def maxpool(window: int, stride: int) -> LayerSpec:
    return LayerSpec(kind="maxpool", window=window, stride=stride)


def lrn(depth_radius: int = 2, alpha: float = 1e-4, beta: float = 0.75, bias: float = 2.0) -> LayerSpec:
    return LayerSpec(kind="lrn", depth_radius=depth_radius, alpha=alpha, beta=beta, bias=bias)


def flatten() -> LayerSpec:
    return LayerSpec(kind="flatten")


def dense(out_features: int) -> LayerSpec:
    return LayerSpec(kind="dense", out_features=out_features)


def dropout(p: float = 0.5) -> LayerSpec:
    return LayerSpec(kind="dropout", p=p)


def softmax_spec() -> LayerSpec:
    return LayerSpec(kind="softmax")


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    num_classes: int

    def __post_init__(self) -> None:
        shapes = infer_shapes(self)
        final = shapes[-1] if shapes else tuple(self.input_shape)
        if final != (self.num_classes,):
            raise ShapeMismatch(
                f"network ends in shape {final} but num_classes is {self.num_classes}"
            )


def infer_shapes(config: NetworkConfig) -> list[tuple[int, ...]]:
    """Output shape after every layer; raises when the stack cannot chain."""
    shape: tuple[int, ...] = tuple(config.input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ShapeMismatch(f"input shape must be (channels, height, width), got {shape}")
    shapes = []
    for index, spec in enumerate(config.layers):
        where = f"layer {index} ({spec.kind})"
        if spec.kind == "conv":
            if len(shape) != 3:
                raise ShapeMismatch(f"{where}: needs an image input, got {shape}")
            c, h, w = shape
            span_h = h + 2 * spec.pad - spec.kernel
            span_w = w + 2 * spec.pad - spec.kernel
            if spec.kernel < 1 or spec.stride < 1 or span_h < 0 or span_w < 0:
                raise ShapeMismatch(f"{where}: kernel {spec.kernel} does not fit input {shape}")
            shape = (spec.out_channels, span_h // spec.stride + 1, span_w // spec.stride + 1)
        elif spec.kind == "maxpool":
            if len(shape) != 3:
                raise ShapeMismatch(f"{where}: needs an image input, got {shape}")
            c, h, w = shape
            if spec.window < 1 or spec.stride < 1 or h < spec.window or w < spec.window:
                raise ShapeMismatch(f"{where}: window {spec.window} does not fit input {shape}")
            shape = (c, (h - spec.window) // spec.stride + 1, (w - spec.window) // spec.stride + 1)
        elif spec.kind == "lrn":
            if len(shape) != 3:
                raise ShapeMismatch(f"{where}: needs an image input, got {shape}")
        elif spec.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ShapeMismatch(f"{where}: needs a flat input, got {shape}; flatten first")
            if spec.out_features < 1:
                raise ShapeMismatch(f"{where}: out_features must be positive")
            shape = (spec.out_features,)
        elif spec.kind in ("relu", "dropout", "softmax"):
            pass
        shapes.append(shape)
    return shapes


def parameter_count(config: NetworkConfig) -> int:
    total = 0
    shape = tuple(config.input_shape)
    for spec, out_shape in zip(config.layers, infer_shapes(config)):
        if spec.kind == "conv":
            total += spec.out_channels * shape[0] * spec.kernel * spec.kernel + spec.out_channels
        elif spec.kind == "dense":
            total += spec.out_features * shape[0] + spec.out_features
        shape = out_shape
    return total


def build_alexnet(num_classes: int, preset: str = "full", lrn_enabled: bool | None = None) -> NetworkConfig:
    """Build the classification network config for a preset.

    ``full`` is the canonical eight layer network (five conv, three
    dense) on 227 pixel inputs, about 62 million parameters at a
    thousand classes. ``desk`` is a scaled down three conv stack on 64
    pixel inputs. ``lrn_enabled`` overrides the preset's default of
    normalization on (full) or off (desk).
    """
    if num_classes < 1:
        raise ShapeMismatch(f"num_classes must be positive, got {num_classes}")
    if preset == "full":
        use_lrn = True if lrn_enabled is None else lrn_enabled
        maybe_lrn = [lrn()] if use_lrn else []
        layers = [
            conv(96, 11, stride=4),
            relu(),
            *maybe_lrn,
            maxpool(3, 2),
            conv(256, 5, pad=2),
            relu(),
            *maybe_lrn,
            maxpool(3, 2),
            conv(384, 3, pad=1),
            relu(),
            conv(384, 3, pad=1),
            relu(),
            conv(256, 3, pad=1),
            relu(),
            maxpool(3, 2),
            flatten(),
            dense(4096),
            relu(),
            dropout(0.5),
            dense(4096),
            relu(),
            dropout(0.5),
            dense(num_classes),
            softmax_spec(),
        ]
        return NetworkConfig(input_shape=(3, 227, 227), layers=tuple(layers), num_classes=num_classes)
    if preset == "desk":
        use_lrn = False if lrn_enabled is None else lrn_enabled
        maybe_lrn = [lrn()] if use_lrn else []
        layers = [
            conv(16, 5, stride=2, pad=2),
            relu(),
            *maybe_lrn,
            maxpool(2, 2),
            conv(32, 3, pad=1),
            relu(),
            *maybe_lrn,
            maxpool(2, 2),
            conv(64, 3, pad=1),
            relu(),
            maxpool(2, 2),
            flatten(),
            dense(256),
            relu(),
            dropout(0.5),
            dense(num_classes),
            softmax_spec(),
        ]
        return NetworkConfig(input_shape=(3, 64, 64), layers=tuple(layers), num_classes=num_classes)
    raise ShapeMismatch(f"unknown preset {preset!r}")


class Network:
    """A runnable layer stack with parameters.

    ``forward`` returns logits (the trailing softmax spec is skipped)
    and caches activations for ``backward``. ``infer`` returns class
    probabilities without touching any caches, so concurrent callers
    can share one network read-only.
    """

    def __init__(self, config: NetworkConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.shapes = infer_shapes(config)
        rng = np.random.default_rng(seed)
        self.layers: list[Layer] = []
        shape = tuple(config.input_shape)
        for spec in config.layers:
            self.layers.append(_build_layer(spec, shape, rng, dtype))
            shape = self.shapes[len(self.layers) - 1]
        self._has_softmax = bool(config.layers) and config.layers[-1].kind == "softmax"

    @property
    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params]

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1:] != tuple(self.config.input_shape):
            raise ShapeMismatch(
                f"input batch shape {x.shape} does not match {(-1, *self.config.input_shape)}"
            )
        return np.ascontiguousarray(x, dtype=self.dtype)

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        x = self._check_input(x)
        stack = self.layers[:-1] if self._has_softmax else self.layers
        for layer in stack:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def infer(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        for layer in self.layers:
            x = layer.infer(x)
        if not self._has_softmax:
            x = _softmax(x)
        return x

    def backward(self, dlogits: np.ndarray) -> None:
        stack = self.layers[:-1] if self._has_softmax else self.layers
        grad = dlogits
        for layer in reversed(stack):
            grad = layer.backward(grad)

    def layer_params(self) -> list[list[np.ndarray]]:
        return [[p.value for p in layer.params] for layer in self.layers]

    def set_layer_params(self, arrays: Sequence[Sequence[np.ndarray]]) -> None:
        if len(arrays) != len(self.layers):
            raise ShapeMismatch(f"expected {len(self.layers)} layer groups, got {len(arrays)}")
        for index, (layer, group) in enumerate(zip(self.layers, arrays)):
            if len(group) != len(layer.params):
                raise ShapeMismatch(f"layer {index}: expected {len(layer.params)} tensors, got {len(group)}")
            for param, value in zip(layer.params, group):
                value = np.asarray(value)
                if value.shape != param.value.shape:
                    raise ShapeMismatch(
                        f"layer {index} param {param.name}: stored shape {value.shape} "
                        f"does not match expected {param.value.shape}"
                    )
                param.value = value.astype(self.dtype)


def _build_layer(spec: LayerSpec, in_shape: tuple[int, ...], rng, dtype) -> Layer:
    if spec.kind == "conv":
        return Conv2D(in_shape[0], spec.out_channels, spec.kernel, spec.stride, spec.pad, rng=rng, dtype=dtype)
    if spec.kind == "relu":
        return ReLU()
    if spec.kind == "maxpool":
        return MaxPool2D(spec.window, spec.stride)
    if spec.kind == "lrn":
        return LRN(spec.depth_radius, spec.alpha, spec.beta, spec.bias)
    if spec.kind == "flatten":
        return Flatten()
    if spec.kind == "dense":
        return Dense(in_shape[0], spec.out_features, rng=rng, dtype=dtype)
    if spec.kind == "dropout":
        return Dropout(spec.p)
    if spec.kind == "softmax":
        return Softmax()
    raise ShapeMismatch(f"unknown layer kind {spec.kind!r}")


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross entropy of softmax probabilities against integer labels.

    Returns (loss, probabilities, gradient of the loss with respect to
    the logits). The softmax shift makes the loss finite for any logit
    magnitude, and the gradient is (p - onehot) / batch.
    """
    labels = np.asarray(labels)
    n, num_classes = logits.shape
    if labels.shape != (n,):
        raise BadLabel(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise BadLabel(f"labels must lie in [0, {num_classes}), got range "
                       f"[{labels.min()}, {labels.max()}]")
    probs = _softmax(logits)
    picked = probs[np.arange(n), labels]
    loss = float(np.mean(-np.log(picked)))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, probs, grad


def predict_topk(network: Network, tensor: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top k class indices with probabilities for one input tensor.

    Ties break toward the lower class index. ``k`` equal to the class
    count returns a full permutation of the classes.
    """
    if not 1 <= k <= network.config.num_classes:
        raise BadK(f"k must lie in [1, {network.config.num_classes}], got {k}")
    probs = network.infer(np.asarray(tensor)[None])[0]
    order = np.argsort(-probs, kind="stable")
    return [(int(i), float(probs[i])) for i in order[:k]]
