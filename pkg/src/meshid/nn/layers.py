"""Network layers implemented directly on numpy arrays.

Tensors are (N, C, H, W) for image stacks and (N, F) once flattened.
Each layer caches whatever its backward pass needs during ``forward``
and exposes ``infer`` as a cache-free, eval-mode path that is safe to
call from several threads at once.

Everything here is exact and deterministic: convolution is im2col plus
a matrix product, pooling breaks ties toward the first element in
window scan order, and dropout masks come from the generator handed to
``forward``.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError


class Param:
    """A trainable tensor together with its current gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = None


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    params: tuple[Param, ...] = ()

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def infer(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _im2col(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Unfold sliding windows into (N, C, kernel*kernel, out_h*out_w)."""
    n, c, h, w = x.shape
    out_h = (h - kernel) // stride + 1
    out_w = (w - kernel) // stride + 1
    cols = np.empty((n, c, kernel * kernel, out_h * out_w), dtype=x.dtype)
    for idx in range(kernel * kernel):
        ky, kx = divmod(idx, kernel)
        window = x[:, :, ky : ky + stride * out_h : stride, kx : kx + stride * out_w : stride]
        cols[:, :, idx, :] = window.reshape(n, c, -1)
    return cols


def _col2im(dcols: np.ndarray, shape: tuple, kernel: int, stride: int) -> np.ndarray:
    """Scatter-add column gradients back onto the (padded) input."""
    n, c, h, w = shape
    out_h = (h - kernel) // stride + 1
    out_w = (w - kernel) // stride + 1
    dx = np.zeros(shape, dtype=dcols.dtype)
    blocks = dcols.reshape(n, c, kernel * kernel, out_h, out_w)
    for idx in range(kernel * kernel):
        ky, kx = divmod(idx, kernel)
        dx[:, :, ky : ky + stride * out_h : stride, kx : kx + stride * out_w : stride] += blocks[:, :, idx]
    return dx


class Conv2D(Layer):
    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0, rng=None, dtype=np.float32):
        fan_in = in_channels * kernel * kernel
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Param("w", he_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in, dtype))
        self.b = Param("b", np.zeros(out_channels, dtype=dtype))
        self.params = (self.w, self.b)
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self._cache = None

    def _convolve(self, x, keep_cache):
        if self.pad:
            x = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        n, c, h, w = x.shape
        out_h = (h - self.kernel) // self.stride + 1
        out_w = (w - self.kernel) // self.stride + 1
        cols = _im2col(x, self.kernel, self.stride).reshape(n, c * self.kernel * self.kernel, -1)
        w2d = self.w.value.reshape(len(self.b.value), -1)
        out = np.matmul(w2d, cols) + self.b.value[:, None]
        if keep_cache:
            self._cache = (cols, x.shape)
        return out.reshape(n, -1, out_h, out_w)

    def forward(self, x, train=False, rng=None):
        return self._convolve(x, keep_cache=True)

    def infer(self, x):
        return self._convolve(x, keep_cache=False)

    def backward(self, dout):
        cols, padded_shape = self._cache
        n, out_c, out_h, out_w = dout.shape
        dout_mat = dout.reshape(n, out_c, -1)
        self.b.grad = dout.sum(axis=(0, 2, 3))
        w2d = self.w.value.reshape(out_c, -1)
        self.w.grad = np.matmul(dout_mat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.value.shape)
        dcols = np.matmul(w2d.T, dout_mat)
        dx = _col2im(dcols, padded_shape, self.kernel, self.stride)
        if self.pad:
            dx = dx[:, :, self.pad : -self.pad, self.pad : -self.pad]
        return dx


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def infer(self, x):
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._mask


class MaxPool2D(Layer):
    def __init__(self, window, stride):
        self.window = window
        self.stride = stride

    def _pool(self, x, keep_cache):
        n, c, h, w = x.shape
        cols = _im2col(x, self.window, self.stride)
        arg = cols.argmax(axis=2)  # first maximum wins ties in scan order
        out_h = (h - self.window) // self.stride + 1
        out_w = (w - self.window) // self.stride + 1
        out = np.take_along_axis(cols, arg[:, :, None, :], axis=2)[:, :, 0, :]
        if keep_cache:
            self._cache = (arg, x.shape)
        return out.reshape(n, c, out_h, out_w)

    def forward(self, x, train=False, rng=None):
        return self._pool(x, keep_cache=True)

    def infer(self, x):
        return self._pool(x, keep_cache=False)

    def backward(self, dout):
        arg, shape = self._cache
        n, c, h, w = shape
        flat = dout.reshape(n, c, 1, -1)
        dcols = np.zeros((n, c, self.window * self.window, flat.shape[-1]), dtype=dout.dtype)
        np.put_along_axis(dcols, arg[:, :, None, :], flat, axis=2)
        return _col2im(dcols, shape, self.window, self.stride)


class LRN(Layer):
    """Local response normalization across channels."""

    def __init__(self, depth_radius=2, alpha=1e-4, beta=0.75, bias=2.0):
        self.depth_radius = depth_radius
        self.alpha = alpha
        self.beta = beta
        self.bias = bias

    def _window_sum(self, values):
        c = values.shape[1]
        r = self.depth_radius
        csum = np.cumsum(values, axis=1)
        zero = np.zeros_like(values[:, :1])
        csum = np.concatenate([zero, csum], axis=1)
        lo = np.maximum(np.arange(c) - r, 0)
        hi = np.minimum(np.arange(c) + r + 1, c)
        return csum[:, hi] - csum[:, lo]

    def _scale(self, x):
        return self.bias + self.alpha * self._window_sum(x * x)

    def forward(self, x, train=False, rng=None):
        scale = self._scale(x)
        self._cache = (x, scale)
        return x * scale**-self.beta

    def infer(self, x):
        return x * self._scale(x) ** -self.beta

    def backward(self, dout):
        x, scale = self._cache
        inner = dout * x * scale ** (-self.beta - 1.0)
        return dout * scale**-self.beta - (2.0 * self.alpha * self.beta) * x * self._window_sum(inner)


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(len(x), -1)

    def infer(self, x):
        return x.reshape(len(x), -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Param("w", he_uniform(rng, (out_features, in_features), in_features, dtype))
        self.b = Param("b", np.zeros(out_features, dtype=dtype))
        self.params = (self.w, self.b)

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.w.value.T + self.b.value

    def infer(self, x):
        return x @ self.w.value.T + self.b.value

    def backward(self, dout):
        self.w.grad = dout.T @ self._x
        self.b.grad = dout.sum(axis=0)
        return dout @ self.w.value


class Dropout(Layer):
    """Inverted dropout: scaling happens at train time, eval is identity."""

    def __init__(self, p=0.5):
        if not 0.0 <= p < 1.0:
            raise DataError(f"dropout probability must lie in [0, 1), got {p}")
        self.p = p
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise DataError("dropout in train mode needs a random generator")
        keep = np.float64(1.0 - self.p)
        self._mask = (rng.random(x.shape) >= self.p) / keep
        self._mask = self._mask.astype(x.dtype)
        return x * self._mask

    def infer(self, x):
        return x

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class Softmax(Layer):
    def forward(self, x, train=False, rng=None):
        self._probs = softmax(x)
        return self._probs

    def infer(self, x):
        return softmax(x)

    def backward(self, dout):
        probs = self._probs
        inner = (dout * probs).sum(axis=1, keepdims=True)
        return probs * (dout - inner)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)
