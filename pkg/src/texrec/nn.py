"""Minimal float64 neural-network layers with explicit backprop.

Layers operate on channels-last arrays: (N, H, W, C) for spatial data and
(N, D) after flattening. Dropout is inverted: kept activations are scaled by
1/(1-p) at train time, so evaluation uses the raw network with no masking or
rescaling.

The 3x3 convolution materializes patches with nine block copies (one per
kernel offset) and runs a single GEMM; its backward pass scatters gradients
back with the mirrored nine adds. Because the first convolution sits at the
bottom of the stack, callers can skip its input gradient and reuse its patch
matrix across SGD steps when the inputs are fixed.
"""

from __future__ import annotations

import numpy as np

from .errors import ParamError


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels."""
    n = probs.shape[0]
    picked = probs[np.arange(n), labels]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def softmax_cross_entropy_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of mean cross-entropy wrt the logits."""
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return grad / n


class Conv3x3:
    """3x3 convolution, stride 1, zero-padded to preserve H and W.

    The kernel is stored as (9, in_channels, out_channels), offset-major.
    Forward and backward run as nine batched matmuls against shifted views
    of the padded input, which avoids materializing a patch matrix.
    """

    def __init__(self, in_channels, out_channels, init_scale, rng):
        fan_in = in_channels * 9
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.W = rng.normal(
            0.0, init_scale / np.sqrt(fan_in), size=(9, in_channels, out_channels)
        )
        self.b = np.zeros(out_channels)
        self.dW = None
        self.db = None
        self._xp = None

    @staticmethod
    def _offsets():
        return ((k // 3, k % 3) for k in range(9))

    def forward(self, x, train=False):
        n, h, w, c = x.shape
        if c != self.in_channels:
            raise ParamError(f"conv expected {self.in_channels} channels, got {c}")
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        if c == 1:
            # single-channel: stack the nine shifted planes and run one GEMM
            cols = np.empty((9, n, h, w))
            for k, (di, dj) in enumerate(self._offsets()):
                cols[k] = xp[:, di : di + h, dj : dj + w, 0]
            out = cols.reshape(9, -1).T @ self.W[:, 0, :] + self.b
            out = out.reshape(n, h, w, self.out_channels)
        else:
            out = None
            for k, (di, dj) in enumerate(self._offsets()):
                term = np.matmul(xp[:, di : di + h, dj : dj + w, :], self.W[k])
                if out is None:
                    out = term
                else:
                    out += term
            out += self.b
        if train:
            self._xp = xp
        return out

    def backward(self, dy, need_dx=True):
        xp = self._xp
        self._xp = None
        n, hp, wp, c = xp.shape
        h, w = hp - 2, wp - 2
        dyn = dy.reshape(-1, self.out_channels)
        self.db = dyn.sum(axis=0)
        # patches stacked contiguously once, then one batched GEMM for dW
        cols = np.empty((9, n, h, w, c))
        for k, (di, dj) in enumerate(self._offsets()):
            cols[k] = xp[:, di : di + h, dj : dj + w, :]
        cols2 = cols.reshape(9, n * h * w, c)
        self.dW = np.matmul(cols2.transpose(0, 2, 1), dyn)
        if not need_dx:
            return None
        dxp = np.zeros((n, hp, wp, c))
        for k, (di, dj) in enumerate(self._offsets()):
            dxp[:, di : di + h, dj : dj + w, :] += np.matmul(dy, self.W[k].T)
        return dxp[:, 1 : h + 1, 1 : w + 1, :]


class Dense:
    def __init__(self, in_dim, out_dim, init_scale, rng):
        self.W = rng.normal(0.0, init_scale / np.sqrt(in_dim), size=(in_dim, out_dim))
        self.b = np.zeros(out_dim)
        self.dW = None
        self.db = None
        self._x = None

    def forward(self, x, train=False):
        if train:
            self._x = x
        return x @ self.W + self.b

    def backward(self, dy):
        self.dW = self._x.T @ dy
        self.db = dy.sum(axis=0)
        self._x = None
        return dy @ self.W.T


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dy):
        dx = dy * self._mask
        self._mask = None
        return dx


class MaxPool2:
    """2x2 max pooling with stride 2 on (N, H, W, C); H and W must be even.

    Ties route the gradient to the first window position in row-major order,
    which keeps the backward pass deterministic.
    """

    def __init__(self):
        self._win = None
        self._out = None

    def forward(self, x, train=False):
        n, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ParamError(f"pooling needs even spatial dims, got {h}x{w}")
        win = x.reshape(n, h // 2, 2, w // 2, 2, c)
        out = np.maximum(
            np.maximum(win[:, :, 0, :, 0], win[:, :, 0, :, 1]),
            np.maximum(win[:, :, 1, :, 0], win[:, :, 1, :, 1]),
        )
        if train:
            self._win = win
            self._out = out
        return out

    def backward(self, dy):
        win, out = self._win, self._out
        n, h2, _, w2, _, c = win.shape
        dx = np.empty((n, h2, 2, w2, 2, c))
        taken = np.zeros(out.shape, dtype=bool)
        for di in range(2):
            for dj in range(2):
                hit = (win[:, :, di, :, dj] == out) & ~taken
                dx[:, :, di, :, dj] = np.where(hit, dy, 0.0)
                taken |= hit
        self._win = None
        self._out = None
        return dx.reshape(n, h2 * 2, w2 * 2, c)


class Flatten:
    def __init__(self):
        self._in_shape = None

    def forward(self, x, train=False):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._in_shape)


class Dropout:
    """Inverted dropout. A mask must be supplied whenever it is active;
    mask sampling lives with the caller so masks can be frozen or replayed.
    """

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ParamError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, mask=None, train=False):
        if self.rate == 0.0 or mask is None:
            return x
        out = x * (mask / (1.0 - self.rate))
        if train:
            self._mask = mask
        return out

    def backward(self, dy):
        if self._mask is None:
            return dy
        dx = dy * (self._mask / (1.0 - self.rate))
        self._mask = None
        return dx
