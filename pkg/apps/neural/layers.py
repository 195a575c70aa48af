"""Differentiable layers with hand-written backward passes. Every layer caches what its backward pass needs."""
import abc
import typing

import numpy as np
from scipy.special import expit, log_expit, log_softmax, softmax

from apps.neural.enums import OutputActivation
from apps.neural.schemas import PAD_ID

__all__ = (
    "Layer",
    "Dense",
    "ReLU",
    "Dropout",
    "BatchNorm",
    "Embedding",
    "SequenceEncoder",
    "MeanPoolEncoder",
    "LSTM",
    "BiLSTMEncoder",
    "output_probabilities",
    "output_loss",
)

BATCHNORM_EPS = 1e-8
BATCHNORM_MOMENTUM = 0.99
EMBEDDING_STD = 0.01
FORGET_BIAS = 1.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Layer(abc.ABC):
    """
    Base layer. `params` and `grads` share keys and shapes; backward ADDS into `grads`, callers zero them first.

    The network re-points both dicts at views of its flat parameter/gradient arrays, so layers must only
    update them in place.
    """

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def _add_param(self, name: str, value: np.ndarray) -> None:
        self.params[name] = np.asarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad[...] = 0.0

    @abc.abstractmethod
    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        ...

    @abc.abstractmethod
    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the last forward input; parameter gradients accumulate into `grads`."""


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, *, rng: np.random.Generator):
        super().__init__()
        self._add_param("W", glorot_uniform(rng, in_features, out_features))
        self._add_param("b", np.zeros(out_features))
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.grads["W"] += self._x.T @ grad
        self.grads["b"] += grad.sum(axis=0)
        return grad @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * self._mask


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-p) at train time, inference is the identity."""

    def __init__(self, p: float):
        super().__init__()
        self.p = p
        self._scale: np.ndarray | None = None

    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        if not training or self.p == 0:
            self._scale = None
            return x
        keep = rng.random(size=x.shape) >= self.p
        self._scale = keep / (1.0 - self.p)
        return x * self._scale

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad if self._scale is None else grad * self._scale


class BatchNorm(Layer):
    """Per-feature batch normalization; train mode uses batch statistics, inference the running ones."""

    def __init__(self, features: int):
        super().__init__()
        self._add_param("gamma", np.ones(features))
        self._add_param("beta", np.zeros(features))
        self.buffers = {"running_mean": np.zeros(features), "running_var": np.ones(features)}

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Train-mode normalization before scale and shift."""
        return (x - x.mean(axis=0)) / np.sqrt(x.var(axis=0) + BATCHNORM_EPS)

    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        if training:
            mean, var = x.mean(axis=0), x.var(axis=0)
            self.buffers["running_mean"][...] = (
                BATCHNORM_MOMENTUM * self.buffers["running_mean"] + (1 - BATCHNORM_MOMENTUM) * mean
            )
            self.buffers["running_var"][...] = (
                BATCHNORM_MOMENTUM * self.buffers["running_var"] + (1 - BATCHNORM_MOMENTUM) * var
            )
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        self._inv_std = 1.0 / np.sqrt(var + BATCHNORM_EPS)
        self._x_hat = (x - mean) * self._inv_std
        self._training = training
        return self.params["gamma"] * self._x_hat + self.params["beta"]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.grads["gamma"] += (grad * self._x_hat).sum(axis=0)
        self.grads["beta"] += grad.sum(axis=0)
        grad_x_hat = grad * self.params["gamma"]
        if not self._training:
            return grad_x_hat * self._inv_std
        n = grad.shape[0]
        return (
            self._inv_std
            / n
            * (n * grad_x_hat - grad_x_hat.sum(axis=0) - self._x_hat * (grad_x_hat * self._x_hat).sum(axis=0))
        )


class Embedding(Layer):
    """Token id lookup; the PAD row starts at zero."""

    def __init__(self, vocab_size: int, dim: int, *, rng: np.random.Generator, weights: np.ndarray | None = None):
        super().__init__()
        if weights is None:
            weights = rng.normal(0.0, EMBEDDING_STD, size=(vocab_size, dim))
            weights[PAD_ID] = 0.0
        self._add_param("E", weights)

    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        self._ids = x
        return self.params["E"][x]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        np.add.at(self.grads["E"], self._ids, grad)
        return np.zeros(self._ids.shape)


class SequenceEncoder(Layer):
    """(batch, time, dim) embeddings plus a (batch, time) non-PAD mask -> (batch, output_dim)."""

    output_dim: int

    def encode(self, x: np.ndarray, mask: np.ndarray, *, training: bool) -> np.ndarray:
        self.mask = mask.astype(np.float64)
        return self.forward(x, training=training)


class MeanPoolEncoder(SequenceEncoder):
    """Average over non-PAD positions; an all-PAD row encodes to zeros."""

    def __init__(self, dim: int):
        super().__init__()
        self.output_dim = dim

    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        self._count = np.maximum(self.mask.sum(axis=1, keepdims=True), 1.0)
        return (x * self.mask[:, :, None]).sum(axis=1) / self._count

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return (grad / self._count)[:, None, :] * self.mask[:, :, None]


class LSTM(Layer):
    """
    One-direction LSTM over (batch, time, in) with gate order i, f, g, o and W of shape (in + hidden, 4 * hidden).

    Masked positions carry the previous state through unchanged. With `reverse` the sequence is read from the
    last position to the first; outputs are always indexed by original position.
    """

    def __init__(self, in_features: int, hidden: int, *, rng: np.random.Generator, reverse: bool = False):
        super().__init__()
        self.hidden = hidden
        self.reverse = reverse
        self._add_param("W", glorot_uniform(rng, in_features + hidden, 4 * hidden))
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = FORGET_BIAS
        self._add_param("b", bias)

    def steps(self, length: int) -> range:
        return range(length - 1, -1, -1) if self.reverse else range(length)

    def forward(
        self,
        x: np.ndarray,
        *,
        training: bool = False,
        rng: np.random.Generator | None = None,
        mask: np.ndarray | None = None,
    ) -> np.ndarray:
        batch, length, _ = x.shape
        h_size = self.hidden
        mask = np.ones((batch, length)) if mask is None else mask.astype(np.float64)
        h = np.zeros((batch, h_size))
        c = np.zeros((batch, h_size))
        outputs = np.zeros((batch, length, h_size))
        self._cache: list[tuple] = []
        for t in self.steps(length):
            xh = np.concatenate([x[:, t], h], axis=1)
            z = xh @ self.params["W"] + self.params["b"]
            i = expit(z[:, :h_size])
            f = expit(z[:, h_size : 2 * h_size])
            g = np.tanh(z[:, 2 * h_size : 3 * h_size])
            o = expit(z[:, 3 * h_size :])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            m = mask[:, t : t + 1]
            self._cache.append((t, xh, i, f, g, o, c, tanh_c, m))
            c = m * c_new + (1 - m) * c
            h = m * h_new + (1 - m) * h
            outputs[:, t] = h
        self._in_features = x.shape[2]
        return outputs

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """`grad` is (batch, time, hidden): the loss gradient w.r.t. every output position."""
        batch, length, h_size = grad.shape
        W = self.params["W"]
        dx = np.zeros((batch, length, self._in_features))
        dh_next = np.zeros((batch, h_size))
        dc_next = np.zeros((batch, h_size))
        for t, xh, i, f, g, o, c_prev, tanh_c, m in reversed(self._cache):
            dh = grad[:, t] + dh_next
            dh_new = m * dh
            dc_new = m * dc_next + dh_new * o * (1 - tanh_c**2)
            dz = np.concatenate(
                [
                    dc_new * g * i * (1 - i),
                    dc_new * c_prev * f * (1 - f),
                    dc_new * i * (1 - g**2),
                    dh_new * tanh_c * o * (1 - o),
                ],
                axis=1,
            )
            self.grads["W"] += xh.T @ dz
            self.grads["b"] += dz.sum(axis=0)
            dxh = dz @ W.T
            dx[:, t] = dxh[:, : self._in_features]
            dh_next = (1 - m) * dh + dxh[:, self._in_features :]
            dc_next = (1 - m) * dc_next + dc_new * f
        return dx


class BiLSTMEncoder(SequenceEncoder):
    """
    Stacked bidirectional LSTM. Each layer above the first reads the concatenated forward/backward outputs
    of the layer below; the encoding is the top layer's final forward state (last position) concatenated with
    its final backward state (first position).
    """

    def __init__(self, in_features: int, hidden: int, layers: int, *, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.output_dim = 2 * hidden
        self.stack: list[tuple[LSTM, LSTM]] = []
        for depth in range(layers):
            width = in_features if depth == 0 else 2 * hidden
            self.stack.append(
                (LSTM(width, hidden, rng=rng), LSTM(width, hidden, rng=rng, reverse=True)),
            )

    def sublayers(self) -> typing.Iterator[tuple[str, LSTM]]:
        for depth, (forward, backward) in enumerate(self.stack):
            yield f"l{depth}.fwd", forward
            yield f"l{depth}.bwd", backward

    def zero_grad(self) -> None:
        for _, layer in self.sublayers():
            layer.zero_grad()

    def forward(self, x: np.ndarray, *, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        for forward, backward in self.stack:
            x = np.concatenate(
                [forward.forward(x, mask=self.mask), backward.forward(x, mask=self.mask)], axis=2
            )
        return np.concatenate([x[:, -1, : self.hidden], x[:, 0, self.hidden :]], axis=1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        batch, length = self.mask.shape
        dx = np.zeros((batch, length, 2 * self.hidden))
        dx[:, -1, : self.hidden] = grad[:, : self.hidden]
        dx[:, 0, self.hidden :] += grad[:, self.hidden :]
        for forward, backward in reversed(self.stack):
            dx = forward.backward(dx[:, :, : self.hidden]) + backward.backward(dx[:, :, self.hidden :])
        return dx


def output_probabilities(logits: np.ndarray, activation: OutputActivation) -> np.ndarray:
    if activation is OutputActivation.SIGMOID:
        return expit(logits)
    return softmax(logits, axis=1)


def output_loss(logits: np.ndarray, targets: np.ndarray, activation: OutputActivation) -> tuple[float, np.ndarray]:
    """
    Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    Softmax mode is categorical cross-entropy; sigmoid mode sums per-class binary cross-entropy.
    `targets` is a (batch, classes) matrix of target probabilities.
    """
    batch = logits.shape[0]
    if activation is OutputActivation.SIGMOID:
        per_row = -(targets * log_expit(logits) + (1 - targets) * log_expit(-logits)).sum(axis=1)
    else:
        per_row = -(targets * log_softmax(logits, axis=1)).sum(axis=1)
    grad = (output_probabilities(logits, activation) - targets) / batch
    return float(per_row.mean()), grad
