import typing

import numpy as np
import pytest

from apps.neural.enums import OutputActivation
from apps.neural.layers import (
    LSTM,
    BatchNorm,
    BiLSTMEncoder,
    Dense,
    Dropout,
    Embedding,
    Layer,
    MeanPoolEncoder,
    ReLU,
    output_loss,
    output_probabilities,
)
from apps.neural.services import cbow_loss_and_grads
from tests.bases import numerical_gradient, relative_error

SEEDS = range(20)
TOLERANCE = 1e-5


def check_layer(
    layer: Layer, x: np.ndarray, seed: int, forward: typing.Callable[[np.ndarray], np.ndarray] | None = None
) -> None:
    """Analytic parameter and input gradients of sum(forward(x) * R) against central differences."""
    forward = forward or (lambda value: layer.forward(value, training=True, rng=np.random.default_rng(seed)))
    weights = np.random.default_rng(seed + 1000).normal(size=forward(x).shape)

    def loss() -> float:
        return float(np.sum(forward(x) * weights))

    layer.zero_grad()
    forward(x)
    grad_x = layer.backward(weights)

    for name, param in layer.params.items():
        assert relative_error(layer.grads[name], numerical_gradient(loss, param)) < TOLERANCE, name
    if np.issubdtype(x.dtype, np.floating):
        assert relative_error(grad_x, numerical_gradient(loss, x)) < TOLERANCE


class TestGradients:
    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_dense(self, seed: int) -> None:
        rng = np.random.default_rng(seed)

        check_layer(Dense(4, 3, rng=rng), rng.normal(size=(5, 4)), seed)

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_relu(self, seed: int) -> None:
        rng = np.random.default_rng(seed)

        check_layer(ReLU(), rng.normal(size=(5, 4)), seed)

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_dropout_fixed_mask(self, seed: int) -> None:
        rng = np.random.default_rng(seed)

        check_layer(Dropout(0.3), rng.normal(size=(6, 4)), seed)

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_batchnorm(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        layer = BatchNorm(3)
        layer.params["gamma"][...] = rng.uniform(0.5, 2.0, size=3)
        layer.params["beta"][...] = rng.normal(size=3)

        check_layer(layer, rng.normal(2.0, 3.0, size=(8, 3)), seed)

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_batchnorm_inference(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        layer = BatchNorm(3)
        layer.buffers["running_mean"][...] = rng.normal(size=3)
        layer.buffers["running_var"][...] = rng.uniform(0.5, 2.0, size=3)

        check_layer(layer, rng.normal(size=(4, 3)), seed, forward=lambda value: layer.forward(value, training=False))

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_embedding(self, seed: int) -> None:
        rng = np.random.default_rng(seed)

        check_layer(Embedding(7, 3, rng=rng), rng.integers(0, 7, size=(4, 5)), seed)

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_mean_pool(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        mask = np.arange(6)[None, :] < rng.integers(0, 7, size=(4, 1))
        layer = MeanPoolEncoder(3)

        check_layer(
            layer, rng.normal(size=(4, 6, 3)), seed, forward=lambda value: layer.encode(value, mask, training=True)
        )

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    @pytest.mark.parametrize(argnames="reverse", argvalues=(False, True))
    def test_lstm(self, seed: int, reverse: bool) -> None:
        rng = np.random.default_rng(seed)
        mask = np.arange(5)[None, :] < rng.integers(1, 6, size=(3, 1))
        layer = LSTM(3, 2, rng=rng, reverse=reverse)

        check_layer(layer, rng.normal(size=(3, 5, 3)), seed, forward=lambda value: layer.forward(value, mask=mask))

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_bilstm(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        mask = np.arange(5)[None, :] < rng.integers(1, 6, size=(3, 1))
        encoder = BiLSTMEncoder(3, 2, 2, rng=rng)
        x = rng.normal(size=(3, 5, 3))
        weights = rng.normal(size=(3, 4))

        def loss() -> float:
            return float(np.sum(encoder.encode(x, mask, training=True) * weights))

        encoder.zero_grad()
        loss()
        grad_x = encoder.backward(weights)

        for name, layer in encoder.sublayers():
            for key, param in layer.params.items():
                assert relative_error(layer.grads[key], numerical_gradient(loss, param)) < TOLERANCE, (name, key)
        assert relative_error(grad_x, numerical_gradient(loss, x)) < TOLERANCE

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    @pytest.mark.parametrize(argnames="activation", argvalues=list(OutputActivation))
    def test_output_loss(self, seed: int, activation: OutputActivation) -> None:
        rng = np.random.default_rng(seed)
        logits = rng.normal(0.0, 2.0, size=(5, 3))
        targets = np.eye(3)[rng.integers(0, 3, size=5)]

        _, grad = output_loss(logits, targets, activation)

        numeric = numerical_gradient(lambda: output_loss(logits, targets, activation)[0], logits)
        assert relative_error(grad, numeric) < TOLERANCE

    @pytest.mark.parametrize(argnames="seed", argvalues=SEEDS)
    def test_cbow(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        W_in, W_out = rng.normal(0.0, 0.5, size=(10, 4)), rng.normal(0.0, 0.5, size=(10, 4))
        ids = rng.permutation(10)
        context, center, negatives = ids[:4], int(ids[4]), ids[5:8]

        _, grad_context, grad_out = cbow_loss_and_grads(W_in, W_out, context, center, negatives)

        def loss() -> float:
            return cbow_loss_and_grads(W_in, W_out, context, center, negatives)[0]

        numeric_in = numerical_gradient(loss, W_in)
        numeric_out = numerical_gradient(loss, W_out)
        for row in context:
            assert relative_error(grad_context, numeric_in[row]) < TOLERANCE
        assert relative_error(grad_out, numeric_out[[center, *negatives]]) < TOLERANCE


class TestLayers:
    def test_dropout_inference_is_identity(self) -> None:
        x = np.arange(12.0).reshape(3, 4)

        assert Dropout(0.5).forward(x, training=False) is x

    def test_dropout_scales_kept_units(self) -> None:
        out = Dropout(0.5).forward(np.ones((100, 10)), training=True, rng=np.random.default_rng(0))

        assert set(np.unique(out).tolist()) <= {0.0, 2.0}

    def test_batchnorm_running_statistics(self) -> None:
        layer = BatchNorm(2)
        x = np.array([[1.0, 10.0], [3.0, 30.0]])

        layer.forward(x, training=True)

        np.testing.assert_allclose(layer.buffers["running_mean"], [0.02, 0.2])
        np.testing.assert_allclose(layer.buffers["running_var"], [0.99 + 0.01 * 1.0, 0.99 + 0.01 * 100.0])

    def test_embedding_pad_row(self) -> None:
        layer = Embedding(5, 3, rng=np.random.default_rng(0))

        assert np.all(layer.params["E"][0] == 0)

    def test_mean_pool_all_pad(self) -> None:
        encoded = MeanPoolEncoder(2).encode(np.ones((1, 4, 2)), np.zeros((1, 4), dtype=bool), training=False)

        assert encoded.tolist() == [[0.0, 0.0]]

    def test_lstm_ignores_padding(self) -> None:
        rng = np.random.default_rng(4)
        encoder = BiLSTMEncoder(3, 2, 2, rng=rng)
        x = rng.normal(size=(1, 6, 3))
        padded = x.copy()
        padded[:, 4:] = rng.normal(size=(1, 2, 3))
        mask = np.array([[True, True, True, True, False, False]])

        np.testing.assert_allclose(
            encoder.encode(x, mask, training=False), encoder.encode(padded, mask, training=False)
        )

    @pytest.mark.parametrize(argnames="activation", argvalues=list(OutputActivation))
    def test_output_probabilities(self, activation: OutputActivation) -> None:
        probabilities = output_probabilities(np.array([[2.0, 0.0, -2.0]]), activation)

        assert np.all((probabilities > 0) & (probabilities < 1))
        if activation is OutputActivation.SOFTMAX:
            assert probabilities.sum() == pytest.approx(1.0)
