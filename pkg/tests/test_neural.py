import numpy as np
import pytest

from gpdr.neural import (
    Mlp,
    TrainConfig,
    TrainingError,
    _init_mlp,
    grad_check,
    gradients,
    hidden_width,
    latent,
    train_autoencoder,
    train_decoder,
)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_hidden_width():
    assert hidden_width(2, 10) == 5
    assert hidden_width(3, 4) == 6
    assert hidden_width(2, 5) == 4


def test_forward_shapes_and_input_check():
    rng = np.random.default_rng(0)
    m = _init_mlp([3, 4, 2], ["tanh", "linear"], None, rng)
    out = m.forward(rng.normal(size=(7, 3)))
    assert out.shape == (7, 2)
    assert m.layer_sizes == [3, 4, 2]
    with pytest.raises(ValueError):
        m.forward(np.zeros((2, 5)))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    for trial in range(10):
        m = _init_mlp([3, 2, 3], ["tanh", "linear"], 0,
                      np.random.default_rng(trial))
        X = rng.normal(size=(6, 3))
        Y = rng.normal(size=(6, 3))
        assert grad_check(m, X, Y) < 1e-4


def test_gradients_deeper_network():
    rng = np.random.default_rng(2)
    m = _init_mlp([4, 3, 2, 3, 4], ["tanh", "linear", "tanh", "linear"],
                  1, rng)
    X = rng.normal(size=(5, 4))
    assert grad_check(m, X, X) < 1e-4


def test_autoencoder_learns_low_rank_data():
    rng = np.random.default_rng(3)
    # rank-2 data in 5 dimensions: a 2-bottleneck can reconstruct it
    Z = rng.normal(size=(80, 2))
    W = rng.normal(size=(2, 5))
    X = Z @ W
    m = train_autoencoder(X, 2, TrainConfig(epochs=300, seed=0))
    base = float(np.mean((X - X.mean(axis=0)) ** 2))
    assert m.final_loss < 0.1 * base
    lat = latent(m, X)
    assert lat.shape == (80, 2)


def test_autoencoder_is_deterministic():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 4))
    cfg = TrainConfig(epochs=20, seed=5)
    a = train_autoencoder(X, 2, cfg)
    b = train_autoencoder(X, 2, TrainConfig(epochs=20, seed=5))
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    assert a.final_loss == b.final_loss


def test_autoencoder_rejects_bad_k():
    X = np.zeros((10, 3))
    with pytest.raises(ValueError):
        train_autoencoder(X, 3, TrainConfig())
    with pytest.raises(ValueError):
        train_autoencoder(X, 0, TrainConfig())


def test_decoder_fits_linear_map():
    rng = np.random.default_rng(6)
    L = rng.normal(size=(60, 2))
    Y = L @ rng.normal(size=(2, 3)) * 0.3
    m = train_decoder(L, Y, TrainConfig(epochs=300, seed=0))
    base = float(np.mean((Y - Y.mean(axis=0)) ** 2))
    assert m.final_loss < 0.1 * base
    with pytest.raises(ValueError):
        train_decoder(L, Y[:10], TrainConfig())


def test_latent_requires_bottleneck():
    rng = np.random.default_rng(7)
    m = _init_mlp([2, 2, 1], ["tanh", "linear"], None, rng)
    with pytest.raises(ValueError):
        latent(m, np.zeros((3, 2)))


def test_divergence_retries_then_raises():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(20, 3)) * 1e6
    # a learning rate this large overflows the weights to inf at lr and lr/2
    with pytest.raises(TrainingError), np.errstate(over="ignore"):
        train_decoder(X[:, :2], X, TrainConfig(epochs=5, learning_rate=1e200))
