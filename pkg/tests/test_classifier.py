"""Softmax/MLP classifier: gradients, Adam training, composed prediction."""

import numpy as np
import pytest

from mridecomp.classifier import (
    TrainConfig,
    compose_probabilities,
    forward,
    gradient_check,
    gradients,
    init_model,
    loss,
    model_from_json,
    model_to_json,
    predict_composed,
    predict_subclass,
    train,
)
from mridecomp.decomposition import LabelCodec
from mridecomp.errors import ConfigError, DimMismatch, MissingSubclass

CODEC_2x2 = LabelCodec(classes=("A", "B"), cluster_counts=(2, 2))
CODEC_3x2 = LabelCodec(classes=("AD", "CN", "MCI"), cluster_counts=(2, 2, 2))


def blob_dataset(rng, codec, per=12, sep=12.0, dim=None):
    """One well-separated Gaussian blob per subclass (simplex placement)."""
    k = codec.n_sublabels
    dim = dim or k
    X, y = [], []
    for sid in range(k):
        center = np.zeros(dim)
        center[sid % dim] = sep * (1 + sid // dim)
        X.append(center + rng.normal(size=(per, dim)))
        y += [sid] * per
    return np.vstack(X), np.asarray(y, dtype=np.int64)


def zeroed(model):
    for name in model.param_names():
        model.params[name][...] = 0.0
    return model


# --- config validation ---------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"learning_rate": 0.0},
        {"learning_rate": -1.0},
        {"epochs": 0},
        {"batch_size": 0},
        {"hidden_dim": -1},
        {"beta1": 1.0},
        {"beta2": -0.1},
        {"eps": 0.0},
    ],
)
def test_train_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_train_config_defaults_valid():
    cfg = TrainConfig()
    assert cfg.learning_rate == 0.01
    assert cfg.epochs == 200
    assert cfg.batch_size == 64
    assert cfg.hidden_dim == 0


# --- forward pass ----------------------------------------------------------------


def test_probabilities_sum_to_one(rng):
    model = init_model(5, CODEC_3x2, seed=1)
    X = rng.normal(size=(40, 5))
    P = forward(model, X)
    assert P.shape == (40, 6)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_uniform_probabilities_at_zero_weights(rng):
    model = zeroed(init_model(4, CODEC_3x2, seed=0))
    p = predict_subclass(model, rng.normal(size=4))
    np.testing.assert_allclose(p, np.full(6, 1 / 6), atol=1e-15)


def test_forward_rejects_bad_shapes(rng):
    model = init_model(4, CODEC_2x2, seed=0)
    with pytest.raises(DimMismatch):
        forward(model, rng.normal(size=(3, 5)))
    with pytest.raises(DimMismatch):
        forward(model, rng.normal(size=4))
    with pytest.raises(DimMismatch):
        predict_subclass(model, rng.normal(size=(2, 4)))


def test_hidden_model_parameter_shapes():
    model = init_model(7, CODEC_2x2, hidden_dim=16, seed=0)
    assert model.param_names() == ["W1", "b1", "W2", "b2"]
    assert model.params["W1"].shape == (7, 16)
    assert model.params["b1"].shape == (16,)
    assert model.params["W2"].shape == (16, 4)
    assert model.params["b2"].shape == (4,)


# --- gradients -------------------------------------------------------------------


def test_closed_form_gradient_at_zero_weights(rng):
    """At W=b=0 the softmax is uniform, so dW = X.T (P - Y) / n exactly."""
    model = zeroed(init_model(3, CODEC_2x2, seed=0))
    X = rng.normal(size=(10, 3))
    y = rng.integers(0, 4, size=10)
    Y = np.zeros((10, 4))
    Y[np.arange(10), y] = 1.0
    P = np.full((10, 4), 0.25)
    grads = gradients(model, X, y)
    np.testing.assert_allclose(grads["W"], X.T @ (P - Y) / 10, atol=1e-12)
    np.testing.assert_allclose(grads["b"], (P - Y).mean(axis=0), atol=1e-12)


def test_gradient_check_softmax_head(rng):
    model = init_model(5, CODEC_3x2, seed=2, scale=0.5)
    X = rng.normal(size=(8, 5))
    y = rng.integers(0, 6, size=8)
    assert gradient_check(model, X, y) < 1e-4


def test_gradient_check_hidden_layer(rng):
    model = init_model(5, CODEC_2x2, hidden_dim=8, seed=3, scale=0.5)
    X = rng.normal(size=(8, 5))
    y = rng.integers(0, 4, size=8)
    assert gradient_check(model, X, y) < 1e-4


def test_gradient_check_does_not_perturb_model(rng):
    model = init_model(4, CODEC_2x2, seed=4)
    before = {k: v.copy() for k, v in model.params.items()}
    gradient_check(model, rng.normal(size=(6, 4)), rng.integers(0, 4, size=6))
    for k in before:
        np.testing.assert_array_equal(model.params[k], before[k])


# --- training --------------------------------------------------------------------


def test_training_separates_blobs(rng):
    X, y = blob_dataset(rng, CODEC_3x2)
    result = train(X, y, CODEC_3x2, TrainConfig(epochs=200, seed=0))
    preds = forward(result.model, X).argmax(axis=1)
    assert (preds == y).mean() == 1.0
    assert result.final_loss < result.epoch_losses[0]
    assert len(result.epoch_losses) == 201


def test_training_hidden_layer_separates_blobs(rng):
    X, y = blob_dataset(rng, CODEC_2x2)
    cfg = TrainConfig(epochs=150, hidden_dim=16, seed=0)
    result = train(X, y, CODEC_2x2, cfg)
    preds = forward(result.model, X).argmax(axis=1)
    assert (preds == y).mean() == 1.0


def test_training_bit_reproducible(rng):
    X, y = blob_dataset(rng, CODEC_2x2)
    cfg = TrainConfig(epochs=30, seed=9)
    a = train(X, y, CODEC_2x2, cfg)
    b = train(X, y, CODEC_2x2, cfg)
    assert a.epoch_losses == b.epoch_losses
    for name in a.model.param_names():
        np.testing.assert_array_equal(a.model.params[name], b.model.params[name])


def test_validation_curve_tracked(rng):
    X, y = blob_dataset(rng, CODEC_2x2)
    Xv, yv = blob_dataset(rng, CODEC_2x2, per=4)
    result = train(X, y, CODEC_2x2, TrainConfig(epochs=20, seed=0), X_val=Xv, y_val=yv)
    assert result.val_losses is not None
    assert len(result.val_losses) == 21
    assert result.val_losses[-1] < result.val_losses[0]


def test_missing_subclass_rejected(rng):
    X = rng.normal(size=(6, 3))
    y = np.array([0, 0, 1, 1, 2, 2])  # id 3 never appears
    with pytest.raises(MissingSubclass):
        train(X, y, CODEC_2x2, TrainConfig(epochs=1))


def test_train_rejects_mismatched_rows(rng):
    X = rng.normal(size=(6, 3))
    y = np.array([0, 1, 2, 3])
    with pytest.raises(DimMismatch):
        train(X, y, CODEC_2x2, TrainConfig(epochs=1))


# --- composition -----------------------------------------------------------------


def probability_model(codec, probs):
    """Zero-weight model whose bias makes softmax output exactly `probs`."""
    model = zeroed(init_model(1, codec, seed=0))
    bias = model.params["b"]
    bias[...] = np.log(np.asarray(probs))
    return model


def test_compose_modes_can_disagree():
    # AD_1 .3, AD_2 .1, CN_1 .05, CN_2 .05, MCI_1 .25, MCI_2 .25
    probs = [0.3, 0.1, 0.05, 0.05, 0.25, 0.25]
    model = probability_model(CODEC_3x2, probs)
    x = np.zeros(1)
    np.testing.assert_allclose(predict_subclass(model, x), probs, atol=1e-12)
    assert predict_composed(model, x, mode="argmax-strip") == "AD"
    assert predict_composed(model, x, mode="prob-sum") == "MCI"
    summed = compose_probabilities(CODEC_3x2, np.asarray(probs))
    np.testing.assert_allclose(
        [summed["AD"], summed["CN"], summed["MCI"]], [0.4, 0.1, 0.5], atol=1e-12
    )


def test_compose_modes_agree_when_concentrated():
    probs = [0.9, 0.02, 0.02, 0.02, 0.02, 0.02]
    model = probability_model(CODEC_3x2, probs)
    x = np.zeros(1)
    assert predict_composed(model, x, mode="argmax-strip") == "AD"
    assert predict_composed(model, x, mode="prob-sum") == "AD"


def test_unknown_compose_mode_rejected():
    model = probability_model(CODEC_2x2, [0.25, 0.25, 0.25, 0.25])
    with pytest.raises(ConfigError):
        predict_composed(model, np.zeros(1), mode="vote")


# --- serialization ---------------------------------------------------------------


def test_model_json_round_trip(tmp_path, rng):
    X, y = blob_dataset(rng, CODEC_2x2)
    result = train(X, y, CODEC_2x2, TrainConfig(epochs=10, seed=0))
    path = tmp_path / "model.json"
    model_to_json(result.model, path)
    loaded = model_from_json(path)
    assert loaded.codec == result.model.codec
    for name in result.model.param_names():
        np.testing.assert_array_equal(loaded.params[name], result.model.params[name])
    np.testing.assert_array_equal(
        forward(loaded, X).argmax(axis=1), forward(result.model, X).argmax(axis=1)
    )


def test_model_json_rejects_wrong_params(tmp_path, rng):
    model = init_model(3, CODEC_2x2, hidden_dim=4, seed=0)
    path = tmp_path / "model.json"
    model_to_json(model, path)
    import json

    blob = json.loads(path.read_text())
    del blob["params"]["W2"]
    path.write_text(json.dumps(blob))
    with pytest.raises(DimMismatch):
        model_from_json(path)
