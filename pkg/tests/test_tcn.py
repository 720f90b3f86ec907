import numpy as np
import pytest

from macprint.features import ConfigError
from macprint.model import ClassifierModel, TrainConfig, class_weights, grad_check, train
from macprint.tcn import TCN, TCNConfig, causal_conv, softmax


def small_config(**kw):
    base = dict(input_width=3, n_classes=3, channels=4, kernel_size=2, dilations=(1, 2), attention=True, attention_dim=3)
    base.update(kw)
    return TCNConfig(**base)


def test_softmax_sums_to_one(rng):
    z = rng.normal(scale=50, size=(100, 7))
    assert np.all(np.abs(softmax(z).sum(axis=-1) - 1) <= 1e-9)


def test_zero_output_layer_gives_uniform_probabilities(rng):
    net = TCN(small_config(), seed=3)
    net.params["fc.w"][:] = 0
    net.params["fc.b"][:] = 0
    probs, acts, _ = net.forward(rng.normal(size=(4, 9, 3)))
    assert np.allclose(probs, 1 / 3)
    assert acts.shape == (4, 4)


def test_conv_stack_is_causal(rng):
    net = TCN(TCNConfig(input_width=3, n_classes=2), seed=1)
    x = rng.normal(size=(2, 20, 3))
    base = net.conv_features(x)
    for m in (0, 7, 18):
        y = x.copy()
        y[:, m + 1:] += rng.normal(size=y[:, m + 1:].shape)
        assert np.array_equal(net.conv_features(y)[:, :m + 1], base[:, :m + 1])


def test_causal_conv_matches_direct_sum(rng):
    x = rng.normal(size=(1, 8, 2))
    w = rng.normal(size=(3, 2, 4))
    b = rng.normal(size=4)
    y, _ = causal_conv(x, w, b, 2)
    for t in range(8):
        want = b.copy()
        for k in range(3):
            s = t - (2 - k) * 2
            if s >= 0:
                want += x[0, s] @ w[k]
        assert np.allclose(y[0, t], want)


def test_forward_is_deterministic(rng):
    x = rng.normal(size=(3, 11, 3))
    first = TCN(small_config(), seed=5).forward(x)[0]
    for _ in range(10):
        assert np.array_equal(TCN(small_config(), seed=5).forward(x)[0], first)


def test_forward_rejects_wrong_width(rng):
    with pytest.raises(ValueError):
        TCN(small_config(), seed=0).forward(rng.normal(size=(2, 5, 4)))


def test_gradient_check_random_model(rng):
    net = TCN(small_config(), seed=11)
    x = rng.normal(size=(5, 7, 3))
    y = rng.integers(0, 3, size=5)
    assert grad_check(net, x, y, n_params=150, seed=2) <= 1e-4


def test_gradient_check_linear_only_model(rng):
    net = TCN(small_config(dilations=(), attention=False), seed=2)
    x = rng.normal(size=(6, 5, 3))
    y = rng.integers(0, 3, size=6)
    assert grad_check(net, x, y, n_params=15) <= 1e-7


class CorruptedTCN(TCN):
    def loss_and_grads(self, x, y, weights=None, rng=None):
        loss, grads = super().loss_and_grads(x, y, weights, rng)
        return loss, {k: g * 1.5 for k, g in grads.items()}


def test_gradient_check_detects_corruption(rng):
    net = CorruptedTCN(small_config(), seed=11)
    x = rng.normal(size=(5, 7, 3))
    y = rng.integers(0, 3, size=5)
    assert grad_check(net, x, y, n_params=100) > 1e-2


def test_dropout_gradients_with_fixed_masks(rng):
    net = TCN(small_config(dropout=0.3), seed=4)
    x = rng.normal(size=(4, 6, 3))
    y = rng.integers(0, 3, size=4)
    loss, grads = net.loss_and_grads(x, y, rng=np.random.default_rng(9))

    def fixed_loss():
        return net.loss_and_grads(x, y, rng=np.random.default_rng(9))[0]

    worst = 0.0
    for name in ("b0.v1", "b1.g2", "fc.w"):
        arr = net.params[name]
        idx = (0,) * arr.ndim
        old = arr[idx]
        arr[idx] = old + 1e-5
        up = fixed_loss()
        arr[idx] = old - 1e-5
        down = fixed_loss()
        arr[idx] = old
        num = (up - down) / 2e-5
        worst = max(worst, abs(num - grads[name][idx]) / max(abs(num), abs(grads[name][idx]), 1e-6))
    assert worst <= 1e-4
    # without an rng dropout is off
    assert np.array_equal(net.forward(x)[0], net.forward(x)[0])


def separable_data(rng, n=200):
    y = rng.integers(0, 2, size=n)
    x = rng.normal(scale=0.3, size=(n, 5, 3))
    x[:, :, 0] += np.where(y == 1, 1.5, -1.5)[:, None]
    return x, y


def test_training_fits_separable_data(rng):
    x, y = separable_data(rng)
    model = train(x, y, ["a", "b"], TrainConfig(epochs=50, seed=0), net_config={"channels": 8, "dilations": (1, 2)})
    assert np.mean(model.predict(x, use_openset=False) == y) >= 0.99
    assert len(model.meta["loss_curve"]) == 50
    assert model.config.n_classes == 2


def test_shuffled_labels_train_worse(rng):
    x, y = separable_data(rng)
    cfg = TrainConfig(epochs=15, seed=0)
    net = {"channels": 8, "dilations": (1,)}
    true_loss = train(x, y, ["a", "b"], cfg, net_config=net).meta["loss_curve"][-1]
    shuffled = train(x, rng.permutation(y), ["a", "b"], cfg, net_config=net).meta["loss_curve"][-1]
    assert shuffled > true_loss


def test_training_is_deterministic(rng, tmp_path):
    x, y = separable_data(rng, 80)
    cfg = TrainConfig(epochs=3, seed=4)
    for i in (1, 2):
        train(x, y, ["a", "b"], cfg, net_config={"channels": 4, "dilations": (1,), "dropout": 0.2}).save(tmp_path / f"m{i}.mpm")
    assert (tmp_path / "m1.mpm").read_bytes() == (tmp_path / "m2.mpm").read_bytes()


def test_default_learning_rate():
    assert TrainConfig().lr == 0.001


@pytest.mark.parametrize("y", [np.array([], dtype=int), np.zeros(10, dtype=int), np.array([0, 5])])
def test_training_rejects_bad_labels(y):
    x = np.zeros((len(y), 3, 3))
    with pytest.raises(ConfigError):
        train(x, y, ["a", "b"], TrainConfig(epochs=1))


def test_class_weights_balance_counts():
    w = class_weights(np.array([0, 0, 0, 1]), 3)
    assert w[0] * 3 == pytest.approx(w[1] * 1) and w[2] == 0


def test_model_file_round_trip(rng, tmp_path):
    x, y = separable_data(rng, 60)
    model = train(x, y, ["a", "b"], TrainConfig(epochs=2, seed=1), net_config={"channels": 4, "dilations": (1,)})
    path = tmp_path / "m.mpm"
    model.save(path)
    back = ClassifierModel.load(path)
    assert back.classes == model.classes and back.config == model.config
    assert all(np.array_equal(back.params[k], v) for k, v in model.params.items())
    assert np.array_equal(back.forward(x)[0], model.forward(x)[0])
    back.save(tmp_path / "again.mpm")
    assert (tmp_path / "again.mpm").read_bytes() == path.read_bytes()


def test_model_file_checksum_detects_damage(rng, tmp_path):
    from macprint.modelio import ContainerError

    x, y = separable_data(rng, 40)
    path = tmp_path / "m.mpm"
    train(x, y, ["a", "b"], TrainConfig(epochs=1), net_config={"channels": 4, "dilations": (1,)}).save(path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ContainerError):
        ClassifierModel.load(path)


def test_model_rejects_mismatched_window(rng):
    x, y = separable_data(rng, 40)
    model = train(x, y, ["a", "b"], TrainConfig(epochs=1), net_config={"channels": 4, "dilations": (1,)})
    with pytest.raises(ConfigError):
        model.forward(np.zeros((1, 7, 3)))


@pytest.mark.parametrize("kernel_size, dilations", [(3, (1, 2)), (4, (1,)), (4, (1, 2, 4))])
def test_gradient_check_wider_kernels(rng, kernel_size, dilations):
    net = TCN(small_config(kernel_size=kernel_size, dilations=dilations), seed=5)
    for name, p in net.params.items():
        if p.ndim == 1 and name[-2:] not in ("g1", "g2"):
            p[...] = rng.normal(scale=0.1, size=p.shape)
    x = rng.normal(size=(5, 9, 3))
    assert grad_check(net, x, rng.integers(0, 3, size=5), n_params=200, seed=1) <= 1e-4
