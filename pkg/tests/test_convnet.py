import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazeguide.convnet import (Conv, Dense, EarlyStopping, MaxPool, Network, ReLU, TrainConfig,
                               TrainingDivergence, default_network, evaluate_accuracy, fine_tune,
                               load_model, loss_and_grads, save_model, sgdm_step, softmax_cross_entropy,
                               stratified_split, train_network, write_history)
from oracles import fd_param_check, rel_err, strided_net, tiny_net


def test_zero_net_gives_zero_logits():
    net = default_network(4, (3, 16, 16))
    for layer in net.layers:
        layer.params = {k: np.zeros_like(v) for k, v in layer.params.items()}
    _, logits = net.forward(np.random.default_rng(0).uniform(size=(2, 3, 16, 16)))
    assert logits.shape == (2, 4) and not logits.any()


def test_unit_conv():
    net = Network((1, 4, 4), [Conv(1, 1), Dense(1)])
    net.layers[0].params = {"W": np.full((1, 1, 1, 1), 2.0), "b": np.zeros(1)}
    rec, _ = net.forward(np.ones((1, 1, 4, 4)))
    assert np.array_equal(rec.outputs[0], np.full((1, 1, 4, 4), 2.0))


def test_hand_computed_two_layer_net():
    net = Network((1, 2, 2), [Conv(1, 2), ReLU(), Dense(2)])
    net.layers[0].params = {"W": np.array([[[[1.0, -1.0], [0.5, 2.0]]]]), "b": np.array([0.25])}
    net.layers[2].params = {"W": np.array([[3.0], [-1.0]]), "b": np.array([0.0, 1.0])}
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    # conv: 1 - 2 + 1.5 + 8 + 0.25 = 8.75; relu keeps it
    _, logits = net.forward(x)
    np.testing.assert_allclose(logits, [[26.25, -7.75]], atol=1e-6)


def test_shape_mismatch_names_layer():
    net = tiny_net()
    with pytest.raises(ValueError, match="network input"):
        net.forward(np.zeros((1, 3, 5, 5)))


def test_uniform_logits_loss():
    loss, _ = softmax_cross_entropy(np.zeros((3, 7)), np.array([0, 3, 6]))
    assert loss == pytest.approx(np.log(7))


@pytest.mark.parametrize("make", [tiny_net, strided_net])
def test_gradients_match_finite_differences(make):
    rng = np.random.default_rng(1)
    net = make(seed=2)
    x = rng.normal(size=(3,) + net.input_shape)
    y = rng.integers(0, net.num_outputs, 3)
    for *_, a, n in fd_param_check(net, x, y, 8, rng):
        assert rel_err(a, n) < 1e-4


def test_duplicate_sample_same_gradients():
    rng = np.random.default_rng(3)
    net = tiny_net(seed=4)
    x = rng.normal(size=(1, 3, 6, 6))
    l1, g1 = loss_and_grads(net, x, [1])
    l2, g2 = loss_and_grads(net, np.concatenate([x, x]), [1, 1])
    assert l1 == pytest.approx(l2)
    for a, b in zip(g1, g2):
        if a is not None:
            for k in a:
                np.testing.assert_allclose(a[k], b[k], atol=1e-12)


def test_frozen_layers_get_no_gradient():
    net = tiny_net()
    net.layers[0].frozen = True
    _, grads = loss_and_grads(net, np.ones((1, 3, 6, 6)), [0])
    assert grads[0] is None and grads[3] is not None


def test_bad_labels_rejected():
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))


def _one_param_net(lr_factor=1.0):
    net = Network((1,), [Dense(1, lr_factor=lr_factor)])
    net.layers[0].params = {"W": np.array([[1.0]]), "b": np.array([0.0])}
    return net


def test_sgdm_hand_values():
    net = _one_param_net()
    sgdm_step(net, [{"W": np.array([[0.5]])}], {}, 0.1, momentum=0.0)
    assert net.layers[0].params["W"][0, 0] == pytest.approx(0.95)

    net = _one_param_net()
    v = {}
    for _ in range(2):
        sgdm_step(net, [{"W": np.array([[1.0]])}], v, 0.1, momentum=0.9)
    assert v[(0, "W")][0, 0] == pytest.approx(-0.19)
    assert net.layers[0].params["W"][0, 0] == pytest.approx(1 - 0.29)


def test_lr_factor_twenty():
    a, b = _one_param_net(1.0), _one_param_net(20.0)
    g = [{"W": np.array([[0.3]])}]
    sgdm_step(a, g, {}, 1e-4)
    sgdm_step(b, g, {}, 1e-4)
    assert (b.layers[0].params["W"][0, 0] - 1) == pytest.approx(20 * (a.layers[0].params["W"][0, 0] - 1))


def test_frozen_untouched_by_sgdm():
    net = _one_param_net()
    net.layers[0].frozen = True
    sgdm_step(net, [{"W": np.array([[1.0]])}], {}, 1.0)
    assert net.layers[0].params["W"][0, 0] == 1.0


def test_small_step_descends():
    rng = np.random.default_rng(6)
    net = tiny_net(seed=1)
    x, y = rng.normal(size=(8, 3, 6, 6)), rng.integers(0, 3, 8)
    l0, g = loss_and_grads(net, x, y)
    sgdm_step(net, g, {}, 1e-6)
    assert loss_and_grads(net, x, y)[0] <= l0


def test_early_stopping_trace():
    es = EarlyStopping(patience=5, min_delta=1e-4)
    stops = [es.update(e, v)[1] for e, v in enumerate([1.0, .9, .91, .92, .93, .94, .95], start=1)]
    assert stops == [False] * 6 + [True] and es.best_epoch == 2


def test_early_stop_restores_best_weights():
    # val loss rises after epoch 1 when lr is huge; the restored weights give the best val loss
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 4))
    y = (x[:, 0] > 0).astype(int)
    net = Network((4,), [Dense(2)], seed=1)
    split = (np.arange(30), np.arange(30, 40))
    hist = train_network(net, x, y, TrainConfig(batch_size=5, base_lr=0.05, max_epochs=25, patience=3),
                         split=split)
    best_val = hist.rows[hist.best_epoch - 1][2]
    # later epochs never beat the kept one by more than min_delta
    assert all(r[2] >= best_val - 1e-4 for r in hist.rows)
    val_loss = softmax_cross_entropy(net.forward(x[30:])[1], y[30:])[0]
    assert val_loss == pytest.approx(best_val, abs=1e-12)


def _blobs(n_per=30, seed=0, size=8):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 0.2, size=(2 * n_per, 3, size, size))
    x[:n_per, 0] += 0.7   # category 0 red, category 1 blue
    x[n_per:, 2] += 0.7
    return x, np.repeat([0, 1], n_per)


def _small_base(seed=0, size=8):
    return Network((3, size, size), [Conv(4, 3, 1, 1), ReLU(), MaxPool(2, 2), Dense(8), ReLU(), Dense(5)],
                   seed=seed)


def test_fine_tune_separable():
    x, y = _blobs()
    cfg = TrainConfig(batch_size=8, base_lr=1e-3, max_epochs=30, seed=0)
    net, hist = fine_tune(_small_base(), x, y, cfg)
    assert max(r[3] for r in hist.rows) >= 0.95
    assert net.num_outputs == 2 and net.layers[-1].lr_factor == 20.0


def test_fine_tune_freezes_convs_and_is_deterministic():
    x, y = _blobs(10)
    base = _small_base()
    cfg = TrainConfig(batch_size=4, base_lr=1e-3, max_epochs=3, seed=5)
    a, _ = fine_tune(base, x, y, cfg)
    b, _ = fine_tune(base, x, y, cfg)
    assert np.array_equal(a.layers[0].params["W"], base.layers[0].params["W"])
    assert a.layers[0].frozen
    for (_, _, p), (_, _, q) in zip(a.param_items(), b.param_items()):
        assert np.array_equal(p, q)


def test_fine_tune_errors():
    x, y = _blobs(5)
    with pytest.raises(ValueError):
        fine_tune(_small_base(), x, np.zeros(10, dtype=int))
    with pytest.raises(ValueError, match="empty"):
        fine_tune(_small_base(), x, np.where(y == 1, 2, 0), num_categories=3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    x, y = _blobs(10)
    x = x * 1e150
    with pytest.raises(TrainingDivergence) as info:
        fine_tune(_small_base(), x, y, TrainConfig(base_lr=1e10, max_epochs=3, batch_size=4))
    assert info.value.epoch == 1


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=8, max_size=60), st.floats(0.05, 0.5))
def test_stratified_split_partitions(labels, frac):
    labels = np.array(labels)
    if np.bincount(labels).min(initial=0) < 2 or len(set(labels)) < len(np.bincount(labels)):
        labels = np.concatenate([labels, labels])
    tr, va = stratified_split(labels, frac, np.random.default_rng(0))
    assert sorted(np.concatenate([tr, va]).tolist()) == list(range(len(labels)))
    for c in np.unique(labels):
        assert (labels[va] == c).sum() >= 1 and (labels[tr] == c).sum() >= 1


def test_evaluate_accuracy():
    net = Network((2,), [Dense(3)])
    net.layers[0].params = {"W": np.zeros((3, 2)), "b": np.array([0.0, 1.0, 0.0])}
    acc, conf = evaluate_accuracy(net, np.zeros((5, 2)), [1, 1, 1, 0, 2])
    assert acc == pytest.approx(0.6) and conf[:, 1].tolist() == [1, 3, 1]
    net.layers[0].params["b"] = np.zeros(3)
    assert evaluate_accuracy(net, np.zeros((2, 2)), [0, 1])[1][:, 0].tolist() == [1, 1, 0]


def test_memorizer_is_perfect():
    x = np.eye(4)
    net = Network((4,), [Dense(4)])
    net.layers[0].params = {"W": np.eye(4), "b": np.zeros(4)}
    assert evaluate_accuracy(net, x, [0, 1, 2, 3])[0] == 1.0


def test_model_roundtrip(tmp_path):
    net = default_network(3, (3, 16, 16), seed=3)
    net.layers[0].frozen = True
    net.layers[-1].lr_factor = 20.0
    save_model(tmp_path / "m.gsnn", net)
    head = (tmp_path / "m.gsnn").read_bytes().split(b"\nend\n")[0].decode()
    assert head.splitlines()[:3] == ["GSNN1", "input 3 16 16", "conv 16 5 1 2 frozen=1 lr=1.0"]
    back = load_model(tmp_path / "m.gsnn")
    assert back.layers[0].frozen and back.layers[-1].lr_factor == 20.0
    for (_, _, p), (_, _, q) in zip(net.param_items(), back.param_items()):
        np.testing.assert_array_equal(q, p.astype(np.float32))


def test_history_csv(tmp_path):
    x, y = _blobs(6)
    _, hist = fine_tune(_small_base(), x, y, TrainConfig(max_epochs=2, batch_size=4))
    write_history(tmp_path / "h.csv", hist)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_acc" and len(lines) == 3
