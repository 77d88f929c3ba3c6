import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbopt.domain import CategoricalDomain, binary_domain
from mbopt.surrogate import (
    Dataset,
    MLPSurrogate,
    RewardScaler,
    TrainConfig,
    fit,
    fit_scaler,
    init_network,
    load_checkpoint,
    loss_gradient,
    predict,
    save_checkpoint,
)


def _loop_forward(layers, x):
    """Independent scalar-arithmetic forward pass (no numpy linear algebra)."""
    h = list(x)
    for idx, (W, b) in enumerate(layers):
        nxt = []
        for k in range(len(b)):
            acc = b[k]
            for i, v in enumerate(h):
                acc += W[k][i] * v
            nxt.append(max(acc, 0.0) if idx < len(layers) - 1 else acc)
        h = nxt
    return h[0]


def _random_net(rng, width, hidden):
    net = init_network(width, hidden, rng)
    for W, b in net.layers:  # non-zero biases to exercise them
        b += rng.normal(scale=0.3, size=b.shape)
    return net


@given(st.integers(0, 10_000))
def test_forward_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    width = int(rng.integers(2, 7))
    hidden = tuple(int(h) for h in rng.integers(1, 5, size=rng.integers(1, 3)))
    net = _random_net(rng, width, hidden)
    x = rng.normal(size=width)
    expected = _loop_forward([(W.tolist(), b.tolist()) for W, b in net.layers], x.tolist())
    assert math.isclose(float(net.forward(x)), expected, rel_tol=1e-12, abs_tol=1e-12)


def test_forward_batch_matches_single():
    rng = np.random.default_rng(3)
    net = _random_net(rng, 5, (4, 3))
    X = rng.normal(size=(8, 5))
    batch = net.forward(X)
    singles = np.array([net.forward(row) for row in X])
    np.testing.assert_allclose(batch, singles, rtol=1e-13)


def test_forward_is_piecewise_linear_between_close_points():
    # Within one activation region the map is affine, so the midpoint value
    # is the average of the endpoint values.
    rng = np.random.default_rng(7)
    net = _random_net(rng, 4, (6,))
    x = rng.normal(size=4)
    d = rng.normal(size=4) * 1e-6
    lo, hi, mid = net.forward(x - d), net.forward(x + d), net.forward(x)
    assert abs((lo + hi) / 2 - mid) < 1e-9


def test_network_shape_validation():
    with pytest.raises(ValueError, match="at least one layer"):
        MLPSurrogate([])
    with pytest.raises(ValueError, match="single unit"):
        MLPSurrogate([(np.zeros((2, 3)), np.zeros(2))])
    with pytest.raises(ValueError, match="inconsistent"):
        MLPSurrogate([(np.zeros((2, 3)), np.zeros(3))])
    with pytest.raises(ValueError, match="does not match"):
        MLPSurrogate([(np.zeros((2, 3)), np.zeros(2)), (np.zeros((1, 5)), np.zeros(1))])


def test_init_network_glorot_ranges_and_zero_biases():
    rng = np.random.default_rng(0)
    net = init_network(20, (16,), rng)
    (W1, b1), (W2, b2) = net.layers
    assert np.all(b1 == 0) and np.all(b2 == 0)
    assert np.max(np.abs(W1)) <= math.sqrt(6.0 / (20 + 16))
    assert np.max(np.abs(W2)) <= math.sqrt(6.0 / (16 + 1))
    # draws should roughly fill the range
    assert np.max(np.abs(W1)) > 0.8 * math.sqrt(6.0 / (20 + 16))


# -- scaler ---------------------------------------------------------------


def test_scaler_maps_min_max_to_unit_interval():
    s = fit_scaler([2.0, 4.0, 10.0])
    np.testing.assert_allclose(s.apply([2.0, 10.0, 6.0]), [-1.0, 1.0, 0.0])
    np.testing.assert_allclose(s.inverse(s.apply([3.3, 7.7])), [3.3, 7.7], rtol=1e-15)


def test_scaler_constant_data_maps_to_zero():
    s = fit_scaler([5.0, 5.0, 5.0])
    np.testing.assert_allclose(s.apply([5.0, 5.0]), [0.0, 0.0])
    assert s.scale == 1.0
    assert float(s.inverse(0.0)) == 5.0


def test_scaler_empty_errors():
    with pytest.raises(ValueError, match="empty"):
        fit_scaler([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=20))
def test_scaler_output_range_property(ys):
    s = fit_scaler(ys)
    out = s.apply(ys)
    assert np.all(out >= -1.0 - 1e-12) and np.all(out <= 1.0 + 1e-12)
    if max(ys) > min(ys):
        assert math.isclose(float(out.min()), -1.0, abs_tol=1e-9)
        assert math.isclose(float(out.max()), 1.0, abs_tol=1e-9)


# -- gradients ------------------------------------------------------------


def _numeric_gradient(net, X, y, eps=1e-6):
    grads = []
    for li, (W, b) in enumerate(net.layers):
        dW = np.zeros_like(W)
        db = np.zeros_like(b)
        for idx in np.ndindex(W.shape):
            W[idx] += eps
            up = float(np.mean((net.forward(X) - y) ** 2))
            W[idx] -= 2 * eps
            dn = float(np.mean((net.forward(X) - y) ** 2))
            W[idx] += eps
            dW[idx] = (up - dn) / (2 * eps)
        for k in range(len(b)):
            b[k] += eps
            up = float(np.mean((net.forward(X) - y) ** 2))
            b[k] -= 2 * eps
            dn = float(np.mean((net.forward(X) - y) ** 2))
            b[k] += eps
            db[k] = (up - dn) / (2 * eps)
        grads.append((dW, db))
    return grads


def test_loss_gradient_matches_central_differences():
    rng = np.random.default_rng(21)
    net = _random_net(rng, 4, (5,))
    X = rng.normal(size=(6, 4))
    y = rng.normal(size=6)
    analytic = loss_gradient(net, X, y)
    numeric = _numeric_gradient(net, X, y)
    for (aW, ab), (nW, nb) in zip(analytic, numeric):
        np.testing.assert_allclose(aW, nW, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(ab, nb, rtol=1e-5, atol=1e-7)


def test_gradient_zero_at_perfect_fit():
    # Output layer alone fits a constant target exactly -> zero gradient.
    net = MLPSurrogate([(np.zeros((1, 3)), np.array([2.0]))])
    g = loss_gradient(net, np.eye(3), np.full(3, 2.0))
    np.testing.assert_array_equal(g[0][0], np.zeros((1, 3)))
    np.testing.assert_array_equal(g[0][1], np.zeros(1))


# -- training -------------------------------------------------------------


def test_train_config_defaults_and_validation():
    cfg = TrainConfig()
    assert cfg.hidden_sizes == (16,)
    assert cfg.learning_rate == 0.01
    assert cfg.adam_betas == (0.9, 0.999)
    assert cfg.epochs == 25000
    assert cfg.batch_size == 64
    with pytest.raises(ValueError):
        TrainConfig(hidden_sizes=())
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(adam_betas=(1.0, 0.999))
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def _toy_data(dom, rng, count):
    pts = set()
    while len(pts) < count:
        pts.add(dom.sample_point(rng))
    pts = sorted(pts)
    f = lambda p: sum((-1.0) ** i * v for i, v in enumerate(p)) + 0.25 * p[0] * p[1]
    return Dataset(list(pts), [f(p) for p in pts])


def test_fit_is_deterministic_and_seed_sensitive():
    dom = binary_domain(6)
    data = _toy_data(dom, np.random.default_rng(0), 20)
    cfg = TrainConfig(epochs=40, seed=9)
    n1, s1 = fit(data, cfg, dom)
    n2, s2 = fit(data, cfg, dom)
    for (W1, b1), (W2, b2) in zip(n1.layers, n2.layers):
        np.testing.assert_array_equal(W1, W2)
        np.testing.assert_array_equal(b1, b2)
    assert (s1.offset, s1.scale) == (s2.offset, s2.scale)
    n3, _ = fit(data, TrainConfig(epochs=40, seed=10), dom)
    assert any(not np.array_equal(W1, W3) for (W1, _), (W3, _) in zip(n1.layers, n3.layers))


def test_fit_interpolates_small_dataset():
    dom = binary_domain(5)
    data = _toy_data(dom, np.random.default_rng(4), 8)
    net, scaler = fit(data, TrainConfig(epochs=800, seed=1), dom)
    preds = [predict(net, scaler, dom, p) for p in data.points]
    np.testing.assert_allclose(preds, data.rewards, atol=0.05)


def test_fit_empty_dataset_errors():
    with pytest.raises(ValueError, match="empty"):
        fit(Dataset(), TrainConfig(epochs=1), binary_domain(3))


def test_adam_first_step_matches_closed_form():
    # With a single linear weight and unit input, the first update has
    # magnitude lr * g / (|g| + eps) regardless of the betas.
    net = MLPSurrogate([(np.array([[1.0]]), np.zeros(1))])
    from mbopt.surrogate import _Adam

    opt = _Adam(net, lr=0.01, betas=(0.9, 0.999))
    g = loss_gradient(net, np.array([[1.0]]), np.array([0.0]))
    # d/dw (w*1 - 0)^2 = 2w = 2
    assert math.isclose(g[0][0][0, 0], 2.0)
    opt.step(net, g)
    expected = 1.0 - 0.01 * 2.0 / (2.0 + 1e-8)
    assert math.isclose(net.layers[0][0][0, 0], expected, rel_tol=1e-12)


def test_dataset_validation_and_append():
    with pytest.raises(ValueError, match="equal length"):
        Dataset([(0, 1)], [])
    d = Dataset()
    d.add((1, 0), 3.5)
    assert len(d) == 1 and d.points == [(1, 0)] and d.rewards == [3.5]


# -- predict and checkpoints ----------------------------------------------


def test_predict_is_scaled_inverse_of_forward():
    dom = CategoricalDomain([(0, 1, 2), (0, 1)])
    rng = np.random.default_rng(2)
    net = _random_net(rng, dom.width, (4,))
    scaler = RewardScaler(offset=10.0, scale=2.5)
    p = (2, 0)
    raw = float(net.forward(dom.encode(p).bits))
    assert math.isclose(predict(net, scaler, dom, p), raw * 2.5 + 10.0, rel_tol=1e-12)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    net = _random_net(rng, 6, (5, 3))
    scaler = RewardScaler(offset=-1.25, scale=0.75)
    path = tmp_path / "ckpt.json"
    save_checkpoint(net, scaler, path)
    net2, scaler2 = load_checkpoint(path)
    for (W1, b1), (W2, b2) in zip(net.layers, net2.layers):
        np.testing.assert_array_equal(W1, W2)
        np.testing.assert_array_equal(b1, b2)
    assert (scaler2.offset, scaler2.scale) == (-1.25, 0.75)
    x = rng.normal(size=6)
    assert net.forward(x) == net2.forward(x)


def test_checkpoint_malformed_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"layers": [{"W": [[1.0]]}]}')
    with pytest.raises(ValueError, match="malformed checkpoint"):
        load_checkpoint(path)
