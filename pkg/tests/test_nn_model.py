import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from milp_safeguard.nn_model import (
    Interval,
    LayerParams,
    ReluNetwork,
    box_to_intervals,
    build_identity_sum_network,
    forward,
    interval_forward,
    linear_bounds,
    load_network,
    preactivation_bounds,
    relu_interval,
    save_network,
)
from milp_safeguard.sets import Hypercube


def small_net():
    return ReluNetwork((
        LayerParams(np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([0.0, -1.0])),
        LayerParams(np.array([[1.0, 1.0]]), np.array([0.5])),
    ))


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(0.0, np.inf)


def test_layer_validation():
    with pytest.raises(ValueError):
        LayerParams(np.array([[1.0, 2.0]]), np.array([0.0, 0.0]))


def test_network_dimension_chain():
    with pytest.raises(ValueError):
        ReluNetwork((
            LayerParams(np.eye(2), np.zeros(2)),
            LayerParams(np.eye(3), np.zeros(3)),
        ))


def test_forward_matches_manual():
    net = small_net()
    z = np.array([1.0, 2.0])
    h = np.maximum(0.0, np.array([[1, -1], [0.5, 2]]) @ z + np.array([0, -1]))
    expected = np.array([[1.0, 1.0]]) @ h + 0.5
    assert np.allclose(forward(net, z), expected)


def test_relu_interval_cases():
    assert relu_interval(Interval(-2.0, -1.0)) == Interval(0.0, 0.0)
    assert relu_interval(Interval(-1.0, 2.0)) == Interval(0.0, 2.0)
    assert relu_interval(Interval(1.0, 2.0)) == Interval(1.0, 2.0)


def test_linear_bounds_sign_switch():
    W = np.array([[2.0, -3.0]])
    b = np.array([1.0])
    lo, hi = linear_bounds(W, b, np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
    # 2x - 3y + 1 over x in [-1,1], y in [0,2].
    assert np.allclose(lo, [2 * -1 - 3 * 2 + 1])
    assert np.allclose(hi, [2 * 1 - 3 * 0 + 1])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_interval_forward_is_sound(seed):
    rng = np.random.default_rng(seed)
    sizes = [3, rng.integers(1, 6), rng.integers(1, 6), 2]
    layers = tuple(
        LayerParams(rng.normal(size=(o, i)), rng.normal(size=o))
        for i, o in zip(sizes, sizes[1:])
    )
    net = ReluNetwork(layers)
    lo = rng.uniform(-2, 0, 3)
    hi = lo + rng.uniform(0, 2, 3)
    bounds = interval_forward(net, box_to_intervals(Hypercube(lo, hi)))
    out_box = bounds.output_box()
    for z in Hypercube(lo, hi).sample(rng, 50):
        assert out_box.contains(forward(net, z), tol=1e-9)


def test_preactivation_bounds_cover_samples():
    rng = np.random.default_rng(0)
    net = ReluNetwork((
        LayerParams(rng.normal(size=(4, 4)), rng.normal(size=4)),
        LayerParams(rng.normal(size=(2, 4)), rng.normal(size=2)),
    ))
    X = Hypercube(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    U = Hypercube(np.array([-0.5, -0.5]), np.array([0.5, 0.5]))
    lb = preactivation_bounds(net, X, U)
    for z in X.concat(U).sample(rng, 100):
        h = z
        for i, layer in enumerate(net.layers[:-1]):
            pre = layer.weights @ h + layer.bias
            plo, phi = lb.preact_arrays(i)
            assert np.all(pre >= plo - 1e-9) and np.all(pre <= phi + 1e-9)
            h = np.maximum(0.0, pre)


def test_identity_sum_network_is_exact():
    X = Hypercube(np.array([-1.0, -1.0]), np.array([10.0, 10.0]))
    U = Hypercube(np.array([-0.25, -0.25]), np.array([0.25, 0.25]))
    net = build_identity_sum_network(X, U)
    rng = np.random.default_rng(1)
    for z in X.concat(U).sample(rng, 200):
        assert np.allclose(forward(net, z), z[:2] + z[2:], atol=1e-12)


def test_identity_sum_hidden_units_stay_active():
    X = Hypercube(np.array([-1.0, -1.0]), np.array([10.0, 10.0]))
    U = Hypercube(np.array([-0.25, -0.25]), np.array([0.25, 0.25]))
    net = build_identity_sum_network(X, U)
    lb = preactivation_bounds(net, X, U)
    plo, _ = lb.preact_arrays(0)
    assert np.all(plo > 0)


def test_save_load_round_trip(tmp_path):
    net = small_net()
    path = tmp_path / "net.json"
    save_network(net, path)
    loaded = load_network(path)
    for a, b in zip(net.layers, loaded.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"layers": [{"weights": "nope"}]}')
    with pytest.raises(ValueError):
        load_network(path)
