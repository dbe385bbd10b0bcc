import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fipinn.nn import (
    ConfigurationError,
    Network,
    forward,
    forward_jet,
    init_network,
    n_params,
    param_gradient,
    record,
)


def scalar_forward(net, x):
    """Loop-based evaluator that shares no code with the vectorized path."""
    widths = net.layer_widths
    p = list(net.params)
    h = [float(v) for v in x]
    pos = 0
    for li, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        W = p[pos:pos + a * b]
        pos += a * b
        bias = p[pos:pos + b]
        pos += b
        z = [bias[j] + sum(h[i] * W[i * b + j] for i in range(a)) for j in range(b)]
        h = z if li == len(widths) - 2 else [math.tanh(v) for v in z]
    return h[0]


def test_param_count_7x20_architecture():
    widths = [2] + [20] * 7 + [1]
    assert n_params(widths) == 2 * 20 + 20 + 6 * (20 * 20 + 20) + 20 + 1 == 2601
    assert init_network(widths, 0).n_params == 2601


def test_init_zero_biases_and_glorot_bounds():
    net = init_network([3, 5, 1], 4)
    (W1, b1), (W2, b2) = net.layers()
    assert np.all(b1 == 0) and np.all(b2 == 0)
    assert np.abs(W1).max() <= np.sqrt(6 / 8)
    assert np.abs(W2).max() <= np.sqrt(6 / 6)
    assert np.all(init_network([1, 1], 9).layers()[0][1] == 0)


def test_init_deterministic():
    a = init_network([2, 7, 7, 1], 3)
    b = init_network([2, 7, 7, 1], 3)
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, init_network([2, 7, 7, 1], 4).params)


@pytest.mark.parametrize("widths", [[2, 0, 1], [2, -3, 1], [2], [2, 4, 2]])
def test_bad_widths(widths):
    with pytest.raises(ConfigurationError):
        init_network(widths, 0)


def test_zero_weights_give_output_bias():
    net = init_network([3, 4, 1], 0)
    p = np.zeros(net.n_params)
    p[-1] = 2.5
    assert forward(net.with_params(p), [0.3, -1.0, 7.0]) == 2.5


def test_single_unit_tanh_zero():
    net = Network((1, 1, 1), np.array([0.0, 0.0, 1.0, 0.0]))
    assert forward(net, [0.7]) == 0.0


def test_dimension_mismatch():
    net = init_network([2, 3, 1], 0)
    with pytest.raises(ValueError):
        forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        forward_jet(net, np.zeros((4, 3)))


def test_forward_matches_scalar_evaluator(rng):
    net = init_network([3, 6, 5, 1], 1)
    for x in rng.uniform(-2, 2, size=(20, 3)):
        assert abs(forward(net, x) - scalar_forward(net, x)) < 1e-12


@pytest.mark.parametrize("mode", ["grad", "hess_diag", "hess_full"])
def test_jet_value_bit_identical(mode, rng):
    net = init_network([3, 8, 8, 1], 2)
    X = rng.normal(size=(50, 3))
    assert np.array_equal(forward_jet(net, X, mode).value, forward(net, X))
    assert forward_jet(net, X[0], mode).value == forward(net, X[0])


def test_hessian_full_symmetric_and_diag_consistent(rng):
    net = init_network([3, 8, 8, 1], 5)
    X = rng.normal(size=(30, 3))
    H = forward_jet(net, X, "hess_full").hess
    D = forward_jet(net, X, "hess_diag").hess
    assert np.max(np.abs(H - np.swapaxes(H, 1, 2))) <= 1e-12 * np.max(np.abs(H))
    assert np.max(np.abs(np.diagonal(H, axis1=1, axis2=2) - D)) <= 1e-12


def test_near_linear_net_has_tiny_hessian(rng):
    net = init_network([2, 6, 1], 0)
    net = net.with_params(net.params * 1e-4)
    H = forward_jet(net, rng.normal(size=(10, 2)), "hess_full").hess
    assert np.abs(H).max() < 1e-8


def test_custom_second_channel_is_laplacian(rng):
    net = init_network([3, 7, 7, 1], 8)
    X = rng.normal(size=(12, 3))
    lap = record(net, X, second=[np.eye(3)]).second[:, 0]
    assert np.allclose(lap, forward_jet(net, X, "hess_diag").hess.sum(axis=1), rtol=0, atol=1e-12)


def test_zero_adjoint_gives_zero_gradient(rng):
    net = init_network([2, 5, 1], 0)
    X = rng.normal(size=(4, 2))
    assert np.all(param_gradient(net, X, adj_value=np.zeros(4)) == 0)


def test_duplicate_point_doubles_gradient(rng):
    net = init_network([2, 5, 5, 1], 0)
    x = rng.normal(size=(1, 2))
    g1 = param_gradient(net, x, "hess_diag", adj_value=[1.0], adj_hess=[[1.0, 1.0]])
    g2 = param_gradient(net, np.vstack([x, x]), "hess_diag", adj_value=[1.0, 1.0],
                        adj_hess=[[1.0, 1.0], [1.0, 1.0]])
    # BLAS reduction order differs between one and two points, so compare to rounding level
    assert np.max(np.abs(g2 - 2 * g1)) <= 1e-12 * np.max(np.abs(g1))


def test_empty_batch_rejected():
    net = init_network([2, 3, 1], 0)
    with pytest.raises(ValueError):
        param_gradient(net, np.empty((0, 2)), adj_value=np.empty(0))


def test_squared_output_gradient_vs_fd(rng):
    net = init_network([2, 10, 10, 1], 3)
    x0 = rng.normal(size=2)
    u0 = forward(net, x0)
    g = param_gradient(net, x0[None], "grad", adj_value=[2 * u0])
    for i in rng.choice(net.n_params, 20, replace=False):
        e = np.zeros(net.n_params)
        e[i] = 1e-6
        fd = (forward(net.with_params(net.params + e), x0) ** 2
              - forward(net.with_params(net.params - e), x0) ** 2) / 2e-6
        assert abs(fd - g[i]) <= 1e-5 * max(abs(fd), 1e-3)


def test_checkpoint_round_trip(tmp_path):
    net = init_network([2, 4, 1], 11)
    path = tmp_path / "net.json"
    net.save(path)
    data = json.loads(path.read_text())
    assert data["layer_widths"] == [2, 4, 1] and data["seed"] == 11
    back = Network.load(path)
    assert np.array_equal(back.params, net.params)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), d=st.integers(1, 3), depth=st.integers(1, 2))
def test_determinism_property(seed, d, depth):
    widths = [d] + [6] * depth + [1]
    a, b = init_network(widths, seed), init_network(widths, seed)
    X = np.random.default_rng(seed).normal(size=(5, d))
    ja, jb = forward_jet(a, X, "hess_diag"), forward_jet(b, X, "hess_diag")
    assert np.array_equal(ja.hess, jb.hess)
    ga = param_gradient(a, X, "hess_diag", adj_hess=np.ones((5, d)))
    gb = param_gradient(b, X, "hess_diag", adj_hess=np.ones((5, d)))
    assert np.array_equal(ga, gb)
