"""
BPTT 梯度与优化器测试

平滑前向（代理梯度原函数代替阶跃）下的损失处处可导，反向传播结果应与中心差分一致
"""
import numpy as np
import pytest

from app.snn.bptt import bptt_grads, forward_trace
from app.snn.losses import loss
from app.snn.optim import Adam, apply_constraints, named_parameters, select_parameters

SLOPE = 7.0
T = 20


def _smooth_loss(net, inputs, targets):
    return loss(forward_trace(net, inputs, SLOPE, mode="smooth").outputs, targets, 1.0, 0.5).total


def _finite_differences(net, inputs, targets, h=1e-6):
    numeric = {}
    for name, param in named_parameters(net).items():
        g = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + h
            up = _smooth_loss(net, inputs, targets)
            param[idx] = saved - h
            down = _smooth_loss(net, inputs, targets)
            param[idx] = saved
            g[idx] = (up - down) / (2 * h)
        numeric[name] = g
    return numeric


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("widths,recurrent", [([3], [True]), ([3, 2], [False, True])])
def test_gradients_match_finite_differences(make_net, seed, widths, recurrent):
    net = make_net(widths=widths, recurrent=recurrent, n_in=2, n_out=1, seed=seed)
    assert sum(p.size for p in named_parameters(net).values()) <= 50
    rng = np.random.default_rng(100 + seed)
    inputs = rng.standard_normal((2, T, 2))
    targets = rng.standard_normal((2, T, 1))

    _, analytic = bptt_grads(net, inputs, targets, SLOPE, 1.0, 0.5, mode="smooth")
    numeric = _finite_differences(net, inputs, targets)
    assert set(analytic) == set(numeric)
    for name in numeric:
        a, b = analytic[name], numeric[name]
        bound = 1e-4 * np.maximum(np.abs(a), np.abs(b)) + 1e-8
        assert np.all(np.abs(a - b) <= bound), f"{name}: analytic {a} vs numeric {b}"


def test_binary_gradients_cover_all_parameters(make_net):
    net = make_net(widths=[5, 4], recurrent=[False, True], n_in=3, n_out=2)
    rng = np.random.default_rng(0)
    breakdown, grads = bptt_grads(net, 3 * rng.standard_normal((2, 30, 3)), rng.standard_normal((2, 30, 2)), SLOPE)
    params = named_parameters(net)
    assert list(grads) != [] and set(grads) == set(params)
    for name, p in params.items():
        assert grads[name].shape == p.shape
    assert breakdown.total == pytest.approx(breakdown.mse + breakdown.pearson_term)


def test_frozen_neurons_get_no_dynamics_gradient(make_net):
    net = make_net(widths=[5], recurrent=[True], n_in=2, n_out=2, n_integrators=2)
    rng = np.random.default_rng(1)
    _, grads = bptt_grads(net, rng.standard_normal((2, T, 2)), rng.standard_normal((2, T, 2)), SLOPE, mode="smooth")
    for name in ("tau_mem", "tau_syn", "theta"):
        assert not np.any(grads[f"layers.0.{name}"][:2])
    assert not np.any(grads["layers.0.w_rec"][:2])
    assert np.any(grads["layers.0.w_ff"][:2])


def test_apply_constraints(make_net):
    net = make_net(widths=[4], recurrent=[True], n_integrators=1)
    layer = net.layers[0]
    layer.tau_mem[:] = [0.5, 1.5, -0.2, 0.7]
    layer.theta[:] = [2.0, 0.001, 1.0, -1.0]
    layer.w_rec[0, :] = 0.3
    apply_constraints(net, tau_min=0.0, tau_max=1.0, theta_min=0.01)
    np.testing.assert_allclose(layer.tau_mem, [1.0, 1.0, 0.0, 0.7])
    np.testing.assert_allclose(layer.theta, [1.0, 0.01, 1.0, 0.01])
    assert not np.any(layer.w_rec[0])


def test_adam_updates_only_selected_parameters(make_net):
    net = make_net(widths=[4], recurrent=[True], n_in=2, n_out=1)
    params = named_parameters(net)
    before = {name: p.copy() for name, p in params.items()}
    names = select_parameters(net, ["w_decode"])
    assert names == ["w_decode"]
    optimizer = Adam(names, learning_rate=1e-2)
    optimizer.step(params, {name: np.ones_like(p) for name, p in params.items()})
    for name, p in params.items():
        if name == "w_decode":
            np.testing.assert_allclose(before[name] - p, 1e-2, rtol=1e-6)
        else:
            np.testing.assert_array_equal(before[name], p)
