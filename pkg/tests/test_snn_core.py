"""
CUBA-LIF 前向动力学测试
"""
from fractions import Fraction

import numpy as np
import pytest

from app.core.config import DT, PidGainsConfig
from app.core.exceptions import StructuralError
from app.snn.core import LayerParams, LayerState, layer_step, network_step, reset_states, run_sequence


def _single(tau_mem=1.0, tau_syn=1.0, theta=1.0, w_rec=None):
    return LayerParams(
        tau_mem=np.array([tau_mem]), tau_syn=np.array([tau_syn]), theta=np.array([theta]),
        w_ff=np.ones((1, 1)), w_rec=None if w_rec is None else np.array([[w_rec]]),
    )


def _state(v=0.0, i=0.0, s=0.0):
    return LayerState(v=np.array([v]), i_syn=np.array([i]), s=np.array([s]))


def test_integrator_first_spike_at_step_four():
    """tau = theta = 1，恒定输入 0.3：第 3 步 v = 0.9 不放电，第 4 步 v = 1.8 放电"""
    params = _single()
    state = _state()
    voltages, spikes = [], []
    for _ in range(4):
        state, s = layer_step(params, state, np.array([0.3]))
        voltages.append(float(state.v[0]))
        spikes.append(float(s[0]))
    assert spikes == [0.0, 0.0, 0.0, 1.0]
    np.testing.assert_allclose(voltages[:3], [0.0, 0.3, 0.9])
    assert voltages[3] == 0.0  # 复位
    np.testing.assert_allclose(state.i_syn, [1.2])


def test_pure_leak():
    state, s = layer_step(_single(tau_mem=0.5, tau_syn=0.0), _state(v=0.8), np.array([0.0]))
    np.testing.assert_allclose(state.v, [0.4])
    np.testing.assert_allclose(state.i_syn, [0.0])
    assert s[0] == 0.0


def test_threshold_is_strict():
    state, s = layer_step(_single(), _state(v=1.0), np.array([0.0]))
    assert s[0] == 0.0
    assert state.v[0] == 1.0


def test_hard_reset_after_spike():
    state, s = layer_step(_single(), _state(v=0.9, i=0.5), np.array([0.0]))
    assert s[0] == 1.0
    assert state.v[0] == 0.0


def test_recurrent_input_uses_previous_spikes():
    state, _ = layer_step(_single(tau_syn=0.5, w_rec=0.5), _state(i=0.2, s=1.0), np.array([0.1]))
    np.testing.assert_allclose(state.i_syn, [0.5 * 0.2 + 0.1 + 0.5])


def test_layer_step_dimension_mismatch():
    with pytest.raises(StructuralError):
        layer_step(_single(), _state(), np.zeros(2))


def test_zero_weights_give_zero_output(make_net):
    net = make_net(widths=[5, 4], recurrent=[False, True], n_in=3, n_out=2)
    for layer in net.layers:
        layer.w_ff[:] = 0
        layer.w_rec = None if layer.w_rec is None else np.zeros_like(layer.w_rec)
    result = run_sequence(net, np.random.default_rng(0).standard_normal((50, 3)))
    assert result.outputs.shape == (50, 2)
    assert not np.any(result.outputs)
    assert result.firing_fraction.sum() == 0


def test_run_sequence_is_deterministic_and_batch_consistent(make_net):
    net = make_net(widths=[6], recurrent=[True], n_in=3, n_out=2, seed=4)
    inputs = 2.0 * np.random.default_rng(1).standard_normal((3, 40, 3))
    batched = run_sequence(net, inputs).outputs
    again = run_sequence(net, inputs).outputs
    np.testing.assert_array_equal(batched, again)
    for b in range(3):
        np.testing.assert_array_equal(run_sequence(net, inputs[b]).outputs, batched[b])


def test_network_step_matches_run_sequence(make_net):
    net = make_net(widths=[4, 3], recurrent=[True, False], n_in=2, n_out=1, seed=2)
    inputs = 3.0 * np.random.default_rng(2).standard_normal((30, 2))
    states = reset_states(net)
    stepped = []
    for x in inputs:
        states, out, _ = network_step(net, states, x)
        stepped.append(out)
    np.testing.assert_array_equal(np.array(stepped), run_sequence(net, inputs).outputs)


def test_network_step_rejects_wrong_input_width(make_net):
    net = make_net(n_in=2)
    with pytest.raises(StructuralError):
        network_step(net, reset_states(net), np.zeros(3))


def test_frozen_neurons_must_be_pure_integrators(make_net):
    net = make_net(widths=[4], n_integrators=2)
    net.validate()
    net.layers[0].theta[0] = 0.5
    with pytest.raises(StructuralError):
        net.validate()


def test_readout_window_smooths_outputs(make_net):
    net = make_net(widths=[4], n_in=2, n_out=1, seed=3)
    inputs = 3.0 * np.random.default_rng(3).standard_normal((60, 2))
    raw = run_sequence(net, inputs).outputs
    net.readout_window = 10
    smoothed = run_sequence(net, inputs).outputs
    expected = np.zeros_like(raw)
    z = np.zeros(raw.shape[1])
    for t in range(raw.shape[0]):
        z = 0.9 * z + 0.1 * raw[t]
        expected[t] = z
    np.testing.assert_allclose(smoothed, expected, atol=1e-12)


def test_leak_never_grows_the_state():
    """零输入、无递归：泄漏因子 <= 1 时 |i| 逐步不增；i 从 0 开始时 |v| 也不增"""
    rng = np.random.default_rng(0)
    n = 50
    params = LayerParams(
        tau_mem=rng.uniform(0, 1, n), tau_syn=rng.uniform(0, 1, n), theta=np.ones(n), w_ff=np.zeros((n, 1)),
    )
    zero = np.zeros(n)

    state = LayerState(v=rng.uniform(-2, 2, n), i_syn=zero.copy(), s=zero.copy())
    for _ in range(100):
        new, _ = layer_step(params, state, zero)
        assert np.all(np.abs(new.v) <= np.abs(state.v))
        state = new

    state = LayerState(v=zero.copy(), i_syn=rng.uniform(-2, 2, n), s=zero.copy())
    for _ in range(100):
        new, _ = layer_step(params, state, zero)
        assert np.all(np.abs(new.i_syn) <= np.abs(state.i_syn))
        state = new


def _accumulate_and_fire(inputs):
    """精确有理数下的积分神经元：返回逐步累计脉冲数"""
    v, i, count, counts = Fraction(0), Fraction(0), 0, []
    for x in inputs:
        v, i = v + i, i + Fraction(float(x))
        if v > 1:
            count += 1
            v = Fraction(0)
        counts.append(count)
    return np.array(counts)


@pytest.mark.parametrize("seed", range(5))
def test_integrator_neuron_matches_exact_accumulator(make_net, seed):
    net = make_net(widths=[1], n_in=1, n_out=1, n_integrators=1)
    net.layers[0].w_ff[:] = 1.0
    inputs = np.random.default_rng(seed).uniform(0, 1e-4, (2000, 1))
    states = reset_states(net)
    fired = []
    for x in inputs:
        states, _, spikes = network_step(net, states, x)
        fired.append(spikes[0][0])
    counts = np.cumsum(fired)
    assert counts[-1] > 50
    assert np.max(np.abs(counts - _accumulate_and_fire(inputs[:, 0]))) <= 1


def test_integrator_slope_follows_integral_gain(make_net):
    """
    恒定误差 e 下，积分神经元解码输出的斜率 ≈ 专家积分增益 × e × DT（每步）

    电流 i(t) = a·e·t，放电率 ≈ i(t)，因此解码斜率为 w_decode·a·e
    """
    ki = PidGainsConfig().rate_i[0]
    e, a, T = 0.05, 1.25e-4, 8000
    net = make_net(widths=[1], n_in=1, n_out=1, n_integrators=1)
    net.layers[0].w_ff[:] = a
    net.w_decode[:] = ki * DT / a
    net.readout_window = 10

    outputs = run_sequence(net, np.full((T, 1), e)).outputs[:, 0]
    t = np.arange(T)
    slope = np.polyfit(t[net.readout_window:], outputs[net.readout_window:], 1)[0]
    assert slope == pytest.approx(ki * e * DT, rel=0.1)

    silent = run_sequence(net, np.zeros((T, 1))).outputs
    assert not np.any(silent)
