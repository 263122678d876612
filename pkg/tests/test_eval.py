"""
评估测试：相关系数-时移曲线、上升时间、稀疏度、闭环报告与消融表
"""
import numpy as np
import pytest

from app.core.exceptions import ConfigError, InvalidSequenceError
from app.dataset.sequences import SequenceBatch
from app.eval.correlation import (
    correlation_vs_shift,
    curve_from_outputs,
    peak_shifts,
    shifted_pearson,
    write_correlation_csv,
)
from app.eval.report import ABLATION_COLUMNS, ablation_frame, ablation_table, load_report, write_report
from app.eval.sparsity import sparsity, stats_from_fractions
from app.eval.step_response import rise_time, step_response_suite
from app.schemas.reports import ClosedLoopReport, EvalReport
from app.snn.core import run_sequence
from app.snn.losses import pearson


def _delayed(k, T=500, C=2, seed=0):
    rng = np.random.default_rng(seed)
    targets = rng.standard_normal((1, T, C))
    outputs = rng.standard_normal((1, T, C))
    outputs[:, k:] = targets[:, :T - k]
    return outputs, targets


@pytest.mark.parametrize("k", [0, 3, 6])
def test_delayed_output_peaks_at_its_lag(k):
    outputs, targets = _delayed(k)
    curve = curve_from_outputs(outputs, targets, 10, ["a", "b"])
    assert curve.peak_shift == k
    assert peak_shifts(curve) == [k, k]
    np.testing.assert_allclose(shifted_pearson(outputs, targets, k), 1.0)


def test_zero_shift_uses_training_pearson():
    outputs, targets = _delayed(0, seed=1)
    outputs = outputs + 0.5 * np.random.default_rng(2).standard_normal(outputs.shape)
    rho, _ = pearson(outputs, targets)
    np.testing.assert_allclose(shifted_pearson(outputs, targets, 0), rho[0])


def test_shift_must_leave_two_samples():
    outputs, targets = _delayed(0, T=10)
    shifted_pearson(outputs, targets, 8)
    with pytest.raises(InvalidSequenceError):
        shifted_pearson(outputs, targets, 9)


def test_network_correlation_curve(make_net):
    """目标取网络输出提前 4 步的序列，曲线峰值应落在 d=4"""
    net = make_net(widths=[6], n_in=2, n_out=2, seed=3)
    net.layers[0].w_ff *= 5.0
    inputs = np.random.default_rng(4).normal(0, 2.0, (2, 300, 2))
    outputs = run_sequence(net, inputs).outputs
    targets = np.random.default_rng(5).standard_normal(outputs.shape)
    targets[:, :-4] = outputs[:, 4:]
    corpus = SequenceBatch(inputs=inputs, targets=targets, role="merged", shift=0,
                           input_labels=list(net.input_labels), target_labels=list(net.output_labels))
    curve = correlation_vs_shift(net, corpus, shift_range=8)
    assert curve.channels == ["y0", "y1"]
    assert len(curve.shifts) == 17
    assert curve.peak_shift == 4


def test_correlation_csv(tmp_path):
    outputs, targets = _delayed(2, T=100)
    curve = curve_from_outputs(outputs, targets, 5, ["tq_roll", "tq_pitch"])
    write_correlation_csv(curve, tmp_path / "corr_vs_shift.csv")
    lines = (tmp_path / "corr_vs_shift.csv").read_text().splitlines()
    assert lines[0] == "d,tq_roll,tq_pitch"
    assert len(lines) == 12


def test_first_order_rise_time():
    tau = 0.05
    t = np.arange(0, 1.0, 0.002)
    y = 10.0 * (1 - np.exp(-t / tau))
    assert rise_time(t, y, 0.0, 10.0) == pytest.approx(np.log(9) * tau, abs=0.002)


def test_rise_time_edge_cases():
    t = np.arange(0, 1.0, 0.002)
    assert rise_time(t, 0.5 * np.ones_like(t), 0.0, 1.0) is None
    with pytest.raises(ValueError):
        rise_time(t, t, 1.0, 1.0)


def test_silent_network_has_zero_sparsity(make_net):
    net = make_net(widths=[4, 3], n_in=2)
    for layer in net.layers:
        layer.theta[:] = 1e12
    stats = sparsity(net, np.random.default_rng(0).standard_normal((2, 50, 2)))
    assert stats.mean == 0.0
    assert stats.per_layer == [0.0, 0.0]
    assert stats.histogram[0] == 50
    assert sum(stats.histogram) == 50


def test_fraction_histogram():
    stats = stats_from_fractions(np.array([0.0, 0.01, 0.5, 1.0]))
    assert stats.mean == pytest.approx(0.3775)
    assert len(stats.bin_edges) == len(stats.histogram) + 1
    assert stats.histogram[0] == 2 and stats.histogram[-1] == 1


def test_suite_needs_two_runs(quiet_sim_config):
    with pytest.raises(ConfigError):
        step_response_suite(quiet_sim_config, n_runs=1)


def test_expert_step_suite(quiet_sim_config):
    report, trace = step_response_suite(quiet_sim_config, controller="expert", n_runs=2)
    assert not report.void
    cl = report.closed_loop
    assert len(cl.rise_times_ms) == 2
    assert 100 <= cl.rise_time_ms <= 200
    # 无噪声、无偏置时各次运行完全一致
    assert cl.sd_deg == pytest.approx(0.0, abs=1e-9)
    assert cl.rmse_true_deg > 0
    assert cl.sparsity is None
    frame = trace.to_frame()
    assert list(frame.columns) == ["controller", "t", "setpoint_deg", "mean_deg", "sd_deg"]
    assert len(frame) == 3750


def test_per_run_seeds_draw_different_sensor_biases(quiet_sim_config):
    """零偏上限不为 0 时，每次运行按自己的种子抽取零偏，结果不再一致"""
    cfg = quiet_sim_config.model_copy(
        update={"imu": quiet_sim_config.imu.model_copy(update={"gyro_bias_max": 0.02})})
    report, _ = step_response_suite(cfg, controller="expert", n_runs=2)
    assert not report.void
    assert report.seeds == [0, 1]
    assert report.closed_loop.sd_deg > 0


def _report(name, rmse=None, void=False):
    cl = None if rmse is None else ClosedLoopReport(rmse_true_deg=rmse, rmse_est_deg=rmse, sd_deg=0.1,
                                                   rise_time_ms=150.0, sparsity=0.05)
    return EvalReport(controller=name, closed_loop=cl, void=void, void_reason="diverged" if void else None)


def test_ablation_table_marks_void_reports():
    reports = {"expert PID": _report("expert", 1.2), "baseline": _report("snn", void=True)}
    frame = ablation_frame(reports)
    assert list(frame.columns) == ABLATION_COLUMNS
    assert frame["variant"].tolist() == ["expert PID", "baseline"]
    text = ablation_table(reports)
    assert "baseline (void)" in text
    assert "1.20" in text


def test_report_round_trip(tmp_path):
    report = _report("snn", 2.5)
    path = write_report(report, tmp_path / "closed_loop.json")
    assert load_report(path) == report
    assert path.read_text() == write_report(report, tmp_path / "again.json").read_text()


def _relay(make_net, depth=3):
    """每层一个神经元、无泄漏、阈值 0.5：每层把输入脉冲延迟一步"""
    net = make_net(widths=[1] * depth, n_in=1, n_out=1)
    for layer in net.layers:
        layer.tau_mem[:] = 0.0
        layer.tau_syn[:] = 0.0
        layer.theta[:] = 0.5
        layer.w_ff[:] = 1.0
    net.w_decode[:] = 1.0
    return net


def _pulse_corpus(pulses, lead=0):
    """输入比目标提前 lead 步"""
    T = pulses.shape[1] - lead
    return SequenceBatch(inputs=pulses[:, lead:lead + T], targets=pulses[:, :T], role="merged", shift=0,
                         input_labels=["x0"], target_labels=["y0"])


def test_pipeline_latency_shows_in_correlation_peak(make_net):
    """三层网络输出滞后目标 3 步；输入提前 6 步时峰值至少向 0 移动 3 步"""
    net = _relay(make_net)
    pulses = (np.random.default_rng(0).random((2, 406, 1)) < 0.3).astype(np.float64)
    lagging = correlation_vs_shift(net, _pulse_corpus(pulses[:, :400]), shift_range=8)
    leading = correlation_vs_shift(net, _pulse_corpus(pulses, lead=6), shift_range=8)
    assert lagging.peak_shift == 3
    assert leading.peak_shift <= lagging.peak_shift - 3
    assert leading.peak_shift == -3


def test_relay_sparsity_lands_in_band(make_net):
    net = _relay(make_net)
    pulses = (np.random.default_rng(1).random((2, 400, 1)) < 0.15).astype(np.float64)
    stats = sparsity(net, pulses)
    # 第 k 层的脉冲序列为输入延迟 k 步
    expected = sum(pulses[:, :400 - k].sum() for k in (1, 2, 3)) / (3 * 2 * 400)
    assert stats.mean == pytest.approx(expected)
    assert 0.10 <= stats.mean <= 0.25
    assert stats.per_layer[0] == pytest.approx(pulses[:, :399].sum() / (2 * 400))
