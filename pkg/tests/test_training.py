"""
子网络训练测试：积分神经元预训练
"""
import numpy as np
import pytest

from app.core.config import DT, TrainConfig
from app.core.exceptions import StructuralError
from app.dataset.sequences import SequenceBatch
from app.sim.models import ESTIMATE_COLUMNS, INTEGRAL_COLUMNS, SETPOINT_COLUMNS
from app.snn.training import compare_integrator_variants, pretrain_integrators


def _integral_batch(seed, B=8, T=400):
    """
    恒定正误差序列：姿态估计为 0，设定值为 e，目标为误差积分 e·t·DT

    误差足够小，使泄漏神经元（tau <= 0.95）的稳态电位远低于阈值，
    而积分神经元的电流随时间线性增长并持续放电
    """
    rng = np.random.default_rng(seed)
    e = rng.uniform(2e-4, 6e-4, (B, 1, 3))
    inputs = np.zeros((B, T, 6))
    inputs[:, :, 3:] = e
    targets = e * (np.arange(1, T + 1)[None, :, None] * DT)
    return SequenceBatch(inputs=inputs, targets=targets, role="integrator", shift=0,
                         input_labels=ESTIMATE_COLUMNS + SETPOINT_COLUMNS, target_labels=list(INTEGRAL_COLUMNS))


def _integrator_config(seed):
    return TrainConfig(widths=[10], recurrent=[False], learning_rate=0.01, batch_size=4, epochs=12,
                       seq_len=400, n_integrators=10, readout_window=10, tau_max=0.95, init_seed=seed)


def test_fixed_integrators_beat_free_neurons():
    """相同种子与训练计划下，固定参数积分块的最终损失低于自由参数对照组"""
    wins = 0
    for seed in range(5):
        results = compare_integrator_variants(_integral_batch(seed), None, _integrator_config(seed))
        assert set(results) == {"fixed", "free"}
        fixed = results["fixed"].net.layers[0]
        assert np.all(fixed.tau_mem == 1) and np.all(fixed.tau_syn == 1) and np.all(fixed.theta == 1)
        assert not np.all(results["free"].net.layers[0].tau_mem == 1)
        wins += results["fixed"].final_loss < results["free"].final_loss
    assert wins >= 4


def test_integrator_block_shape_and_readout():
    cfg = _integrator_config(0).model_copy(update={"epochs": 1, "n_integrators": 4})
    result = pretrain_integrators(_integral_batch(0, B=4), None, cfg)
    net = result.net
    assert net.widths == [4]
    assert net.readout_window == 10
    assert net.layers[0].frozen_mask.all()
    assert net.provenance["extra"]["role"] == "integrator"
    assert len(result.history) == 1


def test_integrator_pretraining_checks_role():
    batch = _integral_batch(0, B=2)
    batch.role = "controller"
    with pytest.raises(StructuralError):
        pretrain_integrators(batch, None, _integrator_config(0))
