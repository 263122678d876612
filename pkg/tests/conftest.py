"""
测试公共夹具
"""
import os
import sys

import numpy as np
import pandas as pd
import pytest

# 添加项目根目录到 Python 路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.config import SimConfig
from app.pipeline.rundir import RunDirectory
from app.schemas.episode import EpisodeSidecar
from app.sim.episode import Episode, make_seeds
from app.sim.models import EPISODE_COLUMNS
from app.snn.training import init_network


@pytest.fixture
def make_net():
    """小型 float64 网络工厂"""
    def _make(widths=(4,), recurrent=None, n_in=2, n_out=1, seed=0, n_integrators=0, name="snn",
              input_labels=None, output_labels=None):
        widths = list(widths)
        recurrent = [False] * len(widths) if recurrent is None else list(recurrent)
        return init_network(
            widths, recurrent,
            input_labels or [f"x{j}" for j in range(n_in)],
            output_labels or [f"y{j}" for j in range(n_out)],
            seed=seed, n_integrators=n_integrators, name=name, dtype=np.float64,
        )
    return _make


@pytest.fixture
def quiet_sim_config():
    """无噪声、无零偏、无力矩偏置的仿真配置"""
    return SimConfig.model_validate({
        "imu": {"gyro_noise_sd": 0.0, "gyro_bias_max": 0.0, "accel_noise_sd": 0.0},
        "model": {"torque_offset_max": [0.0, 0.0, 0.0]},
    })


@pytest.fixture
def make_episode():
    """合成回合工厂：各列为随机值，不经过仿真"""
    def _make(episode_id="expert-00000", n_rows=100, seed=0, round_tag="expert", usable=True, columns=None):
        rng = np.random.default_rng(seed)
        columns = list(columns or EPISODE_COLUMNS)
        data = rng.standard_normal((n_rows, len(columns)))
        log = pd.DataFrame(data, columns=columns)
        if "t" in log:
            log["t"] = np.arange(n_rows) / 500.0
        if "dist_flag" in log:
            log["dist_flag"] = 0.0
        sidecar = EpisodeSidecar(
            episode_id=episode_id, round_tag=round_tag, script="maneuver", controller="ExpertController",
            seeds=make_seeds(0, seed), n_rows=n_rows, usable=usable,
        )
        return Episode(episode_id=episode_id, log=log, sidecar=sidecar)
    return _make


@pytest.fixture
def run_dir(tmp_path):
    return RunDirectory(tmp_path / "run").init()


