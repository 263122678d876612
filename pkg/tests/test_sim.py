"""
飞行仿真测试：刚体动力学、IMU、专家控制器、扰动与回合
"""
import numpy as np
import pytest

from app.core.config import DT, DisturbanceConfig, PidGainsConfig, QuadModelConfig
from app.sim.controllers.service import ControllerService
from app.sim.dynamics import euler_to_quat, quat_to_euler, sim_step, check_envelope
from app.sim.episode import make_seeds, read_episode, run_episode, write_episode
from app.sim.expert import ExpertPilot, complementary_filter
from app.sim.imu import accel_tilt, imu_sample
from app.sim.models import EPISODE_COLUMNS, DisturbanceSchedule, ImuModel, QuadModel, SimState
from app.sim.scripts import step_window
from app.eval.step_response import rise_time


@pytest.fixture
def model():
    return QuadModel.from_config(QuadModelConfig())


def test_equilibrium_is_preserved(model):
    state = SimState()
    for _ in range(500):
        state = sim_step(model, state, np.zeros(3))
    np.testing.assert_allclose(state.quat, [1, 0, 0, 0])
    np.testing.assert_allclose(state.omega, 0)
    assert state.step == 500


def test_roll_rate_grows_with_torque_over_inertia(model):
    torque = np.array([1e-3, 0.0, 0.0])
    state = sim_step(model, SimState(), torque)
    assert state.omega[0] == pytest.approx(DT * torque[0] / model.inertia[0])
    assert state.omega[1] == 0 and state.omega[2] == 0


def test_drag_never_adds_rotational_speed(model):
    """零力矩、正阻尼：|ω| 逐步不增"""
    state = SimState(omega=np.random.default_rng(0).uniform(-5.0, 5.0, 3))
    norms = [np.linalg.norm(state.omega)]
    for _ in range(1000):
        state = sim_step(model, state, np.zeros(3))
        norms.append(np.linalg.norm(state.omega))
    assert np.all(np.diff(norms) <= 0)
    assert norms[-1] < norms[0]


def test_quaternion_stays_normalized(model):
    state = SimState()
    rng = np.random.default_rng(0)
    for _ in range(2000):
        state = sim_step(model, state, rng.uniform(-1, 1, 3) * model.torque_limit * 0.05)
        assert np.linalg.norm(state.quat) == pytest.approx(1.0, abs=1e-12)


def test_envelope_check(model):
    assert check_envelope(model, SimState()) is None
    tilted = SimState(quat=euler_to_quat(np.radians(70), 0.0, 0.0))
    assert "tilt" in check_envelope(model, tilted)


def test_euler_round_trip():
    angles = np.array([0.3, -0.2, 1.1])
    np.testing.assert_allclose(quat_to_euler(euler_to_quat(*angles)), angles, atol=1e-12)


def test_level_imu_reads_gravity():
    imu = imu_sample(SimState(), ImuModel(0.0, 0.0), np.random.default_rng(0), gravity=9.81)
    np.testing.assert_allclose(imu, [0, 0, 0, 0, 0, 9.81], atol=1e-12)


def test_accel_tilt_recovers_roll_and_pitch():
    state = SimState(quat=euler_to_quat(0.2, -0.1, 0.0))
    imu = imu_sample(state, ImuModel(0.0, 0.0), np.random.default_rng(0))
    np.testing.assert_allclose(accel_tilt(imu[3:]), [0.2, -0.1], atol=1e-12)


def test_complementary_filter_holds_level_attitude():
    level = np.array([0, 0, 0, 0, 0, 9.81])
    np.testing.assert_allclose(complementary_filter(np.zeros(3), level, 0.995), 0.0)


def test_expert_zero_error_gives_zero_command():
    pilot = ExpertPilot(PidGainsConfig())
    for _ in range(10):
        attitude, torque, breakdown = pilot.step(np.array([0, 0, 0, 0, 0, 9.81]), np.zeros(3))
        np.testing.assert_allclose(torque, 0.0)
        np.testing.assert_allclose(breakdown.i, 0.0)


def test_expert_integral_is_clamped():
    gains = PidGainsConfig()
    pilot = ExpertPilot(gains)
    for _ in range(5000):
        _, _, breakdown = pilot.step(np.array([0, 0, 0, 0, 0, 9.81]), np.array([0.5, 0.0, 0.0]))
    assert breakdown.i[0] == pytest.approx(gains.i_limit[0])


def test_disturbance_onset_rate():
    cfg = DisturbanceConfig(enabled=True, probability=0.01, duration_s=0.2)
    n_steps = 30000
    onsets, free = 0, 0
    for seed in range(10):
        schedule = DisturbanceSchedule.from_config(cfg, 500)
        rng = np.random.default_rng(seed)
        for _ in range(n_steps):
            if schedule.remaining == 0:
                free += 1
            schedule.step(rng)
        onsets += schedule.onsets
    expected = cfg.probability * free
    assert abs(onsets - expected) < 0.2 * expected


def test_disabled_disturbances_consume_the_same_random_numbers():
    cfg = DisturbanceConfig(enabled=True)
    on = DisturbanceSchedule.from_config(cfg, 500)
    off = DisturbanceSchedule.from_config(cfg, 500, enabled=False)
    rng_on, rng_off = np.random.default_rng(7), np.random.default_rng(7)
    for _ in range(100):
        on.step(rng_on)
        assert not np.any(off.step(rng_off))
    assert rng_on.random() == rng_off.random()


def test_episode_seeds():
    seeds = make_seeds(12, 5)
    assert seeds.key == 12 ^ 5


def test_expert_step_response_rise_time(quiet_sim_config):
    episode = run_episode(quiet_sim_config, "step", ControllerService.get_controller("expert"), make_seeds(0, 0))
    assert episode.usable
    assert list(episode.log.columns) == EPISODE_COLUMNS
    w = step_window()
    t = episode.column("t")
    roll = episode.truth["roll"].to_numpy()
    rt = rise_time(t[w] - t[w.start], roll[w], 0.0, np.radians(10.0))
    assert rt is not None
    assert 0.1 <= rt <= 0.2


def test_integral_cancels_torque_offset(quiet_sim_config):
    cfg = quiet_sim_config.model_copy(
        update={"model": quiet_sim_config.model.model_copy(update={"torque_offset_max": (0.05, 0.05, 0.01)})})
    episode = run_episode(cfg, "hover", ControllerService.get_controller("expert"), make_seeds(3, 1), seconds=10.0)
    offset = np.array(episode.sidecar.torque_offset)
    assert np.any(offset)
    final = episode.log[["i_roll", "i_pitch"]].to_numpy()[-1]
    np.testing.assert_allclose(final, -offset[:2], atol=2e-3)


def test_episode_is_reproducible_and_round_trips(quiet_sim_config, tmp_path):
    cfg = quiet_sim_config.model_copy(update={"imu": quiet_sim_config.imu.model_copy(update={"gyro_noise_sd": 0.01})})
    first = run_episode(cfg, "maneuver", ControllerService.get_controller("expert"), make_seeds(1, 2), seconds=2.0)
    second = run_episode(cfg, "maneuver", ControllerService.get_controller("expert"), make_seeds(1, 2), seconds=2.0)
    np.testing.assert_array_equal(first.log.to_numpy(), second.log.to_numpy())
    assert first.n_rows == 1000

    paths = write_episode(first, tmp_path)
    loaded = read_episode(paths["log"], with_truth=True)
    assert loaded.sidecar == first.sidecar
    np.testing.assert_allclose(loaded.log.to_numpy(), first.log.to_numpy())
