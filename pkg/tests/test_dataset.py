"""
数据集构建测试：归一化、序列切分、划分与多轮聚合
"""
import numpy as np
import pytest

from app.core.exceptions import DataError, InvalidSequenceError, SchemaMismatchError, ZeroVarianceChannelError
from app.dataset.norm import NormStats, Normalizer, build_norm_stats
from app.dataset.rounds import aggregate_rounds
from app.dataset.sequences import make_sequences, split_episodes, window_starts
from app.sim.models import (
    EPISODE_COLUMNS,
    ESTIMATE_COLUMNS,
    EXPERT_TORQUE_COLUMNS,
    IMU_COLUMNS,
    SETPOINT_COLUMNS,
)

NORM_LABELS = IMU_COLUMNS + ESTIMATE_COLUMNS + SETPOINT_COLUMNS


def test_norm_stats_population_sd(make_episode):
    first = make_episode("a", n_rows=2, seed=0)
    second = make_episode("b", n_rows=2, seed=1)
    first.log["gx"] = [0.0, 2.0]
    second.log["gx"] = [4.0, 6.0]
    stats = build_norm_stats([second, first], ["gx"])
    assert stats.mean[0] == pytest.approx(3.0)
    assert stats.std[0] == pytest.approx(np.sqrt(5.0))
    assert stats.n_rows == 4
    # 与回合顺序无关
    assert build_norm_stats([first, second], ["gx"]).corpus_hash == stats.corpus_hash


def test_zero_variance_channel_is_rejected(make_episode):
    ep = make_episode()
    ep.log["sp_yaw"] = 0.0
    with pytest.raises(ZeroVarianceChannelError):
        build_norm_stats([ep], NORM_LABELS)


def test_empty_corpus_is_rejected():
    with pytest.raises(DataError):
        build_norm_stats([], NORM_LABELS)


def test_norm_stats_save_and_load(make_episode, tmp_path):
    stats = build_norm_stats([make_episode()], NORM_LABELS)
    stats.save(tmp_path / "norm.json")
    loaded = NormStats.load(tmp_path / "norm.json")
    assert loaded.labels == stats.labels
    np.testing.assert_allclose(loaded.mean, stats.mean)
    np.testing.assert_allclose(loaded.std, stats.std)


def test_normalizer_follows_selected_channels(make_episode):
    episode = make_episode()
    stats = build_norm_stats([episode], NORM_LABELS).select(SETPOINT_COLUMNS)
    z = Normalizer(stats).normalize(episode.log[SETPOINT_COLUMNS].to_numpy())
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0)
    with pytest.raises(DataError):
        Normalizer(stats).normalize(np.zeros((4, 2)))


def test_window_starts():
    assert window_starts(100, 20, 6) == [0, 20, 40, 60]
    assert len(window_starts(600000, 2000, 0)) == 300
    assert len(window_starts(600000, 2000, 6)) == 299
    assert window_starts(10, 20, 0) == []


def test_shifted_controller_targets(make_episode):
    ep = make_episode(n_rows=100)
    stats = build_norm_stats([ep], NORM_LABELS)
    batch, report = make_sequences([ep], stats, "controller", shift=6, seq_len=20, dtype=np.float64)
    assert report.n_sequences == 4
    assert batch.offsets == [0, 20, 40, 60]
    assert batch.input_labels == ESTIMATE_COLUMNS + SETPOINT_COLUMNS
    assert batch.target_labels == EXPERT_TORQUE_COLUMNS
    targets = ep.log[EXPERT_TORQUE_COLUMNS].to_numpy()
    for k, start in enumerate(batch.offsets):
        np.testing.assert_array_equal(batch.targets[k], targets[start + 6: start + 26])
    np.testing.assert_allclose(batch.raw_inputs()[1], ep.log[batch.input_labels].to_numpy()[20:40])


def test_integrator_targets_start_at_zero(make_episode):
    ep = make_episode(n_rows=60)
    stats = build_norm_stats([ep], NORM_LABELS)
    batch, _ = make_sequences([ep], stats, "integrator", seq_len=20, dtype=np.float64)
    assert not np.any(batch.targets[:, 0])


def test_unusable_and_short_episodes_are_reported(make_episode):
    good = make_episode("a", n_rows=50)
    bad = make_episode("b", n_rows=50, usable=False)
    short = make_episode("c", n_rows=10)
    stats = build_norm_stats([good], NORM_LABELS)
    batch, report = make_sequences([good, bad, short], stats, "estimator", seq_len=20)
    assert len(batch) == 2
    assert report.dropped_unusable == ["b"]
    assert report.skipped_short == ["c"]
    assert set(batch.episode_ids) == {"a"}


def test_invalid_sequence_lengths(make_episode):
    ep = make_episode(n_rows=10)
    stats = build_norm_stats([ep], NORM_LABELS)
    with pytest.raises(InvalidSequenceError):
        make_sequences([ep], stats, "estimator", seq_len=1)
    with pytest.raises(DataError):
        make_sequences([ep], stats, "estimator", seq_len=20)


def test_split_is_by_episode_and_disjoint(make_episode):
    episodes = [make_episode(f"expert-{i:05d}", n_rows=10, seed=i) for i in range(10)]
    train, test = split_episodes(episodes, 0.2, seed=3)
    train_ids = {ep.episode_id for ep in train}
    test_ids = {ep.episode_id for ep in test}
    assert len(test_ids) == 2
    assert not train_ids & test_ids
    assert train_ids | test_ids == {ep.episode_id for ep in episodes}
    again, _ = split_episodes(list(reversed(episodes)), 0.2, seed=3)
    assert {ep.episode_id for ep in again} == train_ids


def test_round_aggregation(make_episode):
    rounds = {
        "expert": [make_episode("expert-00000", seed=0), make_episode("expert-00001", seed=1)],
        "disturbed": [make_episode("disturbed-00000", seed=2, round_tag="disturbed")],
    }
    corpus = aggregate_rounds(rounds, NORM_LABELS)
    assert len(corpus) == 3
    assert corpus.provenance["disturbed"] == ["disturbed-00000"]
    assert corpus.stats.n_rows == corpus.n_rows


def test_round_schema_mismatch(make_episode):
    odd = make_episode("snn-00000", columns=EPISODE_COLUMNS + ["extra"], round_tag="snn")
    rounds = {"expert": [make_episode()], "snn": [odd]}
    with pytest.raises(SchemaMismatchError):
        aggregate_rounds(rounds, NORM_LABELS)
