"""
加噪模块测试
"""
import math

import numpy as np
import pytest

from robust_hawkes.core.noise_forge import CorruptionLog, assert_untouched, build_matrix, corrupt
from robust_hawkes.models.config_models import NoiseKind, NoiseSpec
from robust_hawkes.models.event_models import Dataset, EventSequence
from robust_hawkes.utils.exceptions import ConfigurationError, ContractError


def _pick(dataset: Dataset, *ids: str) -> Dataset:
    return dataset.with_sequences([s for s in dataset.sequences if s.id in ids])


def _single_event_dataset(n: int, num_types: int, t_max: float = 10.0, time: float = 5.0) -> Dataset:
    rng = np.random.default_rng(0)
    marks = rng.integers(0, num_types, size=n)
    sequences = [EventSequence.from_arrays(f"s{i}", [time], [int(m)]) for i, m in enumerate(marks)]
    return Dataset(sequences=tuple(sequences), num_types=num_types, t_max=t_max)


class TestBuildMatrix:
    """转移矩阵测试类"""

    def test_uniform_values(self):
        """测试 uniform K=4 p=0.3：对角 0.7，非对角 0.1"""
        matrix = build_matrix(NoiseKind.UNIFORM, 4, 0.3)
        assert np.allclose(np.diag(matrix), 0.7)
        off = matrix[~np.eye(4, dtype=bool)]
        assert np.allclose(off, 0.1)

    def test_flip_values(self):
        """测试 flip：每行一个 0.3，且不在对角线上"""
        matrix = build_matrix(NoiseKind.FLIP, 4, 0.3, seed=3)
        for i, row in enumerate(matrix):
            assert row[i] == pytest.approx(0.7)
            others = np.delete(row, i)
            assert sorted(np.round(others, 12).tolist()) == [0.0, 0.0, 0.3]

    def test_flip2_values(self):
        """测试 flip2：每行两个 0.15"""
        matrix = build_matrix(NoiseKind.FLIP2, 4, 0.3, seed=3)
        for i, row in enumerate(matrix):
            assert row[i] == pytest.approx(0.7)
            others = np.delete(row, i)
            assert sorted(np.round(others, 12).tolist()) == [0.0, 0.15, 0.15]

    @pytest.mark.parametrize('kind', list(NoiseKind))
    def test_rows_sum_to_one(self, kind):
        """测试每行和为 1 且非负"""
        matrix = build_matrix(kind, 5, 0.45, seed=1)
        assert np.all(matrix >= 0)
        assert np.allclose(matrix.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize('kind', [NoiseKind.UNIFORM, NoiseKind.FLIP, NoiseKind.FLIP2])
    def test_zero_probability_is_identity(self, kind):
        """测试 p=0 时为单位矩阵"""
        assert np.array_equal(build_matrix(kind, 4, 0.0), np.eye(4))

    def test_invalid_arguments(self):
        """测试非法参数"""
        with pytest.raises(ConfigurationError):
            build_matrix(NoiseKind.UNIFORM, 1, 0.3)
        with pytest.raises(ConfigurationError):
            build_matrix(NoiseKind.FLIP2, 2, 0.3)
        with pytest.raises(ConfigurationError):
            build_matrix(NoiseKind.UNIFORM, 4, 1.5)


class TestCorrupt:
    """加噪过程测试类"""

    def test_zero_noise_is_identity(self, simulated_dataset):
        """测试 p=0、time_p=0 时事件不变"""
        noisy, log = corrupt(simulated_dataset, NoiseSpec(kind=NoiseKind.UNIFORM, p=0.0, time_p=0.0))
        assert [s.events for s in noisy.sequences] == [s.events for s in simulated_dataset.sequences]
        assert log.altered_events() == 0
        assert noisy.max_gap == pytest.approx(simulated_dataset.time_scale())

    def test_mark_change_rate(self):
        """测试类型改变率与 1 − 对角线一致（3 个标准误内）"""
        dataset = _single_event_dataset(20_000, 4)
        _, log = corrupt(dataset, NoiseSpec(kind=NoiseKind.UNIFORM, p=0.3, seed=9))
        rate = log.altered_events() / 20_000
        se = math.sqrt(0.3 * 0.7 / 20_000)
        assert abs(rate - 0.3) <= 3 * se

    def test_time_perturbation_moments(self):
        """测试时间扰动的均值与标准差"""
        n = 20_000
        dataset = _single_event_dataset(n, 2, t_max=100.0, time=50.0)
        noisy, _ = corrupt(dataset, NoiseSpec(kind=NoiseKind.NONE, time_p=1.0, time_sigma=0.8, seed=2))
        shifts = np.array([s.events[0].time for s in noisy.sequences]) - 50.0
        assert abs(shifts.mean()) <= 3 * 0.8 / math.sqrt(n)
        assert abs(shifts.std(ddof=1) - 0.8) <= 3 * 0.8 / math.sqrt(2 * (n - 1))

    def test_times_clamped_and_sorted(self, simulated_dataset):
        """测试扰动后时间位于窗口内且有序"""
        noisy, log = corrupt(simulated_dataset, NoiseSpec(kind=NoiseKind.FLIP, p=0.5, time_p=0.8,
                                                          time_sigma=5.0, seed=4))
        for seq in noisy.sequences:
            times = seq.times()
            assert np.all(np.diff(times) >= 0)
            assert times.min() >= 0.0 and times.max() <= simulated_dataset.t_max
        assert log.clamped > 0

    def test_deterministic(self, simulated_dataset):
        """测试相同种子得到相同结果"""
        spec = NoiseSpec(kind=NoiseKind.UNIFORM, p=0.3, time_p=0.3, seed=6)
        first, _ = corrupt(simulated_dataset, spec)
        second, _ = corrupt(simulated_dataset, spec)
        assert first == second

    def test_log_round_trip(self, tmp_path, simulated_dataset):
        """测试加噪记录保存与读取"""
        _, log = corrupt(simulated_dataset, NoiseSpec(kind=NoiseKind.UNIFORM, p=0.3, seed=1))
        path = str(tmp_path / 'log.json')
        log.save(path)
        loaded = CorruptionLog.load(path)
        assert loaded.corrupted_ids == log.corrupted_ids
        assert loaded.altered_events() == log.altered_events()


class TestAssertUntouched:
    """加噪隔离测试类"""

    def test_disjoint_passes(self, toy_dataset):
        """测试与加噪记录不相交的数据集通过检查"""
        train = _pick(toy_dataset, 'a', 'b')
        held_out = _pick(toy_dataset, 'c', 'd')
        _, log = corrupt(train, NoiseSpec(kind=NoiseKind.UNIFORM, p=0.3))
        assert_untouched(log, held_out)

    def test_overlap_raises(self, toy_dataset):
        """测试被加噪过的序列出现在保留集中时报错"""
        _, log = corrupt(_pick(toy_dataset, 'a', 'b'), NoiseSpec(kind=NoiseKind.UNIFORM, p=0.3))
        with pytest.raises(ContractError):
            assert_untouched(log, _pick(toy_dataset, 'b', 'c'))
