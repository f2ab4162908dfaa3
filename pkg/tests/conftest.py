"""
测试配置和共享fixture
"""
import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from robust_hawkes.core.dataset_io import save_dataset  # noqa: E402
from robust_hawkes.core.hawkes_sim import simulate_dataset  # noqa: E402
from robust_hawkes.core.tensor_engine import default_dtype  # noqa: E402
from robust_hawkes.models.config_models import (HawkesParams, ModelConfig, ReweightConfig,  # noqa: E402
                                                TrainConfig)
from robust_hawkes.models.event_models import Dataset, EventSequence  # noqa: E402


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch):
    """清除会影响配置的环境变量"""
    for name in ('RDHP_LOG_LEVEL', 'RDHP_JOBS', 'RDHP_DTYPE'):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def float64():
    """梯度检查使用 float64 存储精度"""
    with default_dtype('float64'):
        yield


@pytest.fixture
def two_type_params() -> HawkesParams:
    """两类型互激 Hawkes 参数（谱半径 < 1）"""
    return HawkesParams(mu=[0.3, 0.2],
                        alpha=[[0.4, 0.2], [0.1, 0.3]],
                        gamma=[[1.5, 1.0], [1.0, 2.0]])


@pytest.fixture
def toy_dataset() -> Dataset:
    """手写的三类型小数据集"""
    sequences = [
        EventSequence.from_arrays('a', [0.5, 1.0, 2.5, 3.0, 4.5], [0, 1, 2, 0, 1]),
        EventSequence.from_arrays('b', [0.2, 0.9, 1.1, 3.7], [2, 2, 0, 1]),
        EventSequence.from_arrays('c', [1.0, 2.0, 2.0, 6.0, 7.5, 8.0], [1, 0, 2, 2, 1, 0]),
        EventSequence.from_arrays('d', [0.1, 5.0, 9.5], [0, 1, 2]),
        EventSequence.from_arrays('e', [3.3], [1]),
    ]
    return Dataset(sequences=tuple(sequences), num_types=3, t_max=10.0)


@pytest.fixture
def simulated_dataset(two_type_params) -> Dataset:
    """40 条模拟序列"""
    return simulate_dataset(two_type_params, t_max=15.0, n_seqs=40, seed=7)


@pytest.fixture
def dataset_file(tmp_path, toy_dataset) -> str:
    path = str(tmp_path / 'toy.jsonl')
    save_dataset(toy_dataset, path)
    return path


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    """测试用的小模型（无 dropout）"""
    return ModelConfig(num_types=3, embed_dim=8, attention_heads=2, attention_layers=2,
                       mlp_layers=2, hidden_size=8, dropout_rate=0.0, init_std=0.3)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    """两轮训练的小配置"""
    return TrainConfig(
        batch_size=4, clean_batch_size=4, epochs=2, lr=5e-3, seed=3,
        model=ModelConfig(embed_dim=8, attention_heads=2, attention_layers=1, mlp_layers=2,
                          hidden_size=8, dropout_rate=0.1),
        reweight=ReweightConfig(hidden_size=8, lr=1e-2),
    )
