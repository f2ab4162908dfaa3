"""
训练数据加噪：事件类型噪声（uniform/flip/flip2 转移矩阵）与时间戳高斯扰动
"""
import json
import os
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..models.config_models import NoiseKind, NoiseSpec
from ..models.event_models import Dataset, EventSequence
from ..utils.exceptions import ConfigurationError, ContractError, DatasetIOError
from ..utils.logger import get_logger

logger = get_logger()

# 行随机矩阵：[i][j] 为真实类型 i 被记录为 j 的概率
CorruptionMatrix = np.ndarray


class CorruptionLog(BaseModel):
    """加噪记录"""
    spec: NoiseSpec
    matrix: List[List[float]]
    clamped: int = 0
    # 经过加噪流程的全部序列 id（包括未被改动的）
    corrupted_ids: List[str] = Field(default_factory=list)
    # 序列 id -> [(原位置, 原时间, 原类型)]
    altered: Dict[str, List[Tuple[int, float, int]]] = Field(default_factory=dict)

    def altered_events(self) -> int:
        return sum(len(v) for v in self.altered.values())

    def save(self, path: str) -> None:
        try:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(self.model_dump(mode='json'), f, indent=2)
        except OSError as e:
            raise DatasetIOError(f"加噪记录写入失败: {path}: {e}", path) from e

    @classmethod
    def load(cls, path: str) -> 'CorruptionLog':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return cls.model_validate(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise DatasetIOError(f"加噪记录读取失败: {path}: {e}", path) from e


def build_matrix(kind: NoiseKind, num_types: int, p: float, seed: int = 0) -> CorruptionMatrix:
    """
    构造类型噪声转移矩阵

    Args:
        kind: uniform / flip / flip2 / none
        num_types: 类型数 K
        p: 噪声概率，对角线为 1-p
        seed: flip/flip2 配对的随机种子

    Returns:
        K×K 行随机矩阵
    """
    kind = NoiseKind(kind)
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"噪声概率必须在 [0, 1] 内: {p}", 'p', p)
    if num_types < 1:
        raise ConfigurationError(f"类型数必须为正: {num_types}", 'num_types', num_types)
    if kind == NoiseKind.NONE or p == 0.0:
        return np.eye(num_types)
    if num_types < 2:
        raise ConfigurationError(f"{kind.value} 噪声需要 K >= 2", 'num_types', num_types)
    if kind == NoiseKind.FLIP2 and num_types < 3:
        raise ConfigurationError("flip2 噪声需要 K >= 3", 'num_types', num_types)

    rng = np.random.Generator(np.random.Philox(seed))
    matrix = np.eye(num_types) * (1.0 - p)
    if kind == NoiseKind.UNIFORM:
        off = ~np.eye(num_types, dtype=bool)
        matrix[off] = p / (num_types - 1)
    elif kind == NoiseKind.FLIP:
        while True:
            partners = rng.permutation(num_types)
            if not np.any(partners == np.arange(num_types)):
                break
        matrix[np.arange(num_types), partners] = p
    else:
        for i in range(num_types):
            others = np.array([j for j in range(num_types) if j != i])
            for j in rng.choice(others, size=2, replace=False):
                matrix[i, j] = p / 2.0
    return matrix


def _corrupt_sequence(seq: EventSequence, cumulative: np.ndarray, spec: NoiseSpec, t_max: float,
                      rng: np.random.Generator) -> Tuple[EventSequence, List[Tuple[int, float, int]], int]:
    times, marks = seq.times(), seq.marks()
    n = len(seq)
    k = cumulative.shape[1]
    # 抽样顺序固定：类型、时间硬币、时间扰动
    u = rng.random(n)
    new_marks = np.minimum((u[:, None] >= cumulative[marks]).sum(axis=1), k - 1)
    perturb = rng.random(n) < spec.time_p
    noise = rng.normal(0.0, spec.time_sigma, size=n) if spec.time_sigma > 0 else np.zeros(n)
    shifted = np.where(perturb, times + noise, times)
    clamped = int(np.sum((shifted < 0) | (shifted > t_max)))
    new_times = np.clip(shifted, 0.0, t_max)

    changed = np.flatnonzero((new_marks != marks) | (new_times != times))
    if changed.size == 0:
        return seq, [], clamped
    records = [(int(i), float(times[i]), int(marks[i])) for i in changed]
    order = np.argsort(new_times, kind='stable')
    noisy = EventSequence.from_arrays(seq.id, new_times[order], new_marks[order], dict(seq.metadata))
    return noisy, records, clamped


def corrupt(dataset: Dataset, spec: NoiseSpec) -> Tuple[Dataset, CorruptionLog]:
    """
    对数据集的每个事件独立加噪

    类型按转移矩阵整行重新抽样，时间以概率 time_p 加 N(0, time_sigma) 扰动后截断到
    [0, t_max]，然后按新时间重新排序。输出表头写入加噪前的 max_gap。
    """
    matrix = build_matrix(spec.kind, dataset.num_types, spec.p, spec.seed)
    cumulative = np.cumsum(matrix, axis=1)
    streams = np.random.SeedSequence(spec.seed).spawn(len(dataset))

    sequences = []
    altered: Dict[str, List[Tuple[int, float, int]]] = {}
    clamped_total = 0
    for seq, stream in zip(dataset.sequences, streams):
        rng = np.random.Generator(np.random.Philox(stream))
        noisy, records, clamped = _corrupt_sequence(seq, cumulative, spec, dataset.t_max, rng)
        sequences.append(noisy)
        clamped_total += clamped
        if records:
            altered[seq.id] = records

    log = CorruptionLog(spec=spec, matrix=matrix.tolist(), clamped=clamped_total,
                        corrupted_ids=dataset.ids(), altered=altered)
    metadata = dict(dataset.metadata)
    metadata['corruption'] = spec.model_dump(mode='json')
    noisy_dataset = dataset.with_sequences(sequences, max_gap=dataset.time_scale(), metadata=metadata)
    logger.info(f"Corrupted {log.altered_events()} event(s) in {len(altered)} sequence(s); "
                f"{clamped_total} timestamp(s) clamped to [0, {dataset.t_max}]")
    return noisy_dataset, log


def assert_untouched(log: CorruptionLog, dataset: Dataset) -> None:
    """确认验证/测试/干净集中的序列没有经过加噪"""
    touched = sorted(set(log.corrupted_ids) & set(dataset.ids()))
    if touched:
        raise ContractError(f"{len(touched)} 条序列出现在加噪记录中: {touched[:5]}",
                            {'sequence_ids': touched})
