"""
数据集读写与划分

JSONL 格式：首行表头 {"num_types": K, "t_max": T[, "max_gap": g][, "meta": {...}]}，
其后每行一个序列 {"id": str, "events": [[time, mark], ...][, "meta": {...}]}。
"""
import hashlib
import json
import math
import os
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import ValidationError

from ..models.event_models import Dataset, Event, EventSequence, SplitSpec
from ..utils.exceptions import (DatasetIOError, EmptyDatasetError, MalformedInputError,
                                SchemaViolationError)
from ..utils.logger import get_logger

logger = get_logger()

SPLIT_NAMES = ('train', 'val', 'test', 'clean')


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(',', ':'), ensure_ascii=False)


def serialize_dataset(dataset: Dataset) -> str:
    """规范化的 JSONL 文本"""
    lines = [_dumps(dataset.header())]
    lines.extend(_dumps(seq.to_record()) for seq in dataset.sequences)
    return '\n'.join(lines) + '\n'


def dataset_hash(dataset: Dataset) -> str:
    return hashlib.sha256(serialize_dataset(dataset).encode('utf-8')).hexdigest()


def _parse_header(raw: Dict[str, Any], path: str) -> Dict[str, Any]:
    if not isinstance(raw, dict) or 'num_types' not in raw or 't_max' not in raw:
        raise SchemaViolationError(f"{path}: 表头必须包含 num_types 和 t_max", 'header', raw, 1)
    num_types, t_max = raw['num_types'], raw['t_max']
    if isinstance(num_types, bool) or not isinstance(num_types, int) or num_types <= 0:
        raise SchemaViolationError(f"{path}: num_types 必须是正整数", 'num_types', num_types, 1)
    if not isinstance(t_max, (int, float)) or not t_max > 0:
        raise SchemaViolationError(f"{path}: t_max 必须为正数", 't_max', t_max, 1)
    return raw


def _parse_sequence(raw: Any, line_no: int, num_types: int, t_max: float,
                    path: str) -> Tuple[EventSequence, bool]:
    """解析一行序列，返回 (序列, 是否重新排序)"""
    if not isinstance(raw, dict) or 'id' not in raw or 'events' not in raw:
        raise MalformedInputError(f"{path}:{line_no}: 序列行必须包含 id 和 events", line_no, path)
    events_raw = raw['events']
    if not isinstance(events_raw, list) or not events_raw:
        raise SchemaViolationError(f"{path}:{line_no}: events 必须是非空列表", 'events',
                                   events_raw, line_no)

    pairs: List[Tuple[float, int]] = []
    for pos, item in enumerate(events_raw):
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise MalformedInputError(f"{path}:{line_no}: 第 {pos} 个事件不是 [time, mark]",
                                      line_no, path)
        t, m = item
        if isinstance(m, bool) or not isinstance(m, int) or not isinstance(t, (int, float)):
            raise SchemaViolationError(f"{path}:{line_no}: 第 {pos} 个事件类型错误", 'events',
                                       item, line_no)
        if m < 0 or m >= num_types:
            raise SchemaViolationError(f"{path}:{line_no}: mark {m} 超出 [0, {num_types})", 'mark',
                                       m, line_no)
        if not math.isfinite(t) or t < 0 or t > t_max:
            raise SchemaViolationError(f"{path}:{line_no}: time {t} 超出 [0, {t_max}]", 'time',
                                       t, line_no)
        pairs.append((float(t), int(m)))

    ordered = sorted(pairs, key=lambda p: p[0])
    resorted = ordered != pairs
    try:
        seq = EventSequence(id=str(raw['id']),
                            events=tuple(Event(time=t, mark=m) for t, m in ordered),
                            metadata=raw.get('meta') or {})
    except ValidationError as e:
        raise SchemaViolationError(f"{path}:{line_no}: {e.errors()[0]['msg']}", 'sequence',
                                   raw.get('id'), line_no) from e
    return seq, resorted


def load_dataset(path: str) -> Dataset:
    """
    读取 JSONL 数据集

    Args:
        path: 文件路径

    Returns:
        Dataset；若有序列被重新排序，metadata['resorted_sequences'] 记录数量
    """
    if not os.path.exists(path):
        raise DatasetIOError(f"数据文件不存在: {path}", path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise DatasetIOError(f"数据文件读取失败: {path}: {e}", path) from e

    numbered = [(i + 1, line) for i, line in enumerate(lines) if line.strip()]
    if not numbered:
        raise EmptyDatasetError(f"数据文件为空: {path}", path)

    def parse(line_no: int, line: str) -> Any:
        try:
            return json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedInputError(f"{path}:{line_no}: JSON 解析失败: {e.msg}", line_no, path) from e

    header = _parse_header(parse(*numbered[0]), path)
    num_types, t_max = int(header['num_types']), float(header['t_max'])

    sequences: List[EventSequence] = []
    seen = set()
    resorted = 0
    for line_no, line in numbered[1:]:
        seq, was_resorted = _parse_sequence(parse(line_no, line), line_no, num_types, t_max, path)
        if seq.id in seen:
            raise SchemaViolationError(f"{path}:{line_no}: 序列 id 重复: {seq.id}", 'id', seq.id, line_no)
        seen.add(seq.id)
        resorted += was_resorted
        sequences.append(seq)

    metadata = dict(header.get('meta') or {})
    if resorted:
        logger.warning(f"{path}: {resorted} sequence(s) were not sorted by time and have been re-sorted")
        metadata['resorted_sequences'] = resorted

    try:
        return Dataset(sequences=tuple(sequences), num_types=num_types, t_max=t_max,
                       max_gap=header.get('max_gap'), metadata=metadata)
    except ValidationError as e:
        raise SchemaViolationError(f"{path}: {e.errors()[0]['msg']}", 'header', header) from e


def save_dataset(dataset: Dataset, path: str) -> None:
    """写出 JSONL 数据集；load_dataset(save_dataset(d)) 与 d 逐字段相等"""
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(serialize_dataset(dataset))
    except OSError as e:
        raise DatasetIOError(f"数据文件写入失败: {path}: {e}", path) from e
    logger.debug(f"Saved {len(dataset)} sequences to {path}")


def _split_counts(n: int, fractions: List[float]) -> List[int]:
    """最大余数法分配序列数"""
    raw = [f * n for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    remaining = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remaining]:
        counts[i] += 1
    return counts


def split(dataset: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset, Dataset, Dataset]:
    """
    按序列划分 train/val/test/clean

    clean 集从训练部分中随机抽取；各划分内部保持原文件顺序。
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDatasetError("无法划分空数据集")

    fractions = spec.fractions()
    counts = dict(zip(SPLIT_NAMES, _split_counts(n, [fractions[name] for name in SPLIT_NAMES])))
    for name in SPLIT_NAMES:
        if fractions[name] > 0 and counts[name] == 0:
            logger.warning(f"Split '{name}' has fraction {fractions[name]} but rounds to 0 of {n} sequences")

    rng = np.random.Generator(np.random.Philox(spec.seed))
    perm = rng.permutation(n)
    n_pool = counts['train'] + counts['clean']
    pool = perm[:n_pool]
    clean_idx = rng.choice(pool, size=counts['clean'], replace=False) if counts['clean'] else np.array([], int)
    clean_set = set(int(i) for i in clean_idx)

    indices: Dict[str, List[int]] = {
        'train': sorted(int(i) for i in pool if int(i) not in clean_set),
        'clean': sorted(clean_set),
        'val': sorted(int(i) for i in perm[n_pool:n_pool + counts['val']]),
        'test': sorted(int(i) for i in perm[n_pool + counts['val']:]),
    }
    parts = []
    for name in SPLIT_NAMES:
        metadata = dict(dataset.metadata)
        metadata['split'] = name
        parts.append(dataset.with_sequences([dataset.sequences[i] for i in indices[name]],
                                            metadata=metadata))
    logger.info("Split sizes: " + ", ".join(f"{name}={len(p)}" for name, p in zip(SPLIT_NAMES, parts)))
    return parts[0], parts[1], parts[2], parts[3]


def dataset_stats(dataset: Dataset) -> Dict[str, Any]:
    """数据集概要统计"""
    lengths = np.array([len(s) for s in dataset.sequences], dtype=np.int64)
    type_counts = np.zeros(dataset.num_types, dtype=np.int64)
    for seq in dataset.sequences:
        type_counts += np.bincount(seq.marks(), minlength=dataset.num_types)
    total = int(type_counts.sum())
    return {
        'sequences': len(dataset),
        'events': total,
        'num_types': dataset.num_types,
        't_max': dataset.t_max,
        'mean_length': float(lengths.mean()) if len(lengths) else 0.0,
        'min_length': int(lengths.min()) if len(lengths) else 0,
        'max_length': int(lengths.max()) if len(lengths) else 0,
        'type_counts': type_counts.tolist(),
        'type_freq': (type_counts / total).tolist() if total else [0.0] * dataset.num_types,
        'max_gap': dataset.largest_gap(),
        'time_scale': dataset.time_scale(),
    }


def write_json(path: str, payload: Any) -> None:
    """写 JSON 结果文件（允许 NaN）"""
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, ensure_ascii=False, sort_keys=True)
            f.write('\n')
    except OSError as e:
        raise DatasetIOError(f"文件写入失败: {path}: {e}", path) from e


def read_json(path: str) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise DatasetIOError(f"文件不存在: {path}", path) from e
    except json.JSONDecodeError as e:
        raise MalformedInputError(f"{path}:{e.lineno}: JSON 解析失败: {e.msg}", e.lineno, path) from e
