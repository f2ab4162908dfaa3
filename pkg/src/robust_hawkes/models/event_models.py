"""
事件序列数据模型
"""
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Event(BaseModel):
    """单个事件 (t_i, v_i)"""
    model_config = ConfigDict(frozen=True)

    time: float = Field(..., ge=0)
    mark: int = Field(..., ge=0)


class EventSequence(BaseModel):
    """按时间非降序排列的事件序列"""
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    events: Tuple[Event, ...] = ()
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @field_validator('events')
    @classmethod
    def validate_sorted(cls, v: Tuple[Event, ...]) -> Tuple[Event, ...]:
        for i in range(1, len(v)):
            if v[i].time < v[i - 1].time:
                raise ValueError(f'事件未按时间排序: 位置 {i} ({v[i].time} < {v[i - 1].time})')
        return v

    def __len__(self) -> int:
        return len(self.events)

    def times(self) -> np.ndarray:
        return np.fromiter((e.time for e in self.events), dtype=np.float64, count=len(self.events))

    def marks(self) -> np.ndarray:
        return np.fromiter((e.mark for e in self.events), dtype=np.int64, count=len(self.events))

    @classmethod
    def from_arrays(cls, seq_id: str, times: Iterable[float], marks: Iterable[int],
                    metadata: Optional[Dict[str, Any]] = None) -> 'EventSequence':
        """由时间数组和类型数组构造（不做排序）"""
        events = tuple(Event(time=float(t), mark=int(m)) for t, m in zip(times, marks))
        return cls(id=seq_id, events=events, metadata=metadata or {})

    def to_record(self) -> Dict[str, Any]:
        """JSONL 行表示"""
        record: Dict[str, Any] = {'id': self.id, 'events': [[e.time, e.mark] for e in self.events]}
        if self.metadata:
            record['meta'] = self.metadata
        return record


class Dataset(BaseModel):
    """事件序列数据集；构造后视为不可变"""
    model_config = ConfigDict(frozen=True)

    sequences: Tuple[EventSequence, ...] = ()
    num_types: int = Field(..., gt=0)
    t_max: float = Field(..., gt=0)
    # 间隔归一化尺度，由 corrupt 写入表头
    max_gap: Optional[float] = Field(None, gt=0)
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def validate_events(self) -> 'Dataset':
        seen = set()
        for seq in self.sequences:
            if seq.id in seen:
                raise ValueError(f'序列 id 重复: {seq.id}')
            seen.add(seq.id)
            if len(seq) == 0:
                raise ValueError(f'序列 {seq.id} 为空')
            for e in seq.events:
                if e.mark >= self.num_types:
                    raise ValueError(f'序列 {seq.id}: mark {e.mark} >= K={self.num_types}')
                if e.time > self.t_max:
                    raise ValueError(f'序列 {seq.id}: time {e.time} > t_max={self.t_max}')
        return self

    def __len__(self) -> int:
        return len(self.sequences)

    def ids(self) -> List[str]:
        return [s.id for s in self.sequences]

    def num_events(self) -> int:
        return sum(len(s) for s in self.sequences)

    def largest_gap(self) -> float:
        gaps = [float(np.max(np.diff(s.times()))) for s in self.sequences if len(s) > 1]
        return max(gaps) if gaps else 0.0

    def time_scale(self) -> float:
        """间隔归一化尺度：表头 max_gap，缺省时取数据中最大间隔"""
        if self.max_gap is not None:
            return self.max_gap
        largest = self.largest_gap()
        return largest if largest > 0 else 1.0

    def header(self) -> Dict[str, Any]:
        header: Dict[str, Any] = {'num_types': self.num_types, 't_max': self.t_max}
        if self.max_gap is not None:
            header['max_gap'] = self.max_gap
        if self.metadata:
            header['meta'] = self.metadata
        return header

    def with_sequences(self, sequences: Sequence[EventSequence], **updates: Any) -> 'Dataset':
        """替换序列列表，保留表头"""
        fields = {'num_types': self.num_types, 't_max': self.t_max,
                  'max_gap': self.max_gap, 'metadata': dict(self.metadata)}
        fields.update(updates)
        return Dataset(sequences=tuple(sequences), **fields)


class SplitSpec(BaseModel):
    """数据集划分比例"""
    train_frac: float = Field(0.8, ge=0, le=1)
    val_frac: float = Field(0.1, ge=0, le=1)
    test_frac: float = Field(0.1, ge=0, le=1)
    clean_frac: float = Field(0.0, ge=0, le=1)
    seed: int = 0

    @model_validator(mode='after')
    def validate_sum(self) -> 'SplitSpec':
        total = self.train_frac + self.val_frac + self.test_frac + self.clean_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f'划分比例之和必须为 1，当前为 {total}')
        return self

    def fractions(self) -> Dict[str, float]:
        return {'train': self.train_frac, 'val': self.val_frac,
                'test': self.test_frac, 'clean': self.clean_frac}
