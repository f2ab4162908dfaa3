"""
数据模型模块
"""
from .config_models import (
    ROBUST_PRESETS,
    GceConfig,
    HawkesParams,
    ModelConfig,
    NoiseKind,
    NoiseMode,
    NoiseSpec,
    ReweightConfig,
    SimulationConfig,
    SweepConfig,
    TrainConfig,
)
from .event_models import Dataset, Event, EventSequence, SplitSpec

__all__ = [
    'ROBUST_PRESETS',
    'Dataset',
    'Event',
    'EventSequence',
    'GceConfig',
    'HawkesParams',
    'ModelConfig',
    'NoiseKind',
    'NoiseMode',
    'NoiseSpec',
    'ReweightConfig',
    'SimulationConfig',
    'SplitSpec',
    'SweepConfig',
    'TrainConfig',
]
