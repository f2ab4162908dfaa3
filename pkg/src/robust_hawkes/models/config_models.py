"""
配置与参数模型
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..utils.logger import get_logger
from .event_models import SplitSpec

logger = get_logger()


class HawkesParams(BaseModel):
    """多元 Hawkes 过程真值参数 (μ, α, γ)"""
    model_config = ConfigDict(frozen=True)

    mu: List[float]
    # alpha[o][j]: 类型 j 的事件对类型 o 强度的激励
    alpha: List[List[float]]
    gamma: List[List[float]]

    @model_validator(mode='after')
    def validate_shapes(self) -> 'HawkesParams':
        k = len(self.mu)
        if k == 0:
            raise ValueError('mu 不能为空')
        for name, matrix in (('alpha', self.alpha), ('gamma', self.gamma)):
            if len(matrix) != k or any(len(row) != k for row in matrix):
                raise ValueError(f'{name} 必须是 {k}x{k} 矩阵')
        if any(m < 0 for m in self.mu):
            raise ValueError('mu 必须非负')
        if any(a < 0 for row in self.alpha for a in row):
            raise ValueError('alpha 必须非负')
        if any(g <= 0 for row in self.gamma for g in row):
            raise ValueError('gamma 必须为正')
        if not self.is_stable:
            logger.warning(f"Hawkes params unstable: spectral radius {self.spectral_radius:.4f} >= 1")
        return self

    @property
    def num_types(self) -> int:
        return len(self.mu)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.asarray(self.mu, dtype=np.float64),
                np.asarray(self.alpha, dtype=np.float64),
                np.asarray(self.gamma, dtype=np.float64))

    @property
    def spectral_radius(self) -> float:
        _, alpha, gamma = self.arrays()
        return float(np.max(np.abs(np.linalg.eigvals(alpha / gamma))))

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0


class NoiseKind(str, Enum):
    """事件类型噪声种类"""
    UNIFORM = "uniform"
    FLIP = "flip"
    FLIP2 = "flip2"
    NONE = "none"


class NoiseSpec(BaseModel):
    """噪声配方"""
    kind: NoiseKind = NoiseKind.NONE
    p: float = Field(0.0, ge=0, le=1)
    time_p: float = Field(0.0, ge=0, le=1)
    time_sigma: float = Field(0.8, ge=0)
    seed: int = 0


class ModelConfig(BaseModel):
    """深度 Hawkes 模型结构与默认超参数"""
    num_types: Optional[int] = Field(None, gt=0)
    embed_dim: int = Field(32, gt=0)
    attention_heads: int = Field(8, gt=0)
    attention_layers: int = Field(4, gt=0)
    mlp_layers: int = Field(3, gt=0)
    hidden_size: int = Field(32, gt=0)
    dropout_rate: float = Field(0.2, ge=0, lt=1)
    init_std: float = Field(0.1, gt=0)

    @model_validator(mode='after')
    def validate_heads(self) -> 'ModelConfig':
        if self.embed_dim % self.attention_heads != 0:
            raise ValueError(f'embed_dim {self.embed_dim} 必须能被 attention_heads '
                             f'{self.attention_heads} 整除')
        return self


class GceConfig(BaseModel):
    """GCE 损失温度"""
    beta: float = Field(0.7, gt=0, le=1)


class ReweightConfig(BaseModel):
    """重加权网络"""
    hidden_size: int = Field(64, gt=0)
    lr: float = Field(1e-3, gt=0)
    # 按批均值归一化权重；关闭时 σ 直接取 (0, 1) 输出，干净批目标会把 σ 推向 0
    normalize: bool = True


ROBUST_PRESETS: Dict[str, Dict[str, bool]] = {
    'rdhp': {'use_gce': True, 'use_overparam': True, 'use_reweight': True},
    'baseline': {'use_gce': False, 'use_overparam': False, 'use_reweight': False},
    'no_overparam': {'use_gce': True, 'use_overparam': False, 'use_reweight': True},
    'no_reweight': {'use_gce': True, 'use_overparam': True, 'use_reweight': False},
    'gce_only': {'use_gce': True, 'use_overparam': False, 'use_reweight': False},
}


class TrainConfig(BaseModel):
    """训练配置（字段名即 train.json 的键）"""
    batch_size: int = Field(16, gt=0)
    lr: float = Field(1e-3, gt=0)
    # m、n 的步长为 over_lr_* × lr，作用在逐样本梯度上
    over_lr_m: float = Field(1000.0, gt=0)
    over_lr_n: float = Field(100.0, gt=0)
    epochs: int = Field(200, ge=0)
    gce_beta: float = Field(0.7, gt=0, le=1)
    clean_batch_size: int = Field(16, gt=0)
    seed: int = 0
    use_gce: bool = True
    use_overparam: bool = True
    use_reweight: bool = True
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)
    max_grad_norm: float = Field(5.0, gt=0)
    overparam_init_std: float = Field(1e-8, ge=0)
    trace_stages: bool = False
    dump_dir: Optional[str] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    reweight: ReweightConfig = Field(default_factory=ReweightConfig)

    @field_validator('adam_betas')
    @classmethod
    def validate_betas(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not all(0 <= b < 1 for b in v):
            raise ValueError('adam_betas 必须在 [0, 1) 内')
        return v

    @property
    def gce(self) -> GceConfig:
        return GceConfig(beta=self.gce_beta)

    def apply_preset(self, preset: str) -> 'TrainConfig':
        if preset not in ROBUST_PRESETS:
            raise ValueError(f'未知预设: {preset}，可选 {sorted(ROBUST_PRESETS)}')
        return self.model_copy(update=ROBUST_PRESETS[preset])


class SimulationConfig(BaseModel):
    """合成数据生成配置"""
    params: HawkesParams
    t_max: float = Field(..., gt=0)
    n_seqs: int = Field(..., gt=0)
    seed: int = 0
    max_events: int = Field(100_000, gt=0)


class NoiseMode(str, Enum):
    """噪声作用对象：类型、时间或两者"""
    BOTH = "both"
    LABEL_ONLY = "label_only"
    TIME_ONLY = "time_only"


class SweepConfig(BaseModel):
    """实验网格：噪声种类 × 噪声率 × 随机种子 × 模型预设"""
    dataset: Optional[str] = None
    simulate: Optional[SimulationConfig] = None
    kinds: List[NoiseKind] = Field(default_factory=lambda: [NoiseKind.UNIFORM])
    ps: List[float] = Field(default_factory=lambda: [0.0, 0.3])
    seeds: List[int] = Field(default_factory=lambda: [0])
    modes: List[NoiseMode] = Field(default_factory=lambda: [NoiseMode.BOTH])
    presets: List[str] = Field(default_factory=lambda: ['rdhp', 'baseline'])
    time_sigma: float = Field(0.8, ge=0)
    split: SplitSpec = Field(default_factory=lambda: SplitSpec(
        train_frac=0.75, val_frac=0.1, test_frac=0.1, clean_frac=0.05))
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode='after')
    def validate_source(self) -> 'SweepConfig':
        if (self.dataset is None) == (self.simulate is None):
            raise ValueError('dataset 与 simulate 必须恰好提供一个')
        if any(not 0 <= p <= 1 for p in self.ps):
            raise ValueError('ps 中的噪声率必须在 [0, 1] 内')
        unknown = [p for p in self.presets if p not in ROBUST_PRESETS]
        if unknown:
            raise ValueError(f'未知预设: {unknown}')
        if not self.seeds:
            raise ValueError('seeds 不能为空')
        return self
