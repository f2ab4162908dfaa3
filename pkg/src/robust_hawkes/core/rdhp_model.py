"""
深度 Hawkes 编码器与预测头

事件嵌入 x_i = I_j W_s + T_i，T_i 为不可训练的时间编码；多层因果 Gaussian 核注意力
得到隐状态，强度层给出每个位置每个类型的 (μ, α, γ)，两个 MLP 分别预测下一个事件的
类型和归一化时间间隔。第 i 行的输出用于预测第 i+1 个事件。
"""
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..models.config_models import ModelConfig
from ..models.event_models import Dataset, EventSequence
from ..utils.config import load_json_model
from ..utils.exceptions import ConfigurationError, DomainError
from ..utils.logger import get_logger
from .checkpoint import load_tensors, save_tensors
from .dataset_io import dataset_hash
from .tensor_engine import (Linear, LayerNorm, Module, Parameter, Tensor, concat, dropout,
                            no_grad, swap_last)

logger = get_logger()

MASK_VALUE = -1e9
MODEL_FILE = 'model.json'
CONFIG_FILE = 'model_config.json'


def default_frequencies(embed_dim: int) -> np.ndarray:
    """ω_k = w_k = 1 / 10000^(2⌊k/2⌋/d)"""
    k = np.arange(embed_dim)
    return 1.0 / np.power(10000.0, 2 * (k // 2) / embed_dim)


def temporal_encoding(times: np.ndarray, frequencies: np.ndarray) -> np.ndarray:
    """
    T_i[k] = sin(ω_k·i + w_k·t_i)（偶数维），cos(...)（奇数维）

    Args:
        times: (..., L) 事件时间
        frequencies: (d,) 频率
    """
    times = np.asarray(times, dtype=np.float64)
    positions = np.arange(times.shape[-1], dtype=np.float64)
    angle = (positions + times)[..., None] * frequencies
    # 角度为 0 时奇数维取 1 而不是 0
    even = (np.arange(len(frequencies)) % 2 == 0)
    return np.where(even, np.sin(angle), np.cos(angle))


def one_hot(marks: np.ndarray, num_types: int) -> np.ndarray:
    marks = np.asarray(marks, dtype=np.int64)
    if marks.size and (marks.min() < 0 or marks.max() >= num_types):
        raise DomainError(f"事件类型超出 [0, {num_types})", 'mark', int(marks.max()))
    return np.eye(num_types)[marks]


def embed(seq: EventSequence, type_embedding: Tensor,
          frequencies: Optional[np.ndarray] = None) -> Tensor:
    """单条序列的事件嵌入，返回 (L, d)"""
    num_types, dim = type_embedding.shape
    freqs = default_frequencies(dim) if frequencies is None else np.asarray(frequencies)
    onehot = Tensor(one_hot(seq.marks(), num_types), dtype=type_embedding.dtype)
    return onehot @ type_embedding + Tensor(temporal_encoding(seq.times(), freqs), dtype=type_embedding.dtype)


def causal_mask(length: int) -> np.ndarray:
    """位置 i 只能看到 j <= i"""
    return np.triu(np.full((length, length), MASK_VALUE), k=1)


@dataclass
class IntensityHead:
    """每个位置、每个类型的 (μ, α, γ)"""
    mu: Tensor
    alpha: Tensor
    gamma: Tensor


@dataclass
class ForwardOutput:
    hidden: Tensor
    head: IntensityHead
    logits: Tensor
    time: Tensor
    lengths: List[int]


@dataclass
class IntensityTrace:
    """探针数据集上展平后的强度层输出"""
    values: np.ndarray
    probe_hash: str


def intensity_curve(head: IntensityHead, dt: float) -> Tensor:
    """λ_o(dt) = softplus(μ_o + (α_o − μ_o)·exp(−γ_o·dt))"""
    if dt < 0:
        raise DomainError(f"dt 必须非负: {dt}", 'dt', dt)
    decay = (head.gamma * (-float(dt))).exp()
    return (head.mu + (head.alpha - head.mu) * decay).softplus()


def head_features(head: IntensityHead) -> Tensor:
    """[softplus(α), softplus(μ), γ]，即强度曲线两端加衰减率，共 3K 维"""
    return concat([head.alpha.softplus(), head.mu.softplus(), head.gamma], axis=-1)


class GaussianAttention(Module):
    """
    多头因果注意力，权重 ∝ exp(−‖q_i − k_j‖² / √d_k)，各头共享值映射 g 并取平均
    """

    def __init__(self, dim: int, heads: int, dropout_rate: float, rng: np.random.Generator,
                 dropout_rng: np.random.Generator):
        self.heads = heads
        self.head_dim = dim // heads
        std = 1.0 / math.sqrt(dim)
        self.w_query = Parameter(rng.normal(0.0, std, size=(heads, dim, self.head_dim)))
        self.w_key = Parameter(rng.normal(0.0, std, size=(heads, dim, self.head_dim)))
        self.value = Linear(dim, dim, rng)
        self.dropout_rate = dropout_rate
        self.dropout_rng = dropout_rng

    def weights(self, x: Tensor) -> Tensor:
        """注意力权重 (B, H, L, L)"""
        batch, length, dim = x.shape
        xs = x.reshape(batch, 1, length, dim)
        q = xs @ self.w_query
        k = xs @ self.w_key
        q_sq = (q * q).sum(axis=-1, keepdims=True)
        k_sq = (k * k).sum(axis=-1).reshape(batch, self.heads, 1, length)
        sq_dist = q_sq + k_sq - (q @ swap_last(k)) * 2.0
        scores = sq_dist * (-1.0 / math.sqrt(self.head_dim)) + Tensor(causal_mask(length), dtype=x.dtype)
        return scores.softmax(axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        batch, length, dim = x.shape
        attn = dropout(self.weights(x), self.dropout_rate, self.dropout_rng, self.training)
        v = self.value(x).reshape(batch, 1, length, dim)
        return (attn @ v).mean(axis=1)


class EncoderLayer(Module):
    """x ← LayerNorm(x + attn(x))"""

    def __init__(self, dim: int, heads: int, dropout_rate: float, rng: np.random.Generator,
                 dropout_rng: np.random.Generator):
        self.attention = GaussianAttention(dim, heads, dropout_rate, rng, dropout_rng)
        self.norm = LayerNorm(dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.norm(x + self.attention(x))


class IntensityLayer(Module):
    """μ = gelu(hW_μ), α = gelu(hW_α), γ = softplus(hW_γ)"""

    def __init__(self, dim: int, num_types: int, rng: np.random.Generator):
        self.mu = Linear(dim, num_types, rng)
        self.alpha = Linear(dim, num_types, rng)
        self.gamma = Linear(dim, num_types, rng)

    def __call__(self, h: Tensor) -> IntensityHead:
        return IntensityHead(mu=self.mu(h).gelu(), alpha=self.alpha(h).gelu(),
                             gamma=self.gamma(h).softplus())


class MLP(Module):
    """n 层全连接，隐藏层 gelu + dropout"""

    def __init__(self, in_features: int, hidden: int, out_features: int, num_layers: int,
                 dropout_rate: float, rng: np.random.Generator, dropout_rng: np.random.Generator,
                 zero_last: bool = False):
        sizes = [in_features] + [hidden] * (num_layers - 1) + [out_features]
        self.layers = [Linear(sizes[i], sizes[i + 1], rng, zero_init=zero_last and i == num_layers - 1)
                       for i in range(num_layers)]
        self.dropout_rate = dropout_rate
        self.dropout_rng = dropout_rng

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = dropout(layer(x).gelu(), self.dropout_rate, self.dropout_rng, self.training)
        return self.layers[-1](x)


class RDHPModel(Module):
    """
    深度 Hawkes 模型

    参数分组：encoder（嵌入、注意力、强度层）与 heads（M_e、M_t）。
    """

    def __init__(self, config: ModelConfig, seed: int = 0, zero_init_heads: bool = False):
        if config.num_types is None:
            raise ConfigurationError("ModelConfig.num_types 未设置", 'model.num_types')
        self.config = config
        self.num_types = config.num_types
        self.time_scale = 1.0
        rng = np.random.Generator(np.random.Philox(seed))
        self.dropout_rng = np.random.Generator(np.random.Philox(seed + 1))
        dim, k = config.embed_dim, config.num_types

        self.type_embedding = Parameter(rng.normal(0.0, config.init_std, size=(k, dim)))
        self.frequencies = default_frequencies(dim)
        self.layers = [EncoderLayer(dim, config.attention_heads, config.dropout_rate, rng,
                                    self.dropout_rng)
                       for _ in range(config.attention_layers)]
        self.intensity = IntensityLayer(dim, k, rng)
        self.event_head = MLP(3 * k, config.hidden_size, k, config.mlp_layers, config.dropout_rate,
                              rng, self.dropout_rng, zero_last=zero_init_heads)
        self.time_head = MLP(3 * k, config.hidden_size, 1, config.mlp_layers, config.dropout_rate,
                             rng, self.dropout_rng, zero_last=zero_init_heads)
        self.assign_names()

    def parameter_groups(self) -> Dict[str, List[Parameter]]:
        encoder = [self.type_embedding]
        for layer in self.layers:
            encoder.extend(layer.parameters())
        encoder.extend(self.intensity.parameters())
        heads = self.event_head.parameters() + self.time_head.parameters()
        return {'encoder': encoder, 'heads': heads}

    # ---- 前向 ----

    def embed_batch(self, sequences: Sequence[EventSequence]) -> Tuple[Tensor, List[int]]:
        """右侧补齐的批量嵌入 (B, L, d)；补齐位置在因果掩码下不影响真实位置"""
        lengths = [len(s) for s in sequences]
        if not sequences or min(lengths) == 0:
            raise DomainError("序列长度必须 >= 1", 'length', min(lengths) if lengths else 0)
        max_len = max(lengths)
        marks = np.zeros((len(sequences), max_len), dtype=np.int64)
        times = np.zeros((len(sequences), max_len))
        for b, seq in enumerate(sequences):
            n = lengths[b]
            marks[b, :n] = seq.marks()
            times[b, :n] = seq.times()
            times[b, n:] = times[b, n - 1]
        dtype = self.type_embedding.dtype
        onehot = Tensor(one_hot(marks, self.num_types), dtype=dtype)
        enc = Tensor(temporal_encoding(times, self.frequencies), dtype=dtype)
        return onehot @ self.type_embedding + enc, lengths

    def encode(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def intensity_params(self, hidden: Tensor) -> IntensityHead:
        return self.intensity(hidden)

    def predict(self, head: IntensityHead) -> Tuple[Tensor, Tensor]:
        """(类型 logits, 归一化间隔估计)"""
        features = head_features(head)
        logits = self.event_head(features)
        time = self.time_head(features)
        return logits, time.reshape(time.shape[:-1])

    def forward_batch(self, sequences: Sequence[EventSequence]) -> ForwardOutput:
        x, lengths = self.embed_batch(sequences)
        hidden = self.encode(x)
        head = self.intensity_params(hidden)
        logits, time = self.predict(head)
        return ForwardOutput(hidden=hidden, head=head, logits=logits, time=time, lengths=lengths)

    def forward(self, seq: EventSequence) -> ForwardOutput:
        return self.forward_batch([seq])

    __call__ = forward

    def predict_next(self, seq: EventSequence) -> Tuple[int, float]:
        """预测下一个事件的 (类型, 时间)，间隔截断为非负"""
        if len(seq) == 0:
            raise DomainError("空序列无法预测下一个事件", 'length', 0)
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                out = self.forward(seq)
        finally:
            self.train(was_training)
        last = len(seq) - 1
        mark = int(np.argmax(out.logits.data[0, last]))
        gap = max(0.0, float(out.time.data[0, last])) * self.time_scale
        return mark, float(seq.events[-1].time + gap)

    # ---- 持久化 ----

    def save(self, directory: str) -> None:
        """推理检查点：model.json + model_config.json"""
        os.makedirs(directory, exist_ok=True)
        save_tensors(os.path.join(directory, MODEL_FILE), self.state_arrays(),
                     metadata={'time_scale': self.time_scale})
        with open(os.path.join(directory, CONFIG_FILE), 'w', encoding='utf-8') as f:
            f.write(self.config.model_dump_json(indent=2))

    @classmethod
    def load(cls, directory: str) -> 'RDHPModel':
        config = load_json_model(os.path.join(directory, CONFIG_FILE), ModelConfig)
        arrays, metadata = load_tensors(os.path.join(directory, MODEL_FILE))
        model = cls(config)
        model.load_state_arrays(arrays)
        model.time_scale = float(metadata.get('time_scale', 1.0))
        model.eval()
        return model


def intensity_trace(model: RDHPModel, probe: Dataset, batch_size: int = 64) -> IntensityTrace:
    """在探针数据集上收集 (μ, α, γ)，只保留真实位置"""
    was_training = model.training
    model.eval()
    chunks: List[np.ndarray] = []
    try:
        with no_grad():
            for start in range(0, len(probe), batch_size):
                batch = probe.sequences[start:start + batch_size]
                out = model.forward_batch(batch)
                stacked = np.concatenate([out.head.mu.data, out.head.alpha.data, out.head.gamma.data],
                                         axis=-1)
                for b, n in enumerate(out.lengths):
                    chunks.append(stacked[b, :n].astype(np.float64).reshape(-1))
    finally:
        model.train(was_training)
    values = np.concatenate(chunks) if chunks else np.empty(0)
    return IntensityTrace(values=values, probe_hash=dataset_hash(probe))
