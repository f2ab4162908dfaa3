"""
抗噪损失

- GCE 类型损失 (1 − q^β)/β
- 带逐样本过参数化项 p = m²t − n²(1−t) 的 MAE 时间损失
- 把逐样本损失对映射为权重的重加权网络
"""
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from ..models.config_models import GceConfig
from ..utils.exceptions import ConfigurationError, ContractError
from .tensor_engine import Linear, Module, Tensor, as_tensor

SampleKey = Tuple[str, int]
Numeric = Union[Tensor, np.ndarray, float]


def _select_targets(log_probs: Tensor, targets: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    if log_probs.ndim == 1:
        return log_probs[int(targets)]  # type: ignore[arg-type]
    idx = np.asarray(targets, dtype=np.int64)
    if idx.shape[0] != log_probs.shape[0]:
        raise ContractError(f"logits 与目标数量不一致: {log_probs.shape[0]} vs {idx.shape[0]}")
    return log_probs[np.arange(idx.shape[0]), idx]


def check_beta(beta: float) -> None:
    if not 0.0 < beta <= 1.0:
        raise ConfigurationError(f"GCE beta 必须在 (0, 1] 内: {beta}", 'gce_beta', beta)


def gce_loss(logits: Tensor, targets: Union[int, Sequence[int], np.ndarray],
             beta: Union[float, GceConfig]) -> Tensor:
    """
    广义交叉熵，β=1 时即 MAE 形式 1−q，β→0 时趋于交叉熵

    Args:
        logits: (K,) 或 (N, K)
        targets: 目标类型
        beta: 温度 (0, 1] 或 GceConfig

    Returns:
        标量或 (N,) 逐样本损失
    """
    if isinstance(beta, GceConfig):
        beta = beta.beta
    check_beta(beta)
    log_q = _select_targets(logits.log_softmax(axis=-1), targets)
    return (1.0 - (log_q * beta).exp()) * (1.0 / beta)


def cce_loss(logits: Tensor, targets: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """分类交叉熵 −log q"""
    return -_select_targets(logits.log_softmax(axis=-1), targets)


def over_param_value(m: Numeric, n: Numeric, t: Numeric) -> Numeric:
    """p = m²·t − n²·(1−t)"""
    return m * m * t - n * n * (1.0 - t)


def time_loss(prediction: Numeric, p: Numeric, t: Numeric) -> Tensor:
    """|prediction + p − t|"""
    return (as_tensor(prediction) + p - t).abs()


class OverParams:
    """
    逐训练样本的 (m, n)，以 (序列 id, 位置) 为键，始终投影在 [−1, 1] 内

    只参与训练，推理时不使用。
    """

    def __init__(self, keys: Sequence[SampleKey], m: np.ndarray, n: np.ndarray):
        self.keys: List[SampleKey] = [(str(k[0]), int(k[1])) for k in keys]
        self.index: Dict[SampleKey, int] = {k: i for i, k in enumerate(self.keys)}
        self.m = np.clip(np.asarray(m, dtype=np.float64), -1.0, 1.0)
        self.n = np.clip(np.asarray(n, dtype=np.float64), -1.0, 1.0)

    @classmethod
    def initialize(cls, keys: Sequence[SampleKey], std: float, rng: np.random.Generator) -> 'OverParams':
        size = len(keys)
        return cls(keys, rng.normal(0.0, std, size=size), rng.normal(0.0, std, size=size))

    def __len__(self) -> int:
        return len(self.keys)

    def lookup(self, keys: Iterable[SampleKey]) -> np.ndarray:
        try:
            return np.array([self.index[k] for k in keys], dtype=np.int64)
        except KeyError as e:
            raise ContractError(f"样本 {e} 没有对应的过参数") from e

    def gather(self, indices: np.ndarray, dtype: np.dtype) -> Tuple[Tensor, Tensor]:
        """取出一批样本的 (m, n) 作为可求导叶子张量"""
        return (Tensor(self.m[indices], requires_grad=True, dtype=dtype),
                Tensor(self.n[indices], requires_grad=True, dtype=dtype))

    def update(self, indices: np.ndarray, grad_m: np.ndarray, grad_n: np.ndarray,
               lr_m: float, lr_n: float) -> None:
        """投影梯度步 P_[−1,1](x − lr·g)"""
        self.m[indices] = np.clip(self.m[indices] - lr_m * grad_m, -1.0, 1.0)
        self.n[indices] = np.clip(self.n[indices] - lr_n * grad_n, -1.0, 1.0)

    def values(self, indices: np.ndarray, targets: np.ndarray) -> np.ndarray:
        return over_param_value(self.m[indices], self.n[indices], targets)  # type: ignore[return-value]


def sample_keys(sequences: Iterable) -> List[SampleKey]:
    """每个前缀一个样本：位置 i 的输出预测第 i+1 个事件"""
    return [(seq.id, i) for seq in sequences for i in range(len(seq) - 1)]


class ReweightNet(Module):
    """(L^v, L^t) → (σ^v, σ^t)：2 → hidden (gelu) → 2 (sigmoid)"""

    def __init__(self, hidden_size: int = 64, seed: int = 0, zero_last: bool = False):
        rng = np.random.Generator(np.random.Philox(seed))
        self.hidden = Linear(2, hidden_size, rng)
        self.output = Linear(hidden_size, 2, rng, zero_init=zero_last)
        self.assign_names('reweight.')

    def __call__(self, losses: Tensor) -> Tensor:
        return self.output(self.hidden(losses).gelu()).sigmoid()


def reweight(net: ReweightNet, losses: Union[Tensor, np.ndarray]) -> Tensor:
    """
    逐样本权重

    Args:
        net: 重加权网络
        losses: (N, 2) 损失对 (L^v, L^t)

    Returns:
        (N, 2) 权重，取值在 (0, 1)
    """
    losses = as_tensor(losses)
    if losses.ndim != 2 or losses.shape[1] != 2:
        raise ContractError(f"重加权网络输入形状必须为 (N, 2)，当前 {losses.shape}")
    return net(losses)


def normalize_weights(sigma: Tensor) -> Tensor:
    """按批均值归一化每一列"""
    return sigma / sigma.mean(axis=0, keepdims=True)


def combined_loss(loss_v: Tensor, loss_t: Tensor, weights: Union[Tensor, np.ndarray]) -> Tensor:
    """mean(σ^v·L^v + σ^t·L^t)"""
    weights = as_tensor(weights)
    n = loss_v.shape[0] if loss_v.ndim else 1
    if loss_t.shape != loss_v.shape or weights.ndim != 2 or weights.shape[0] != n:
        raise ContractError(
            f"损失与权重长度不一致: L^v {loss_v.shape}, L^t {loss_t.shape}, σ {weights.shape}",
            {'loss_v': list(loss_v.shape), 'loss_t': list(loss_t.shape), 'weights': list(weights.shape)})
    return (weights[:, 0] * loss_v + weights[:, 1] * loss_t).mean()
