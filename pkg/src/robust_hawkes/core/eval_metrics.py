"""
评估指标：Macro F1、RMSE 与强度层偏移诊断
"""
import math
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from ..models.event_models import Dataset
from ..utils.exceptions import ConfigurationError, ContractError
from .rdhp_model import IntensityTrace, RDHPModel, intensity_trace

DIVERGENCE_METRICS = ('mean_abs', 'mean_sq')


def _paired(preds: Sequence, truths: Sequence, what: str):
    preds, truths = np.asarray(preds), np.asarray(truths)
    if preds.shape != truths.shape:
        raise ContractError(f"{what}: 预测与真值长度不一致 ({len(preds)} vs {len(truths)})")
    if preds.size == 0:
        raise ContractError(f"{what}: 至少需要一个样本")
    return preds, truths


def confusion_matrix(preds: Sequence[int], truths: Sequence[int], num_types: int) -> np.ndarray:
    """行为真实类型，列为预测类型"""
    preds, truths = _paired(preds, truths, 'confusion_matrix')
    matrix = np.zeros((num_types, num_types), dtype=np.int64)
    np.add.at(matrix, (truths.astype(np.int64), preds.astype(np.int64)), 1)
    return matrix


def macro_f1(preds: Sequence[int], truths: Sequence[int], num_types: Optional[int] = None) -> float:
    """
    K 个类别 F1 的无权平均；没有真正例的类别记 0

    Args:
        preds: 预测类型
        truths: 真实类型
        num_types: 声明的类别数，缺省为出现过的最大类型 + 1
    """
    p, t = _paired(preds, truths, 'macro_f1')
    k = num_types if num_types is not None else int(max(p.max(), t.max())) + 1
    matrix = confusion_matrix(p, t, k)
    tp = np.diag(matrix).astype(np.float64)
    predicted = matrix.sum(axis=0)
    actual = matrix.sum(axis=1)
    scores = np.zeros(k)
    hit = tp > 0
    scores[hit] = 2 * tp[hit] / (predicted[hit] + actual[hit])
    return float(scores.mean())


def rmse(preds: Sequence[float], truths: Sequence[float]) -> float:
    p, t = _paired(preds, truths, 'rmse')
    diff = p.astype(np.float64) - t.astype(np.float64)
    return float(math.sqrt(np.mean(diff * diff)))


def intensity_divergence(trace_a: IntensityTrace, trace_b: IntensityTrace,
                         metric: str = 'mean_abs') -> float:
    """
    两个检查点在同一探针集上强度层输出的差异

    Args:
        trace_a, trace_b: 强度轨迹
        metric: mean_abs（默认）或 mean_sq
    """
    if metric not in DIVERGENCE_METRICS:
        raise ConfigurationError(f"未知的差异度量: {metric}", 'metric', metric)
    if trace_a.probe_hash != trace_b.probe_hash:
        raise ContractError("两个强度轨迹来自不同的探针数据集",
                            {'probe_a': trace_a.probe_hash, 'probe_b': trace_b.probe_hash})
    if trace_a.values.shape != trace_b.values.shape:
        raise ContractError(f"强度轨迹长度不一致: {trace_a.values.shape} vs {trace_b.values.shape}")
    if trace_a.values.size == 0:
        return 0.0
    diff = trace_a.values.astype(np.float64) - trace_b.values.astype(np.float64)
    if metric == 'mean_abs':
        return float(np.mean(np.abs(diff)))
    return float(np.mean(diff * diff))


def compounding_report(clean_ckpt, time_ckpt, label_ckpt, both_ckpt, probe: Dataset,
                       metric: str = 'mean_abs') -> Dict[str, Any]:
    """
    以干净模型为参照，计算仅时间噪声、仅类型噪声与两者同时存在时的强度偏移

    Args:
        *_ckpt: 检查点目录或已加载的 RDHPModel
        probe: 探针数据集
        metric: 差异度量

    Returns:
        包含四个偏移量与 D_both / (D_time + D_label) 的报告；分母为 0 时比值为 NaN
    """
    def trace(ckpt: Union[str, RDHPModel]) -> IntensityTrace:
        model = RDHPModel.load(ckpt) if isinstance(ckpt, str) else ckpt
        return intensity_trace(model, probe)

    reference = trace(clean_ckpt)
    divergences = {
        'clean': intensity_divergence(reference, reference, metric),
        'time': intensity_divergence(reference, trace(time_ckpt), metric),
        'label': intensity_divergence(reference, trace(label_ckpt), metric),
        'both': intensity_divergence(reference, trace(both_ckpt), metric),
    }
    denominator = divergences['time'] + divergences['label']
    ratio = divergences['both'] / denominator if denominator > 0 else math.nan
    return {
        'divergences': divergences,
        'ratio': ratio,
        'both_exceeds_max': divergences['both'] > max(divergences['time'], divergences['label']),
        'both_exceeds_sum': divergences['both'] > denominator,
        'metadata': {
            'metric': metric,
            'statistic': 'difference of flattened intensity-layer outputs (mu, alpha, gamma)',
            'probe_hash': reference.probe_hash,
            'probe_points': int(reference.values.size),
        },
    }
