"""
RDHP 训练循环

每个噪声小批量依次执行：
  (a) 噪声批前向，得到逐样本损失；
  (b) 冻结主网络，在干净小批量上更新重加权网络；
  (c) 由冻结的重加权网络给出权重，一次反向传播后按顺序更新
      预测头 → 过参数 (m, n) → 编码器。
"""
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..models.config_models import TrainConfig
from ..models.event_models import Dataset, EventSequence
from ..utils.exceptions import (CheckpointError, ConfigurationError, EmptyDatasetError,
                                NumericalInstabilityError)
from ..utils.logger import get_logger
from .checkpoint import load_tensors, save_tensors
from .eval_metrics import macro_f1, rmse
from .rdhp_model import RDHPModel
from .robust_losses import (OverParams, ReweightNet, cce_loss, combined_loss, gce_loss,
                            normalize_weights, over_param_value, reweight, sample_keys, time_loss)
from .tensor_engine import Adam, Tensor, clip_grad_norm, no_grad

logger = get_logger()

HISTORY_COLUMNS = ['epoch', 'train_loss_v', 'train_loss_t', 'sigma_v_mean', 'sigma_t_mean',
                   'val_f1', 'val_rmse', 'sigma_delta']
STAGES = ('reweight', 'heads', 'overparams', 'encoder')
STATE_FILE = 'train_state.json'


@dataclass
class TrainState:
    """完整的可恢复训练状态"""
    config: TrainConfig
    model: RDHPModel
    heads_opt: Adam
    encoder_opt: Adam
    reweight_net: ReweightNet
    reweight_opt: Adam
    overparams: OverParams
    rng: np.random.Generator
    epoch: int = 0
    sigma_memory: Optional[np.ndarray] = None
    trace: List[str] = field(default_factory=list)
    best_f1: float = -math.inf
    best_epoch: int = 0
    best_arrays: Optional[Dict[str, np.ndarray]] = None

    @property
    def time_scale(self) -> float:
        return self.model.time_scale


@dataclass
class BatchLosses:
    loss_v: Tensor
    loss_t: Tensor
    indices: np.ndarray
    m: Optional[Tensor] = None
    n: Optional[Tensor] = None


def create_state(config: TrainConfig, num_types: int, time_scale: float,
                 keys: Sequence[Tuple[str, int]]) -> TrainState:
    """由配置和训练样本键构造初始状态"""
    if config.model.num_types is not None and config.model.num_types != num_types:
        raise ConfigurationError(f"model.num_types={config.model.num_types} 与数据集 K={num_types} 不一致",
                                 'model.num_types', config.model.num_types)
    model_config = config.model.model_copy(update={'num_types': num_types})
    model = RDHPModel(model_config, seed=config.seed)
    model.time_scale = time_scale
    groups = model.parameter_groups()
    heads_opt = Adam(groups['heads'], config.lr, config.adam_betas, config.adam_eps, group='heads')
    encoder_opt = Adam(groups['encoder'], config.lr, config.adam_betas, config.adam_eps, group='encoder')
    net = ReweightNet(config.reweight.hidden_size, seed=config.seed + 2)
    reweight_opt = Adam(net.parameters(), config.reweight.lr, config.adam_betas, config.adam_eps,
                        group='reweight')
    overparams = OverParams.initialize(keys, config.overparam_init_std,
                                       np.random.Generator(np.random.Philox(config.seed + 3)))
    return TrainState(config=config, model=model, heads_opt=heads_opt, encoder_opt=encoder_opt,
                      reweight_net=net, reweight_opt=reweight_opt, overparams=overparams,
                      rng=np.random.Generator(np.random.Philox(config.seed + 4)),
                      sigma_memory=np.full((len(keys), 2), np.nan))


def build_state(config: TrainConfig, noisy_train: Dataset) -> TrainState:
    return create_state(config, noisy_train.num_types, noisy_train.time_scale(),
                        sample_keys(noisy_train.sequences))


def _trainable(sequences: Sequence[EventSequence]) -> List[EventSequence]:
    return [s for s in sequences if len(s) >= 2]


def batch_targets(sequences: Sequence[EventSequence], max_len: int,
                  time_scale: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    教师强制目标

    Returns:
        (展平后的行索引, 下一事件类型, 归一化间隔 ∈ [0, 1])
    """
    rows, marks, gaps = [], [], []
    for b, seq in enumerate(sequences):
        n = len(seq)
        if n < 2:
            continue
        times = seq.times()
        rows.append(b * max_len + np.arange(n - 1))
        marks.append(seq.marks()[1:])
        gaps.append(np.clip(np.diff(times) / time_scale, 0.0, 1.0))
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    return np.concatenate(rows), np.concatenate(marks), np.concatenate(gaps)


def batch_losses(state: TrainState, sequences: Sequence[EventSequence],
                 with_overparams: bool = True) -> BatchLosses:
    """前向并计算逐样本 (L^v, L^t)"""
    config = state.config
    model = state.model
    out = model.forward_batch(sequences)
    max_len = max(out.lengths)
    rows, marks, gaps = batch_targets(sequences, max_len, model.time_scale)
    logits = out.logits.reshape(-1, model.num_types)[rows]
    prediction = out.time.reshape(-1)[rows]
    targets = Tensor(gaps, dtype=prediction.dtype)

    loss_v = gce_loss(logits, marks, config.gce) if config.use_gce else cce_loss(logits, marks)
    indices = np.empty(0, np.int64)
    m = n = None
    if config.use_overparam and with_overparams:
        keys = [(seq.id, i) for seq in sequences for i in range(len(seq) - 1)]
        indices = state.overparams.lookup(keys)
        m, n = state.overparams.gather(indices, prediction.dtype)
        loss_t = time_loss(prediction, over_param_value(m, n, targets), targets)
    else:
        loss_t = time_loss(prediction, 0.0, targets)
    return BatchLosses(loss_v=loss_v, loss_t=loss_t, indices=indices, m=m, n=n)


def _loss_pairs(losses: BatchLosses) -> np.ndarray:
    return np.stack([losses.loss_v.data, losses.loss_t.data], axis=1).astype(np.float64)


def _record(state: TrainState, stage: str) -> None:
    if state.config.trace_stages:
        state.trace.append(stage)


def update_reweight_net(state: TrainState, clean_batch: Sequence[EventSequence]) -> float:
    """冻结主网络，在干净批上最小化加权损失以更新重加权网络"""
    model = state.model
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            clean = batch_losses(state, clean_batch, with_overparams=False)
    finally:
        model.train(was_training)
    pairs = _loss_pairs(clean)
    sigma = reweight(state.reweight_net, Tensor(pairs, dtype=clean.loss_v.dtype))
    if state.config.reweight.normalize:
        sigma = normalize_weights(sigma)
    objective = combined_loss(Tensor(pairs[:, 0]), Tensor(pairs[:, 1]), sigma)
    state.reweight_opt.zero_grad()
    objective.backward()
    state.reweight_opt.step()
    return objective.item()


def _sample_weights(state: TrainState, losses: BatchLosses) -> np.ndarray:
    if not state.config.use_reweight:
        return np.ones((losses.loss_v.shape[0], 2))
    with no_grad():
        sigma = reweight(state.reweight_net, Tensor(_loss_pairs(losses), dtype=losses.loss_v.dtype))
        if state.config.reweight.normalize:
            sigma = normalize_weights(sigma)
    return sigma.data.astype(np.float64)


def _dump_batch(state: TrainState, sequences: Sequence[EventSequence], losses: BatchLosses,
                weights: np.ndarray) -> str:
    directory = state.config.dump_dir or '.'
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"nan_dump_epoch{state.epoch + 1}.json")
    payload = {
        'epoch': state.epoch + 1,
        'sequence_ids': [s.id for s in sequences],
        'loss_v': losses.loss_v.data.tolist(),
        'loss_t': losses.loss_t.data.tolist(),
        'weights': weights.tolist(),
        'sequences': [s.to_record() for s in sequences],
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f)
    return path


def train_epoch(state: TrainState, noisy_train: Dataset,
                clean: Optional[Dataset] = None) -> Tuple[TrainState, Dict[str, float]]:
    """
    训练一轮

    Args:
        state: 训练状态（原地更新）
        noisy_train: 加噪训练集
        clean: 干净集，use_reweight 时必需

    Returns:
        (state, 本轮指标)
    """
    config = state.config
    train_seqs = _trainable(noisy_train.sequences)
    if not train_seqs:
        raise EmptyDatasetError("训练集中没有长度 >= 2 的序列")
    clean_seqs = _trainable(clean.sequences) if clean is not None else []
    if config.use_reweight and not clean_seqs:
        raise ConfigurationError("use_reweight 需要非空的干净集", 'use_reweight', True)

    model = state.model
    model.train()
    order = state.rng.permutation(len(train_seqs))
    totals = {'loss_v': 0.0, 'loss_t': 0.0, 'sigma_v': 0.0, 'sigma_t': 0.0}
    samples = 0
    clipped = 0
    batches = 0

    for start in range(0, len(order), config.batch_size):
        batch = [train_seqs[i] for i in order[start:start + config.batch_size]]

        losses = batch_losses(state, batch)
        if config.use_reweight:
            picks = state.rng.choice(len(clean_seqs), size=min(config.clean_batch_size, len(clean_seqs)),
                                     replace=False)
            update_reweight_net(state, [clean_seqs[i] for i in sorted(picks)])
            _record(state, 'reweight')

        weights = _sample_weights(state, losses)
        loss = combined_loss(losses.loss_v, losses.loss_t, weights)
        if not math.isfinite(loss.item()):
            dump = _dump_batch(state, batch, losses, weights)
            logger.error(f"Non-finite loss at epoch {state.epoch + 1}; batch dumped to {dump}")
            raise NumericalInstabilityError(f"第 {state.epoch + 1} 轮出现非有限损失，批次已转储到 {dump}",
                                            state.epoch + 1, [s.id for s in batch], dump)

        state.heads_opt.zero_grad()
        state.encoder_opt.zero_grad()
        loss.backward()
        norm = clip_grad_norm(state.heads_opt.params + state.encoder_opt.params, config.max_grad_norm)
        if norm > config.max_grad_norm:
            clipped += 1

        state.heads_opt.step()
        _record(state, 'heads')
        if config.use_overparam and losses.m is not None and losses.n is not None:
            # combined_loss 按批平均；乘回样本数得到每个样本自身损失的梯度
            count = float(len(losses.indices))
            zeros = np.zeros(len(losses.indices))
            grad_m = losses.m.grad * count if losses.m.grad is not None else zeros
            grad_n = losses.n.grad * count if losses.n.grad is not None else zeros
            state.overparams.update(losses.indices, grad_m, grad_n,
                                    config.over_lr_m * config.lr, config.over_lr_n * config.lr)
            _record(state, 'overparams')
        state.encoder_opt.step()
        _record(state, 'encoder')

        if state.sigma_memory is not None and config.use_reweight:
            keys = [(seq.id, i) for seq in batch for i in range(len(seq) - 1)]
            state.sigma_memory[state.overparams.lookup(keys)] = weights

        count = losses.loss_v.shape[0]
        totals['loss_v'] += float(np.sum(losses.loss_v.data, dtype=np.float64))
        totals['loss_t'] += float(np.sum(losses.loss_t.data, dtype=np.float64))
        totals['sigma_v'] += float(np.sum(weights[:, 0]))
        totals['sigma_t'] += float(np.sum(weights[:, 1]))
        samples += count
        batches += 1

    state.epoch += 1
    if clipped:
        logger.info(f"Epoch {state.epoch}: gradient norm clipped in {clipped}/{batches} batches")
    metrics = {
        'train_loss_v': totals['loss_v'] / samples,
        'train_loss_t': totals['loss_t'] / samples,
        'sigma_v_mean': totals['sigma_v'] / samples,
        'sigma_t_mean': totals['sigma_t'] / samples,
        'clipped_batches': clipped,
        'batches': batches,
    }
    return state, metrics


def _as_model(target: Union[TrainState, RDHPModel]) -> RDHPModel:
    return target.model if isinstance(target, TrainState) else target


def predict_next(target: Union[TrainState, RDHPModel], seq: EventSequence) -> Tuple[int, float]:
    """推理：argmax 类型与反归一化时间；过参数不参与"""
    return _as_model(target).predict_next(seq)


def collect_predictions(target: Union[TrainState, RDHPModel], dataset: Dataset,
                        batch_size: int = 64) -> Dict[str, np.ndarray]:
    """对每个前缀做教师强制预测，时间为反归一化后的绝对时间"""
    model = _as_model(target)
    seqs = _trainable(dataset.sequences)
    pred_marks, true_marks, pred_times, true_times = [], [], [], []
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            for start in range(0, len(seqs), batch_size):
                batch = seqs[start:start + batch_size]
                out = model.forward_batch(batch)
                for b, seq in enumerate(batch):
                    n = len(seq)
                    times = seq.times()
                    logits = out.logits.data[b, :n - 1]
                    gaps = np.maximum(out.time.data[b, :n - 1].astype(np.float64), 0.0)
                    pred_marks.append(np.argmax(logits, axis=-1))
                    true_marks.append(seq.marks()[1:])
                    pred_times.append(times[:-1] + gaps * model.time_scale)
                    true_times.append(times[1:])
    finally:
        model.train(was_training)
    if not pred_marks:
        empty_i, empty_f = np.empty(0, np.int64), np.empty(0)
        return {'pred_marks': empty_i, 'true_marks': empty_i, 'pred_times': empty_f, 'true_times': empty_f}
    return {'pred_marks': np.concatenate(pred_marks), 'true_marks': np.concatenate(true_marks),
            'pred_times': np.concatenate(pred_times), 'true_times': np.concatenate(true_times)}


def evaluate(target: Union[TrainState, RDHPModel], dataset: Dataset) -> Dict[str, float]:
    """{"macro_f1", "rmse", "n"}；没有可评估样本时指标为 NaN"""
    preds = collect_predictions(target, dataset)
    n = int(len(preds['true_marks']))
    if n == 0:
        return {'macro_f1': math.nan, 'rmse': math.nan, 'n': 0}
    model = _as_model(target)
    return {
        'macro_f1': macro_f1(preds['pred_marks'], preds['true_marks'], model.num_types),
        'rmse': rmse(preds['pred_times'], preds['true_times']),
        'n': n,
    }


def _sigma_delta(state: TrainState, previous: Optional[np.ndarray]) -> float:
    """逐样本 |Δσ^v| + |Δσ^t| 的均值"""
    if previous is None or state.sigma_memory is None:
        return math.nan
    diff = np.abs(state.sigma_memory - previous).sum(axis=1)
    valid = diff[np.isfinite(diff)]
    return float(valid.mean()) if valid.size else math.nan


def fit(config: TrainConfig, noisy_train: Dataset, clean: Optional[Dataset] = None,
        val: Optional[Dataset] = None,
        on_epoch: Optional[Callable[[int, Dict[str, float]], None]] = None,
        state: Optional[TrainState] = None) -> Tuple[TrainState, pd.DataFrame]:
    """
    训练 N 轮，每轮记录验证集 Macro F1 与 RMSE，保留验证 F1 最好的参数

    Returns:
        (训练状态, history DataFrame)
    """
    state = state or build_state(config, noisy_train)
    rows: List[Dict[str, float]] = []
    previous_sigma: Optional[np.ndarray] = None
    remaining = config.epochs - state.epoch

    for _ in range(max(remaining, 0)):
        state, metrics = train_epoch(state, noisy_train, clean)
        scores = evaluate(state, val) if val is not None and len(val) else {'macro_f1': math.nan,
                                                                           'rmse': math.nan}
        row = {
            'epoch': state.epoch,
            'train_loss_v': metrics['train_loss_v'],
            'train_loss_t': metrics['train_loss_t'],
            'sigma_v_mean': metrics['sigma_v_mean'],
            'sigma_t_mean': metrics['sigma_t_mean'],
            'val_f1': scores['macro_f1'],
            'val_rmse': scores['rmse'],
            'sigma_delta': _sigma_delta(state, previous_sigma) if config.use_reweight else 0.0,
        }
        if state.sigma_memory is not None:
            previous_sigma = state.sigma_memory.copy()
        rows.append(row)

        f1 = scores['macro_f1']
        # 没有可用的验证 F1 时保留最新一轮
        no_score = not math.isfinite(f1) and not math.isfinite(state.best_f1)
        if state.best_arrays is None or no_score or (math.isfinite(f1) and f1 > state.best_f1):
            state.best_f1 = f1 if math.isfinite(f1) else -math.inf
            state.best_epoch = state.epoch
            state.best_arrays = state.model.state_arrays()

        logger.info(f"Epoch {state.epoch}/{config.epochs}: loss_v={row['train_loss_v']:.4f} "
                    f"loss_t={row['train_loss_t']:.4f} val_f1={f1:.4f} val_rmse={row['val_rmse']:.4f}")
        if on_epoch:
            on_epoch(state.epoch, row)

    return state, pd.DataFrame(rows, columns=HISTORY_COLUMNS)


def best_model(state: TrainState) -> RDHPModel:
    """验证 F1 最好的模型副本；尚未训练时即当前模型"""
    model = RDHPModel(state.model.config, seed=state.config.seed)
    model.load_state_arrays(state.best_arrays if state.best_arrays is not None else state.model.state_arrays())
    model.time_scale = state.model.time_scale
    model.eval()
    return model


def weight_equilibrium(history: pd.DataFrame) -> Dict[str, Any]:
    """比较首尾各四分之一轮次的 |Δσ| 均值"""
    deltas = history['sigma_delta'].dropna().to_numpy() if 'sigma_delta' in history else np.empty(0)
    if len(deltas) < 2:
        return {'first_quarter': math.nan, 'last_quarter': math.nan, 'settled': False}
    quarter = max(1, len(deltas) // 4)
    first = float(np.mean(deltas[:quarter]))
    last = float(np.mean(deltas[-quarter:]))
    return {'first_quarter': first, 'last_quarter': last, 'settled': bool(last < first)}


# ---- 状态持久化 ----

def _to_json(value: Any) -> Any:
    """数组记作 {'__ndarray__': 列表, 'dtype': ...}，numpy 整数转为 int"""
    if isinstance(value, np.ndarray):
        return {'__ndarray__': value.tolist(), 'dtype': str(value.dtype)}
    if isinstance(value, dict):
        return {k: _to_json(v) for k, v in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    return value


def _from_json(value: Any) -> Any:
    if isinstance(value, dict):
        if '__ndarray__' in value:
            return np.asarray(value['__ndarray__'], dtype=np.dtype(value['dtype']))
        return {k: _from_json(v) for k, v in value.items()}
    return value


def _rng_state(rng: np.random.Generator) -> Dict[str, Any]:
    return _to_json(rng.bit_generator.state)


def _restore_rng(rng: np.random.Generator, state: Dict[str, Any]) -> None:
    try:
        rng.bit_generator.state = _from_json(state)
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"随机数状态无法恢复: {e}") from e


def save_state(state: TrainState, directory: str) -> None:
    """保存完整训练状态（模型、过参数、重加权网络、优化器矩、随机数状态）"""
    tensors: Dict[str, np.ndarray] = {}
    for name, value in state.model.state_arrays().items():
        tensors[f"model.{name}"] = value
    for name, value in state.reweight_net.state_arrays().items():
        tensors[f"net.{name}"] = value
    optimizers = {'heads': state.heads_opt, 'encoder': state.encoder_opt, 'reweight': state.reweight_opt}
    steps = {}
    for group, opt in optimizers.items():
        opt_state = opt.state_dict()
        steps[group] = opt_state['step']
        for name, value in opt_state['exp_avg'].items():
            tensors[f"adam.{group}.m.{name}"] = value
        for name, value in opt_state['exp_avg_sq'].items():
            tensors[f"adam.{group}.v.{name}"] = value
    tensors['overparams.m'] = state.overparams.m
    tensors['overparams.n'] = state.overparams.n
    if state.sigma_memory is not None:
        tensors['sigma_memory'] = state.sigma_memory
    if state.best_arrays is not None:
        for name, value in state.best_arrays.items():
            tensors[f"best.{name}"] = value

    metadata = {
        'config': state.config.model_dump(mode='json'),
        'model_config': state.model.config.model_dump(mode='json'),
        'time_scale': state.model.time_scale,
        'epoch': state.epoch,
        'optimizer_steps': steps,
        'overparam_keys': [list(k) for k in state.overparams.keys],
        'rng': _rng_state(state.rng),
        'dropout_rng': _rng_state(state.model.dropout_rng),
        'best_f1': state.best_f1 if math.isfinite(state.best_f1) else None,
        'best_epoch': state.best_epoch,
        'trace': state.trace,
    }
    save_tensors(os.path.join(directory, STATE_FILE), tensors, metadata)
    logger.debug(f"Saved training state at epoch {state.epoch} to {directory}")


def load_state(directory: str) -> TrainState:
    """恢复 save_state 写出的训练状态"""
    tensors, meta = load_tensors(os.path.join(directory, STATE_FILE))
    try:
        config = TrainConfig.model_validate(meta['config'])
        keys = [(k[0], int(k[1])) for k in meta['overparam_keys']]
        state = create_state(config, int(meta['model_config']['num_types']), float(meta['time_scale']), keys)
        state.model.load_state_arrays({k[len('model.'):]: v for k, v in tensors.items()
                                       if k.startswith('model.')})
        state.reweight_net.load_state_arrays({k[len('net.'):]: v for k, v in tensors.items()
                                              if k.startswith('net.')})
        for group, opt in (('heads', state.heads_opt), ('encoder', state.encoder_opt),
                           ('reweight', state.reweight_opt)):
            opt.load_state_dict({
                'step': meta['optimizer_steps'][group],
                'exp_avg': {p.name: tensors[f"adam.{group}.m.{p.name}"] for p in opt.params},
                'exp_avg_sq': {p.name: tensors[f"adam.{group}.v.{p.name}"] for p in opt.params},
            })
        state.overparams.m = tensors['overparams.m'].astype(np.float64)
        state.overparams.n = tensors['overparams.n'].astype(np.float64)
        if 'sigma_memory' in tensors:
            state.sigma_memory = tensors['sigma_memory'].astype(np.float64)
        best = {k[len('best.'):]: v for k, v in tensors.items() if k.startswith('best.')}
        state.best_arrays = best or None
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"训练状态不完整: {e}", directory) from e
    _restore_rng(state.rng, meta['rng'])
    _restore_rng(state.model.dropout_rng, meta['dropout_rng'])
    state.epoch = int(meta['epoch'])
    state.best_f1 = meta['best_f1'] if meta.get('best_f1') is not None else -math.inf
    state.best_epoch = int(meta.get('best_epoch', 0))
    state.trace = list(meta.get('trace', []))
    return state
