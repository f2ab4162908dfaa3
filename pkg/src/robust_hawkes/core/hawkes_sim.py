"""
多元指数核 Hawkes 过程：强度、补偿子、似然与 Ogata thinning 模拟

随机数使用计数器型 Philox 生成器，每条序列从种子派生独立的流。
"""
import math
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import stats

from ..models.config_models import HawkesParams
from ..models.event_models import Dataset, EventSequence
from ..utils.exceptions import DomainError
from ..utils.logger import get_logger

logger = get_logger()


def make_rng(seed: "int | np.random.SeedSequence") -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _check_mark(params: HawkesParams, mark: int) -> None:
    if not 0 <= mark < params.num_types:
        raise DomainError(f"事件类型 {mark} 超出 [0, {params.num_types})", 'mark', mark)


def intensity_at(params: HawkesParams, history: EventSequence, t: float, mark: int) -> float:
    """
    λ_mark(t)，只有 time < t 的历史事件参与

    Args:
        params: Hawkes 参数
        history: 历史事件
        t: 查询时刻
        mark: 事件类型
    """
    if t < 0:
        raise DomainError(f"查询时刻必须非负: {t}", 't', t)
    _check_mark(params, mark)
    mu, alpha, gamma = params.arrays()
    times, marks = history.times(), history.marks()
    past = times < t
    if not past.any():
        return float(mu[mark])
    dt = t - times[past]
    m = marks[past]
    return float(mu[mark] + np.sum(alpha[mark, m] * np.exp(-gamma[mark, m] * dt)))


def compensator(params: HawkesParams, history: EventSequence, a: float, b: float) -> np.ndarray:
    """闭式积分 ∫_a^b λ_o(s) ds，返回 K 维向量"""
    if a < 0 or b < a:
        raise DomainError(f"积分区间非法: [{a}, {b}]", 'interval', (a, b))
    mu, alpha, gamma = params.arrays()
    result = mu * (b - a)
    times, marks = history.times(), history.marks()
    before = times < b
    for tj, mj in zip(times[before], marks[before]):
        lower = max(a, tj)
        g = gamma[:, mj]
        result = result + alpha[:, mj] / g * (np.exp(-g * (lower - tj)) - np.exp(-g * (b - tj)))
    return result


def _event_intensities(params: HawkesParams, seq: EventSequence) -> Tuple[np.ndarray, np.ndarray]:
    """
    递推计算每个事件时刻的强度向量和前一事件到该事件的总补偿子增量

    同一时刻的事件互不激励。
    """
    mu, alpha, gamma = params.arrays()
    k = params.num_types
    state = np.zeros((k, k))
    pending = np.zeros((k, k))
    last_time = 0.0
    lambdas = np.empty((len(seq), k))
    increments = np.empty(len(seq))
    for i, (t, m) in enumerate(zip(seq.times(), seq.marks())):
        if t > last_time:
            state += pending
            pending[:] = 0.0
            dt = t - last_time
            decay = np.exp(-gamma * dt)
            increments[i] = float(np.sum(mu) * dt + np.sum(state / gamma * (1.0 - decay)))
            state *= decay
            last_time = t
        else:
            increments[i] = 0.0
        lambdas[i] = mu + state.sum(axis=1)
        pending[:, m] += alpha[:, m]
    return lambdas, increments


def log_likelihood(params: HawkesParams, seq: EventSequence, t_max: float) -> float:
    """
    点过程对数似然 Σ log λ_{v_i}(t_i) − ∫_0^{t_max} Σ_o λ_o(s) ds

    任一事件处强度为 0 时返回 -inf
    """
    if t_max < 0:
        raise DomainError(f"t_max 必须非负: {t_max}", 't_max', t_max)
    if len(seq) and seq.events[-1].time > t_max:
        raise DomainError(f"序列超出观测窗口 [0, {t_max}]", 't_max', t_max)
    total_comp = float(np.sum(compensator(params, seq, 0.0, t_max)))
    if len(seq) == 0:
        return -total_comp
    lambdas, _ = _event_intensities(params, seq)
    at_events = lambdas[np.arange(len(seq)), seq.marks()]
    if np.any(at_events <= 0):
        return -math.inf
    return float(np.sum(np.log(at_events)) - total_comp)


def simulate(params: HawkesParams, t_max: float, seed: int = 0, max_events: int = 100_000,
             seq_id: str = 's0', rng: Optional[np.random.Generator] = None) -> EventSequence:
    """
    Ogata thinning 精确模拟

    上界取上一个候选点之后的总强度（事件间强度只衰减）。
    超过 max_events 时截断，并在序列 metadata 中记录 truncated。
    """
    if t_max < 0:
        raise DomainError(f"t_max 必须非负: {t_max}", 't_max', t_max)
    rng = rng or make_rng(seed)
    mu, alpha, gamma = params.arrays()
    k = params.num_types
    state = np.zeros((k, k))
    t = 0.0
    times: List[float] = []
    marks: List[int] = []
    truncated = False

    while t_max > 0:
        upper = float(np.sum(mu) + np.sum(state))
        if upper <= 0:
            break
        w = rng.exponential(1.0 / upper)
        t += w
        if t > t_max:
            break
        state *= np.exp(-gamma * w)
        lam = mu + state.sum(axis=1)
        u = rng.uniform() * upper
        if u < lam.sum():
            mark = min(int(np.searchsorted(np.cumsum(lam), u, side='right')), k - 1)
            times.append(t)
            marks.append(mark)
            state[:, mark] += alpha[:, mark]
            if len(times) >= max_events:
                truncated = True
                break

    metadata = {}
    if truncated:
        logger.warning(f"Simulation of {seq_id} truncated at {max_events} events (t={t:.4f})")
        metadata['truncated'] = True
    return EventSequence.from_arrays(seq_id, times, marks, metadata)


def simulate_dataset(params: HawkesParams, t_max: float, n_seqs: int, seed: int = 0,
                     max_events: int = 100_000) -> Dataset:
    """
    模拟 n_seqs 条独立序列

    每条序列使用从 seed 派生的独立 Philox 流；空序列被丢弃。
    """
    children = np.random.SeedSequence(seed).spawn(n_seqs)
    sequences = []
    for i, child in enumerate(children):
        seq = simulate(params, t_max, max_events=max_events, seq_id=f"seq_{i:05d}", rng=make_rng(child))
        if len(seq):
            sequences.append(seq)
    dropped = n_seqs - len(sequences)
    if dropped:
        logger.warning(f"Dropped {dropped} empty simulated sequence(s)")
    metadata = {'source': 'hawkes_sim', 'seed': seed, 'params': params.model_dump()}
    return Dataset(sequences=tuple(sequences), num_types=params.num_types, t_max=t_max,
                   metadata=metadata)


def time_rescaled_intervals(params: HawkesParams, seq: EventSequence) -> np.ndarray:
    """相邻事件之间的总补偿子增量，真实模型下服从 Exponential(1)"""
    if len(seq) == 0:
        return np.empty(0)
    _, increments = _event_intensities(params, seq)
    return increments


def time_rescaling_ks(params: HawkesParams,
                      sequences: Iterable[EventSequence]) -> Tuple[float, float, int]:
    """
    时间重标定 KS 检验

    Returns:
        (KS 统计量, p 值, 区间数)
    """
    intervals = np.concatenate([time_rescaled_intervals(params, s) for s in sequences] or [np.empty(0)])
    if intervals.size == 0:
        raise DomainError("没有可检验的事件", 'sequences', 0)
    result = stats.kstest(intervals, 'expon')
    return float(result.statistic), float(result.pvalue), int(intervals.size)
