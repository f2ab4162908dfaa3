"""
流水线阶段

每个 CLI 子命令对应一个只接收 JSON 可序列化关键字参数的阶段函数，
因此命令之间只通过文件传递数据，清单中的记录可以原样重放。
"""
import inspect
import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..models.config_models import (HawkesParams, NoiseKind, NoiseMode, NoiseSpec, SweepConfig,
                                    TrainConfig)
from ..models.event_models import Dataset, SplitSpec
from ..utils.config import load_json_model, validate_model
from ..utils.exceptions import (ConfigurationError, ContractError, RobustHawkesError, StageError,
                                exit_code_for)
from ..utils.logger import get_logger
from ..utils.performance import ParallelExecutor, Timer
from ..utils.progress import ProgressManager
from .dataset_io import (SPLIT_NAMES, dataset_hash, dataset_stats, load_dataset, read_json,
                         save_dataset, split, write_json)
from .eval_metrics import DIVERGENCE_METRICS, compounding_report
from .hawkes_sim import simulate_dataset
from .manifest import append_record, config_hash, make_record
from .noise_forge import assert_untouched, corrupt
from .rdhp_model import CONFIG_FILE, MODEL_FILE, RDHPModel
from .tensor_engine import default_dtype, get_default_dtype
from .trainer import (STATE_FILE, best_model, evaluate, fit, load_state, save_state,
                      weight_equilibrium)

logger = get_logger()

DEFAULT_MANIFEST = 'manifest.json'
HISTORY_FILE = 'history.csv'
TRAIN_CONFIG_FILE = 'train_config.json'
STATE_DIR = 'state'
SWEEP_CELLS_FILE = 'cells.csv'
SWEEP_RESULTS_FILE = 'results.csv'
# 不写入清单的参数
RUNTIME_ONLY_ARGS = ('quiet', 'jobs')


@dataclass
class StageResult:
    """一次阶段执行的输入、输出与控制台摘要"""
    stage: str
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    seeds: Dict[str, Any] = field(default_factory=dict)
    cfg_hash: Optional[str] = None
    summary: Dict[str, Any] = field(default_factory=dict)


# ---- 阶段函数 ----

def stage_simulate(out: str, t_max: float, n_seqs: int, seed: int = 0,
                   mu: Optional[List[float]] = None, alpha: Optional[List[List[float]]] = None,
                   gamma: Optional[List[List[float]]] = None, params_file: Optional[str] = None,
                   max_events: int = 100_000) -> StageResult:
    """模拟多元 Hawkes 数据集；参数来自 params_file 或 mu/alpha/gamma"""
    if params_file:
        params = load_json_model(params_file, HawkesParams)
    elif mu is not None and alpha is not None:
        k = len(mu)
        raw = {'mu': mu, 'alpha': alpha, 'gamma': gamma if gamma is not None else [[1.0] * k] * k}
        params = validate_model(raw, HawkesParams, source='--mu/--alpha/--gamma')
    else:
        raise ConfigurationError("需要 --params 文件或 --mu 与 --alpha", 'params', None)

    with Timer(f"Simulating {n_seqs} sequence(s)"):
        dataset = simulate_dataset(params, t_max, n_seqs, seed=seed, max_events=max_events)
    save_dataset(dataset, out)
    stats = dataset_stats(dataset)
    stats['spectral_radius'] = params.spectral_radius
    return StageResult('simulate', inputs=[params_file] if params_file else [], outputs=[out],
                       seeds={'simulate': seed}, summary={'stats': stats})


def stage_split(input_path: str, out_dir: str, train_frac: float = 0.8, val_frac: float = 0.1,
                test_frac: float = 0.1, clean_frac: float = 0.0, seed: int = 0) -> StageResult:
    """按序列划分为 train/val/test/clean 四个文件"""
    spec = validate_model({'train_frac': train_frac, 'val_frac': val_frac, 'test_frac': test_frac,
                           'clean_frac': clean_frac, 'seed': seed}, SplitSpec, source='split')
    dataset = load_dataset(input_path)
    outputs = []
    sizes = {}
    for name, part in zip(SPLIT_NAMES, split(dataset, spec)):
        path = os.path.join(out_dir, f"{name}.jsonl")
        save_dataset(part, path)
        outputs.append(path)
        sizes[name] = len(part)
    return StageResult('split', inputs=[input_path], outputs=outputs, seeds={'split': seed},
                       summary={'sizes': sizes})


def default_log_path(out: str) -> str:
    return os.path.splitext(out)[0] + '.corruption.json'


def stage_corrupt(input_path: str, out: str, log: Optional[str] = None, kind: str = 'uniform',
                  p: float = 0.0, time_p: float = 0.0, time_sigma: float = 0.8, seed: int = 0,
                  protect: Sequence[str] = ()) -> StageResult:
    """
    对训练集加噪

    输入若是 val/test/clean 划分则拒绝执行；protect 中的数据集会与加噪记录比对，
    确认没有任何序列被触及。
    """
    spec = validate_model({'kind': kind, 'p': p, 'time_p': time_p, 'time_sigma': time_sigma,
                           'seed': seed}, NoiseSpec, source='corrupt')
    dataset = load_dataset(input_path)
    role = dataset.metadata.get('split')
    if role in ('val', 'test', 'clean'):
        raise ContractError(f"拒绝对 {role} 划分加噪: {input_path}",
                            {'split': role, 'path': input_path})

    noisy, corruption_log = corrupt(dataset, spec)
    for path in protect:
        assert_untouched(corruption_log, load_dataset(path))

    log_path = log or default_log_path(out)
    save_dataset(noisy, out)
    corruption_log.save(log_path)
    return StageResult('corrupt', inputs=[input_path, *protect], outputs=[out, log_path],
                       seeds={'corrupt': seed},
                       summary={'altered_events': corruption_log.altered_events(),
                                'altered_sequences': len(corruption_log.altered),
                                'clamped': corruption_log.clamped,
                                'matrix': corruption_log.matrix})


def load_train_config(config: Optional[str], preset: Optional[str] = None,
                      epochs: Optional[int] = None, seed: Optional[int] = None) -> TrainConfig:
    cfg = load_json_model(config, TrainConfig) if config else TrainConfig()
    if preset:
        try:
            cfg = cfg.apply_preset(preset)
        except ValueError as e:
            raise ConfigurationError(str(e), 'preset', preset) from e
    overrides: Dict[str, Any] = {}
    if epochs is not None:
        overrides['epochs'] = epochs
    if seed is not None:
        overrides['seed'] = seed
    return validate_model({**cfg.model_dump(), **overrides}, TrainConfig, source='train')


def stage_train(train: str, out: str, config: Optional[str] = None, clean: Optional[str] = None,
                val: Optional[str] = None, preset: Optional[str] = None,
                epochs: Optional[int] = None, seed: Optional[int] = None, resume: bool = False,
                quiet: bool = True) -> StageResult:
    """
    训练并写出检查点目录：

    - model.json / model_config.json: 验证 F1 最好的推理模型
    - state/train_state.json: 可恢复的完整训练状态
    - history.csv / train_config.json
    """
    cfg = load_train_config(config, preset, epochs, seed)
    noisy_train = load_dataset(train)
    clean_set = load_dataset(clean) if clean else None
    val_set = load_dataset(val) if val else None

    state_dir = os.path.join(out, STATE_DIR)
    history_path = os.path.join(out, HISTORY_FILE)
    state = None
    previous = None
    if resume and os.path.exists(os.path.join(state_dir, STATE_FILE)):
        state = load_state(state_dir)
        if os.path.exists(history_path):
            previous = pd.read_csv(history_path)
        logger.info(f"Resuming from epoch {state.epoch}")

    remaining = max(cfg.epochs - (state.epoch if state else 0), 0)
    with ProgressManager(disabled=quiet) as progress:
        task = progress.add_task("🧠 训练中...", total=remaining)
        state, history = fit(cfg, noisy_train, clean_set, val_set, state=state,
                             on_epoch=lambda epoch, row: progress.update(task))
    if previous is not None:
        history = pd.concat([previous, history], ignore_index=True)

    os.makedirs(out, exist_ok=True)
    best_model(state).save(out)
    save_state(state, state_dir)
    history.to_csv(history_path, index=False)
    write_json(os.path.join(out, TRAIN_CONFIG_FILE), cfg.model_dump(mode='json'))

    outputs = [os.path.join(out, MODEL_FILE), os.path.join(out, CONFIG_FILE),
               os.path.join(state_dir, STATE_FILE), history_path,
               os.path.join(out, TRAIN_CONFIG_FILE)]
    summary = {
        'best_epoch': state.best_epoch,
        'best_val_f1': state.best_f1 if math.isfinite(state.best_f1) else math.nan,
        'epochs': state.epoch,
        'equilibrium': weight_equilibrium(history),
        'history': history,
    }
    return StageResult('train', inputs=[p for p in (train, clean, val, config) if p],
                       outputs=outputs, seeds={'train': cfg.seed},
                       cfg_hash=config_hash(cfg.model_dump(mode='json')), summary=summary)


def stage_eval(ckpt: str, test: str, out: str) -> StageResult:
    """在测试集上计算 Macro F1 与 RMSE"""
    model = RDHPModel.load(ckpt)
    dataset = load_dataset(test)
    scores = evaluate(model, dataset)
    payload = {**scores, 'checkpoint': ckpt, 'test_hash': dataset_hash(dataset)}
    write_json(out, payload)
    return StageResult('eval', inputs=[os.path.join(ckpt, MODEL_FILE), test], outputs=[out],
                       summary={'metrics': payload})


def stage_diagnose(clean_ckpt: str, time_ckpt: str, label_ckpt: str, both_ckpt: str, probe: str,
                   out: str, metric: str = 'mean_abs') -> StageResult:
    """噪声叠加诊断：以干净模型为参照比较强度层输出"""
    if metric not in DIVERGENCE_METRICS:
        raise ConfigurationError(f"未知的差异度量: {metric}", 'metric', metric)
    checkpoints = [clean_ckpt, time_ckpt, label_ckpt, both_ckpt]
    report = compounding_report(*checkpoints, probe=load_dataset(probe), metric=metric)
    write_json(out, report)
    return StageResult('diagnose',
                       inputs=[os.path.join(c, MODEL_FILE) for c in checkpoints] + [probe],
                       outputs=[out], summary={'report': report})


def stage_stats(input_path: str, out: Optional[str] = None) -> StageResult:
    """数据集概要统计"""
    stats = dataset_stats(load_dataset(input_path))
    if out:
        write_json(out, stats)
    return StageResult('stats', inputs=[input_path], outputs=[out] if out else [],
                       summary={'stats': stats})


def stage_sweep(config: str, out_dir: str, jobs: Optional[int] = None,
                quiet: bool = True) -> StageResult:
    """按网格配置运行全部实验单元并汇总"""
    sweep_config = load_json_model(config, SweepConfig)
    table = sweep(sweep_config, out_dir, jobs=jobs, quiet=quiet)
    inputs = [config] + ([sweep_config.dataset] if sweep_config.dataset else [])
    return StageResult('sweep', inputs=inputs,
                       outputs=[os.path.join(out_dir, SWEEP_CELLS_FILE),
                                os.path.join(out_dir, SWEEP_RESULTS_FILE)],
                       seeds={'sweep': list(sweep_config.seeds)},
                       cfg_hash=config_hash(sweep_config.model_dump(mode='json')),
                       summary={'results': table})


STAGES: Dict[str, Callable[..., StageResult]] = {
    'simulate': stage_simulate,
    'split': stage_split,
    'corrupt': stage_corrupt,
    'train': stage_train,
    'eval': stage_eval,
    'diagnose': stage_diagnose,
    'sweep': stage_sweep,
    'stats': stage_stats,
}


# ---- 执行与清单 ----

def default_manifest_path(result: StageResult, name: str = DEFAULT_MANIFEST) -> str:
    """清单写在第一个输出文件旁边"""
    anchor = result.outputs[0] if result.outputs else ''
    return os.path.join(os.path.dirname(anchor) or '.', name)


def execute_stage(command: str, args: Dict[str, Any], manifest: Optional[str] = None,
                  manifest_name: str = DEFAULT_MANIFEST) -> StageResult:
    """
    执行单个阶段并向清单追加一条记录

    Args:
        command: 阶段名
        args: 阶段函数的关键字参数
        manifest: 清单路径，缺省为第一个输出文件所在目录下的 manifest_name
    """
    func = STAGES.get(command)
    if func is None:
        raise ConfigurationError(f"未知命令: {command}，可选 {sorted(STAGES)}", 'command', command)
    try:
        inspect.signature(func).bind(**args)
    except TypeError as e:
        raise ConfigurationError(f"{command}: 参数错误: {e}", 'args', sorted(args)) from e

    with Timer(f"Stage {command}"):
        result = func(**args)

    recorded = {k: v for k, v in args.items() if k not in RUNTIME_ONLY_ARGS and v is not None}
    record = make_record(command, recorded, result.inputs, result.outputs,
                         seeds=result.seeds, cfg_hash=result.cfg_hash)
    append_record(manifest or default_manifest_path(result, manifest_name), record)
    return result


def load_plan(path: str) -> List[Dict[str, Any]]:
    """读取流水线计划：{"steps": [...]} 或清单文件 {"records": [...]}"""
    raw = read_json(path)
    steps = raw.get('steps', raw.get('records')) if isinstance(raw, dict) else None
    if not isinstance(steps, list):
        raise ConfigurationError(f"{path}: 需要 steps 或 records 列表", 'steps', None)
    plan = []
    for i, step in enumerate(steps, start=1):
        if not isinstance(step, dict) or 'command' not in step:
            raise ConfigurationError(f"{path}: 第 {i} 步缺少 command", 'command', step)
        plan.append({'command': step['command'], 'args': dict(step.get('args', {}))})
    return plan


def run_pipeline(steps: List[Dict[str, Any]], manifest: Optional[str] = None, quiet: bool = True,
                 manifest_name: str = DEFAULT_MANIFEST,
                 on_stage: Optional[Callable[[int, StageResult], None]] = None) -> List[StageResult]:
    """
    按声明顺序执行各阶段

    Raises:
        StageError: 任一阶段失败，携带阶段名与原错误对应的退出码
    """
    results = []
    for i, step in enumerate(steps, start=1):
        command, args = step['command'], dict(step['args'])
        func = STAGES.get(command)
        if func is not None and 'quiet' in inspect.signature(func).parameters:
            args['quiet'] = quiet
        try:
            result = execute_stage(command, args, manifest=manifest, manifest_name=manifest_name)
        except RobustHawkesError as e:
            raise StageError(f"第 {i} 步 {command} 失败: {e.message}", command, exit_code_for(e)) from e
        except Exception as e:
            raise StageError(f"第 {i} 步 {command} 失败: {e}", command, 1) from e
        results.append(result)
        if on_stage:
            on_stage(i, result)
    return results


# ---- 实验网格 ----

def sweep_cells(config: SweepConfig) -> List[Dict[str, Any]]:
    """噪声种类 × 作用对象 × 噪声率 × 预设 × 种子"""
    return [
        {'kind': kind.value, 'mode': mode.value, 'p': p, 'preset': preset, 'seed': seed}
        for kind, mode, p, preset, seed in itertools.product(
            config.kinds, config.modes, config.ps, config.presets, config.seeds)
    ]


def cell_noise(cell: Dict[str, Any], time_sigma: float) -> NoiseSpec:
    mode = NoiseMode(cell['mode'])
    label_p = 0.0 if mode == NoiseMode.TIME_ONLY else cell['p']
    time_p = 0.0 if mode == NoiseMode.LABEL_ONLY else cell['p']
    return NoiseSpec(kind=NoiseKind(cell['kind']), p=label_p, time_p=time_p,
                     time_sigma=time_sigma, seed=cell['seed'])


def run_sweep_cell(cell: Dict[str, Any], base: Dataset, config: SweepConfig,
                   dtype: str = 'float32') -> Dict[str, Any]:
    """单个实验单元：划分 → 仅对训练集加噪 → 训练 → 测试集评估"""
    with default_dtype(dtype):
        return _run_cell(cell, base, config)


def _run_cell(cell: Dict[str, Any], base: Dataset, config: SweepConfig) -> Dict[str, Any]:
    spec = config.split.model_copy(update={'seed': cell['seed']})
    train, val, test, clean = split(base, spec)
    noisy, corruption_log = corrupt(train, cell_noise(cell, config.time_sigma))
    for held_out in (val, test, clean):
        assert_untouched(corruption_log, held_out)

    train_config = config.train.apply_preset(cell['preset']).model_copy(update={'seed': cell['seed']})
    state, _ = fit(train_config, noisy, clean, val)
    scores = evaluate(best_model(state), test)
    return {**cell, 'f1': scores['macro_f1'], 'rmse': scores['rmse'], 'n': scores['n'],
            'best_epoch': state.best_epoch}


def _std(values: pd.Series) -> float:
    return float(values.std(ddof=1)) if len(values) > 1 else 0.0


def aggregate_sweep(cells: pd.DataFrame) -> pd.DataFrame:
    """
    按 (kind, mode, p, preset) 聚合种子，给出 F1(%) 与 RMSE 的 mean ± std

    并标记基线模型 F1(p>0) 高于 F1(p=0) 的单调退化违例（只标记，不报错）。
    """
    keys = ['kind', 'mode', 'p', 'preset']
    table = (cells.groupby(keys, sort=False)
             .agg(runs=('f1', 'size'), f1_mean=('f1', 'mean'), f1_std=('f1', _std),
                  rmse_mean=('rmse', 'mean'), rmse_std=('rmse', _std))
             .reset_index())
    table['f1'] = [f"{m * 100:.2f} ± {s * 100:.2f}" for m, s in zip(table['f1_mean'], table['f1_std'])]
    table['rmse'] = [f"{m:.3f} ± {s:.3f}" for m, s in zip(table['rmse_mean'], table['rmse_std'])]

    reference = table[table['p'] == 0].set_index(['kind', 'mode', 'preset'])['f1_mean']
    violations = []
    for row in table.itertuples(index=False):
        ref = reference.get((row.kind, row.mode, row.preset), np.nan)
        flagged = bool(row.preset == 'baseline' and row.p > 0 and np.isfinite(ref)
                       and row.f1_mean > ref)
        if flagged:
            logger.warning(f"Baseline F1 at p={row.p} ({row.f1_mean:.4f}) exceeds p=0 ({ref:.4f}) "
                           f"for kind={row.kind}, mode={row.mode}")
        violations.append(flagged)
    table['degradation_violation'] = violations
    return table


def sweep(config: SweepConfig, out_dir: str, jobs: Optional[int] = None,
          quiet: bool = True) -> pd.DataFrame:
    """
    运行实验网格

    单元格在最多 jobs 个工作进程中并行，单元格内部顺序执行。
    写出 cells.csv（每次运行一行）与 results.csv（每个单元格一行）。
    """
    if config.dataset:
        base = load_dataset(config.dataset)
    else:
        sim = config.simulate
        base = simulate_dataset(sim.params, sim.t_max, sim.n_seqs, seed=sim.seed,
                                max_events=sim.max_events)
    cells = sweep_cells(config)
    dtype = str(get_default_dtype())
    logger.info(f"Sweep: {len(cells)} run(s) over {len(base)} sequence(s), jobs={jobs}")

    with ProgressManager(disabled=quiet) as progress:
        task = progress.add_task("🧪 实验网格...", total=len(cells))
        executor = ParallelExecutor(max_workers=jobs)
        rows = executor.execute_parallel_with_args(
            run_sweep_cell, [(cell, base, config, dtype) for cell in cells],
            on_done=lambda i, row: progress.update(task))

    cells_df = pd.DataFrame(rows)
    table = aggregate_sweep(cells_df)
    os.makedirs(out_dir, exist_ok=True)
    cells_df.to_csv(os.path.join(out_dir, SWEEP_CELLS_FILE), index=False)
    table.to_csv(os.path.join(out_dir, SWEEP_RESULTS_FILE), index=False)
    return table
