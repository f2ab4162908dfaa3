"""
CLI命令模块
"""
import os
import sys
import traceback
from typing import Any, Dict, List, NoReturn, Optional, Tuple

import click
from colorama import Fore, Style, init

from .. import __version__
from ..core.manifest import ExperimentManifest, verify_manifest
from ..core.pipeline import StageResult, execute_stage, load_plan, run_pipeline
from ..core.tensor_engine import default_dtype
from ..models.config_models import ROBUST_PRESETS, NoiseKind
from ..reports.generator import ReportGenerator
from ..utils.config import Config
from ..utils.exceptions import RobustHawkesError, exit_code_for
from ..utils.logger import get_logger, set_log_level

logger = get_logger()

init()


def _parse_vector(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[List[float]]:
    """"0.2,0.1" -> [0.2, 0.1]"""
    if value is None:
        return None
    try:
        return [float(v) for v in value.split(',')]
    except ValueError as e:
        raise click.BadParameter(f"需要逗号分隔的数字: {value}") from e


def _parse_matrix(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[List[List[float]]]:
    """"0.5,0;0.1,0.4" -> [[0.5, 0.0], [0.1, 0.4]]，行之间用分号"""
    if value is None:
        return None
    try:
        return [[float(v) for v in row.split(',')] for row in value.split(';')]
    except ValueError as e:
        raise click.BadParameter(f"需要形如 'a,b;c,d' 的矩阵: {value}") from e


def _fail(ctx: click.Context, error: Exception, action: str) -> NoReturn:
    message = error.message if isinstance(error, RobustHawkesError) else str(error)
    click.echo(f"{Fore.RED}❌ {action}失败: {message}{Style.RESET_ALL}", err=True)
    if ctx.obj.get('verbose'):
        if isinstance(error, RobustHawkesError):
            error.log_error(logger)
        traceback.print_exc()
    sys.exit(exit_code_for(error))


def _run_stage(ctx: click.Context, command: str, args: Dict[str, Any],
               manifest: Optional[str], action: str) -> StageResult:
    config: Config = ctx.obj['config']
    try:
        with default_dtype(config.get('tensor.dtype', 'float32')):
            return execute_stage(command, args, manifest=manifest,
                                 manifest_name=config.get('output.manifest_name', 'manifest.json'))
    except Exception as e:
        _fail(ctx, e, action)


def _done(paths: Tuple[str, ...] = (), label: str = "结果") -> None:
    for path in paths:
        click.echo(f"📄 {label}已保存: {path}")
    click.echo(f"{Fore.GREEN}✅ 完成!{Style.RESET_ALL}")


manifest_option = click.option('--manifest', default=None, type=click.Path(dir_okay=False),
                               help='实验清单路径（默认写在输出文件旁边的 manifest.json）')


@click.group()
@click.option('--config', '-c', default='config.json', help='应用配置文件路径')
@click.option('--verbose', '-v', is_flag=True, help='详细输出（DEBUG 日志与错误堆栈）')
@click.option('--quiet', '-q', is_flag=True, help='不显示进度条')
@click.pass_context
def cli(ctx: click.Context, config: str, verbose: bool, quiet: bool) -> None:
    """Robust Hawkes - 噪声鲁棒的深度 Hawkes 过程实验工具"""
    ctx.ensure_object(dict)

    try:
        if os.path.exists(config):
            ctx.obj['config'] = Config(config_file=config)
        else:
            # 使用默认配置
            ctx.obj['config'] = Config(config_dict={})
    except RobustHawkesError as e:
        click.echo(f"❌ 配置加载失败: {e.message}", err=True)
        sys.exit(exit_code_for(e))

    app_config: Config = ctx.obj['config']
    set_log_level('DEBUG' if verbose else app_config.get('logging.level', 'INFO'))
    ctx.obj['verbose'] = verbose
    ctx.obj['quiet'] = quiet or bool(app_config.get('output.quiet', False))
    ctx.obj['report'] = ReportGenerator(app_config)


@cli.command()
@click.option('--mu', callback=_parse_vector, help='基础强度，逗号分隔，如 0.2,0.1')
@click.option('--alpha', callback=_parse_matrix, help='激励矩阵，行用分号分隔，如 0.5,0;0.1,0.4')
@click.option('--gamma', callback=_parse_matrix, help='衰减矩阵，格式同 --alpha（默认全 1）')
@click.option('--params', 'params_file', type=click.Path(dir_okay=False), help='HawkesParams JSON 文件')
@click.option('--t-max', type=float, required=True, help='观测窗口长度 T')
@click.option('--n-seqs', type=int, required=True, help='序列条数')
@click.option('--seed', type=int, default=0, show_default=True, help='随机种子')
@click.option('--max-events', type=int, default=100_000, show_default=True, help='单条序列事件上限')
@click.option('--out', required=True, help='输出 JSONL 数据集')
@manifest_option
@click.pass_context
def simulate(ctx: click.Context, mu, alpha, gamma, params_file, t_max, n_seqs, seed, max_events,
             out, manifest) -> None:
    """模拟多元 Hawkes 数据集"""
    click.echo(f"🔍 模拟 {n_seqs} 条序列 (T={t_max}, seed={seed})...")
    result = _run_stage(ctx, 'simulate', {
        'out': out, 't_max': t_max, 'n_seqs': n_seqs, 'seed': seed, 'mu': mu, 'alpha': alpha,
        'gamma': gamma, 'params_file': params_file, 'max_events': max_events,
    }, manifest, '模拟')
    ctx.obj['report'].print_dataset_stats(result.summary['stats'])
    _done(tuple(result.outputs), "数据集")


@cli.command()
@click.option('--in', 'input_path', required=True, help='输入 JSONL 数据集')
@click.option('--out-dir', required=True, help='输出目录（写入 train/val/test/clean.jsonl）')
@click.option('--train-frac', type=float, default=0.8, show_default=True)
@click.option('--val-frac', type=float, default=0.1, show_default=True)
@click.option('--test-frac', type=float, default=0.1, show_default=True)
@click.option('--clean-frac', type=float, default=0.0, show_default=True, help='干净元数据集比例')
@click.option('--seed', type=int, default=0, show_default=True)
@manifest_option
@click.pass_context
def split(ctx: click.Context, input_path, out_dir, train_frac, val_frac, test_frac, clean_frac,
          seed, manifest) -> None:
    """按序列划分数据集"""
    click.echo(f"🔍 划分数据集: {input_path}")
    result = _run_stage(ctx, 'split', {
        'input_path': input_path, 'out_dir': out_dir, 'train_frac': train_frac,
        'val_frac': val_frac, 'test_frac': test_frac, 'clean_frac': clean_frac, 'seed': seed,
    }, manifest, '划分')
    ctx.obj['report'].print_split_sizes(result.summary['sizes'])
    _done(tuple(result.outputs), "划分")


@cli.command()
@click.option('--in', 'input_path', required=True, help='输入 JSONL 数据集（只能是训练集）')
@click.option('--out', required=True, help='加噪后的 JSONL 数据集')
@click.option('--log', default=None, help='加噪记录 JSON（默认 <out>.corruption.json）')
@click.option('--kind', type=click.Choice([k.value for k in NoiseKind]), default='uniform',
              show_default=True, help='类型噪声种类')
@click.option('--p', type=float, default=0.0, show_default=True, help='类型噪声率')
@click.option('--time-p', type=float, default=0.0, show_default=True, help='时间戳扰动概率')
@click.option('--time-sigma', type=float, default=0.8, show_default=True, help='时间扰动标准差')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--protect', multiple=True, help='必须保持未加噪的数据集（可重复）')
@manifest_option
@click.pass_context
def corrupt(ctx: click.Context, input_path, out, log, kind, p, time_p, time_sigma, seed, protect,
            manifest) -> None:
    """对训练集注入类型噪声与时间噪声"""
    click.echo(f"🔍 加噪: kind={kind} p={p} time_p={time_p} sigma={time_sigma}")
    result = _run_stage(ctx, 'corrupt', {
        'input_path': input_path, 'out': out, 'log': log, 'kind': kind, 'p': p, 'time_p': time_p,
        'time_sigma': time_sigma, 'seed': seed, 'protect': list(protect),
    }, manifest, '加噪')
    ctx.obj['report'].print_corruption_summary(result.summary)
    _done(tuple(result.outputs))


@cli.command()
@click.option('--config', 'train_config', default=None, help='训练配置 JSON（字段同 TrainConfig）')
@click.option('--train', required=True, help='（加噪的）训练集')
@click.option('--clean', default=None, help='干净元数据集')
@click.option('--val', default=None, help='验证集')
@click.option('--out', required=True, help='检查点目录')
@click.option('--preset', type=click.Choice(sorted(ROBUST_PRESETS)), default=None,
              help='鲁棒机制预设（覆盖配置中的开关）')
@click.option('--epochs', type=int, default=None, help='覆盖训练轮数')
@click.option('--seed', type=int, default=None, help='覆盖随机种子')
@click.option('--resume', is_flag=True, help='从检查点目录中的训练状态继续')
@manifest_option
@click.pass_context
def train(ctx: click.Context, train_config, train, clean, val, out, preset, epochs, seed, resume,
          manifest) -> None:
    """训练 RDHP 模型"""
    click.echo(f"🔍 训练: {train} -> {out}")
    result = _run_stage(ctx, 'train', {
        'train': train, 'out': out, 'config': train_config, 'clean': clean, 'val': val,
        'preset': preset, 'epochs': epochs, 'seed': seed, 'resume': resume,
        'quiet': ctx.obj['quiet'],
    }, manifest, '训练')
    ctx.obj['report'].print_training_summary(result.summary)
    _done((out,), "检查点")


@cli.command('eval')
@click.option('--ckpt', required=True, help='检查点目录')
@click.option('--test', required=True, help='测试集')
@click.option('--out', required=True, help='输出 metrics.json')
@manifest_option
@click.pass_context
def eval_command(ctx: click.Context, ckpt, test, out, manifest) -> None:
    """在测试集上评估 Macro F1 与 RMSE"""
    click.echo(f"🔍 评估: {ckpt} on {test}")
    result = _run_stage(ctx, 'eval', {'ckpt': ckpt, 'test': test, 'out': out}, manifest, '评估')
    ctx.obj['report'].print_metrics(result.summary['metrics'])
    _done((out,), "指标")


@cli.command()
@click.option('--clean-ckpt', required=True, help='干净数据训练的检查点')
@click.option('--time-ckpt', required=True, help='仅时间噪声的检查点')
@click.option('--label-ckpt', required=True, help='仅类型噪声的检查点')
@click.option('--both-ckpt', required=True, help='两种噪声的检查点')
@click.option('--probe', required=True, help='探针数据集')
@click.option('--out', required=True, help='输出 compounding.json')
@click.option('--metric', type=click.Choice(['mean_abs', 'mean_sq']), default='mean_abs',
              show_default=True)
@manifest_option
@click.pass_context
def diagnose(ctx: click.Context, clean_ckpt, time_ckpt, label_ckpt, both_ckpt, probe, out, metric,
             manifest) -> None:
    """噪声叠加诊断"""
    click.echo("🔍 计算强度层偏移...")
    result = _run_stage(ctx, 'diagnose', {
        'clean_ckpt': clean_ckpt, 'time_ckpt': time_ckpt, 'label_ckpt': label_ckpt,
        'both_ckpt': both_ckpt, 'probe': probe, 'out': out, 'metric': metric,
    }, manifest, '诊断')
    ctx.obj['report'].print_compounding_report(result.summary['report'])
    _done((out,), "诊断报告")


@cli.command()
@click.option('--config', 'sweep_config', required=True, help='实验网格配置 JSON（字段同 SweepConfig）')
@click.option('--out-dir', required=True, help='输出目录')
@click.option('--jobs', '-j', type=int, default=None, help='并行工作进程数（默认取 sweep.jobs）')
@manifest_option
@click.pass_context
def sweep(ctx: click.Context, sweep_config, out_dir, jobs, manifest) -> None:
    """运行实验网格（噪声种类 × 噪声率 × 种子 × 预设）"""
    jobs = jobs if jobs is not None else ctx.obj['config'].get('sweep.jobs', 1)
    click.echo(f"🔍 运行实验网格: {sweep_config} (jobs={jobs})")
    result = _run_stage(ctx, 'sweep', {
        'config': sweep_config, 'out_dir': out_dir, 'jobs': jobs, 'quiet': ctx.obj['quiet'],
    }, manifest, '实验网格')
    table = result.summary['results']
    ctx.obj['report'].print_sweep_results(table)
    if table['degradation_violation'].any():
        click.echo(f"{Fore.YELLOW}⚠️  基线模型出现噪声率升高而 F1 上升的单元格{Style.RESET_ALL}")
    _done(tuple(result.outputs))


@cli.command()
@click.option('--in', 'input_path', required=True, help='JSONL 数据集')
@click.option('--out', default=None, help='可选：写出统计 JSON')
@manifest_option
@click.pass_context
def stats(ctx: click.Context, input_path, out, manifest) -> None:
    """数据集概要统计"""
    result = _run_stage(ctx, 'stats', {'input_path': input_path, 'out': out}, manifest, '统计')
    ctx.obj['report'].print_dataset_stats(result.summary['stats'], title=f"{input_path} 概要")
    _done(tuple(result.outputs))


@cli.command('verify-manifest')
@click.argument('manifest_path', type=click.Path(dir_okay=False))
@click.pass_context
def verify_manifest_command(ctx: click.Context, manifest_path: str) -> None:
    """校验清单中记录的输出文件哈希"""
    try:
        manifest = ExperimentManifest.load(manifest_path)
        problems = verify_manifest(manifest)
    except Exception as e:
        _fail(ctx, e, '清单校验')

    checked = len({p for r in manifest.records for p in r.outputs})
    if problems:
        ctx.obj['report'].print_manifest_problems(problems)
        click.echo(f"❌ {len(problems)}/{checked} 个输出文件与清单不一致", err=True)
        sys.exit(1)
    click.echo(f"{Fore.GREEN}✅ {checked} 个输出文件与清单一致{Style.RESET_ALL}")


@cli.command()
@click.option('--plan', required=True, type=click.Path(dir_okay=False),
              help='流水线计划 {"steps": [...]} 或已有清单（重放）')
@manifest_option
@click.pass_context
def run(ctx: click.Context, plan: str, manifest: Optional[str]) -> None:
    """按顺序执行计划中的各阶段"""
    config: Config = ctx.obj['config']
    try:
        steps = load_plan(plan)
        click.echo(f"🔍 执行 {len(steps)} 个阶段: {plan}")
        with default_dtype(config.get('tensor.dtype', 'float32')):
            run_pipeline(steps, manifest=manifest, quiet=ctx.obj['quiet'],
                         manifest_name=config.get('output.manifest_name', 'manifest.json'),
                         on_stage=lambda i, r: click.echo(f"  ✅ [{i}/{len(steps)}] {r.stage}"))
    except Exception as e:
        _fail(ctx, e, '流水线')
    _done()


@cli.command()
def version() -> None:
    """显示版本信息"""
    click.echo(f"robust-hawkes {__version__}")
