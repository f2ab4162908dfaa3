"""
报告生成器
"""
import math
from typing import Any, Dict, List, Optional

import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from ..utils.config import Config


def _fmt(value: Any, digits: int = 4) -> str:
    if value is None:
        return '-'
    if isinstance(value, float):
        return 'nan' if math.isnan(value) else f"{value:.{digits}f}"
    return str(value)


class ReportGenerator:
    """控制台报告生成器类"""

    def __init__(self, config: Optional[Config] = None, console: Optional[Console] = None):
        """初始化报告生成器"""
        self.config = config
        self.console = console or Console()

    def print_dataset_stats(self, stats: Dict[str, Any], title: str = "数据集概要") -> None:
        """打印数据集统计面板与类型分布表"""
        content = f"""
        序列数: {stats.get('sequences', 0)}
        事件数: {stats.get('events', 0)}
        类型数 K: {stats.get('num_types', 0)}
        观测窗口 T: {_fmt(stats.get('t_max'), 2)}
        平均长度: {_fmt(stats.get('mean_length'), 2)} (最短 {stats.get('min_length', 0)}, 最长 {stats.get('max_length', 0)})
        最大间隔: {_fmt(stats.get('max_gap'))}
        """
        if 'spectral_radius' in stats:
            content += f"谱半径: {_fmt(stats['spectral_radius'])}\n"
        self.console.print(Panel(content.strip(), title=title, border_style="blue"))

        table = Table(title="事件类型分布", show_header=True, header_style="bold magenta")
        table.add_column("类型", style="cyan", no_wrap=True)
        table.add_column("事件数", justify="right", style="green")
        table.add_column("占比", justify="right", style="yellow")
        for mark, (count, freq) in enumerate(zip(stats.get('type_counts', []), stats.get('type_freq', []))):
            table.add_row(str(mark), str(count), f"{freq * 100:.1f}%")
        self.console.print(table)

    def print_split_sizes(self, sizes: Dict[str, int]) -> None:
        table = Table(title="数据集划分", show_header=True, header_style="bold magenta")
        table.add_column("划分", style="cyan")
        table.add_column("序列数", justify="right", style="green")
        for name, size in sizes.items():
            table.add_row(name, str(size))
        self.console.print(table)

    def print_corruption_summary(self, summary: Dict[str, Any]) -> None:
        """打印加噪摘要与转移矩阵"""
        content = f"""
        改动事件: {summary.get('altered_events', 0)}
        改动序列: {summary.get('altered_sequences', 0)}
        截断时间戳: {summary.get('clamped', 0)}
        """
        self.console.print(Panel(content.strip(), title="加噪摘要", border_style="yellow"))

        matrix: List[List[float]] = summary.get('matrix', [])
        if not matrix:
            return
        table = Table(title="类型转移矩阵 (行: 真实, 列: 记录)", show_header=True,
                      header_style="bold magenta")
        table.add_column("", style="cyan")
        for j in range(len(matrix)):
            table.add_column(str(j), justify="right")
        for i, row in enumerate(matrix):
            table.add_row(str(i), *(f"{v:.3f}" for v in row))
        self.console.print(table)

    def print_training_summary(self, summary: Dict[str, Any]) -> None:
        """打印训练摘要与最后若干轮的历史"""
        equilibrium = summary.get('equilibrium', {})
        content = f"""
        训练轮数: {summary.get('epochs', 0)}
        最佳轮次: {summary.get('best_epoch', 0)}
        最佳验证 F1: {_fmt(summary.get('best_val_f1'))}
        |Δσ| 前四分之一: {_fmt(equilibrium.get('first_quarter'))}
        |Δσ| 后四分之一: {_fmt(equilibrium.get('last_quarter'))}
        """
        self.console.print(Panel(content.strip(), title="训练摘要", border_style="green"))

        history = summary.get('history')
        if isinstance(history, pd.DataFrame) and not history.empty:
            self._print_history_table(history.tail(10))

    def _print_history_table(self, history: pd.DataFrame) -> None:
        table = Table(title="训练历史", show_header=True, header_style="bold magenta")
        table.add_column("轮次", style="cyan", justify="right")
        table.add_column("L^v", justify="right", style="green")
        table.add_column("L^t", justify="right", style="green")
        table.add_column("σ^v", justify="right", style="yellow")
        table.add_column("σ^t", justify="right", style="yellow")
        table.add_column("验证 F1", justify="right", style="blue")
        table.add_column("验证 RMSE", justify="right", style="blue")
        for _, row in history.iterrows():
            table.add_row(str(int(row['epoch'])), _fmt(row['train_loss_v']), _fmt(row['train_loss_t']),
                          _fmt(row['sigma_v_mean']), _fmt(row['sigma_t_mean']),
                          _fmt(row['val_f1']), _fmt(row['val_rmse']))
        self.console.print(table)

    def print_metrics(self, metrics: Dict[str, Any]) -> None:
        content = f"""
        Macro F1: {_fmt(metrics.get('macro_f1'))}
        RMSE: {_fmt(metrics.get('rmse'))}
        样本数: {metrics.get('n', 0)}
        """
        self.console.print(Panel(content.strip(), title="测试集评估", border_style="blue"))

    def print_compounding_report(self, report: Dict[str, Any]) -> None:
        """打印噪声叠加诊断"""
        table = Table(title="强度层偏移 (相对干净模型)", show_header=True, header_style="bold magenta")
        table.add_column("训练数据", style="cyan")
        table.add_column("偏移", justify="right", style="green")
        names = {'clean': '干净', 'time': '仅时间噪声', 'label': '仅类型噪声', 'both': '两者'}
        for key, value in report.get('divergences', {}).items():
            table.add_row(names.get(key, key), _fmt(value, 6))
        self.console.print(table)

        verdict = "是" if report.get('both_exceeds_max') else "否"
        content = f"""
        D_both / (D_time + D_label): {_fmt(report.get('ratio'))}
        D_both > max(D_time, D_label): {verdict}
        度量: {report.get('metadata', {}).get('metric', '')}
        """
        self.console.print(Panel(content.strip(), title="噪声叠加诊断", border_style="red"))

    def print_sweep_results(self, table_df: pd.DataFrame) -> None:
        """打印实验网格结果（每个单元格一行）"""
        if table_df.empty:
            return
        table = Table(title="实验网格结果", show_header=True, header_style="bold magenta")
        table.add_column("噪声", style="cyan", no_wrap=True)
        table.add_column("作用对象", style="cyan")
        table.add_column("p", justify="right", style="yellow")
        table.add_column("预设", style="white")
        table.add_column("运行数", justify="right", style="blue")
        table.add_column("F1 (%)", justify="right", style="green")
        table.add_column("RMSE", justify="right", style="green")
        table.add_column("退化违例", justify="center", style="red")
        for _, row in table_df.iterrows():
            table.add_row(str(row['kind']), str(row['mode']), f"{row['p']:.2f}", str(row['preset']),
                          str(int(row['runs'])), str(row['f1']), str(row['rmse']),
                          "⚠️" if row['degradation_violation'] else "")
        self.console.print(table)

    def print_manifest_problems(self, problems: List[Dict[str, str]]) -> None:
        table = Table(title="清单校验失败", show_header=True, header_style="bold red")
        table.add_column("命令", style="cyan")
        table.add_column("文件", style="white")
        table.add_column("记录哈希", style="green")
        table.add_column("当前哈希", style="red")
        for item in problems:
            table.add_row(item['command'], item['path'], item['expected'][:12], item['actual'][:12])
        self.console.print(table)
