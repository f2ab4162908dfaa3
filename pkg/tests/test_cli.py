"""
命令行测试
"""
import json
import os

import pytest
from click.testing import CliRunner

from robust_hawkes import __version__
from robust_hawkes.cli.commands import cli
from robust_hawkes.core.dataset_io import load_dataset


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def invoke(runner, tmp_path):
    """使用不存在的应用配置文件，即默认配置"""
    def _invoke(*args):
        return runner.invoke(cli, ['-c', str(tmp_path / 'absent.json'), '-q', *args])
    return _invoke


def _simulate(invoke, out):
    return invoke('simulate', '--mu', '0.4,0.3', '--alpha', '0.3,0.1;0.2,0.3', '--t-max', '10',
                  '--n-seqs', '10', '--seed', '3', '--out', out)


class TestCli:
    """CLI 测试类"""

    def test_version(self, runner):
        """测试版本命令"""
        result = runner.invoke(cli, ['version'])
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_simulate(self, invoke, tmp_path):
        """测试模拟命令写出数据集与清单"""
        out = str(tmp_path / 'sim.jsonl')
        result = _simulate(invoke, out)
        assert result.exit_code == 0, result.output
        assert len(load_dataset(out)) == 10
        assert os.path.exists(tmp_path / 'manifest.json')

    def test_bad_matrix(self, invoke, tmp_path):
        """测试矩阵参数格式错误"""
        result = invoke('simulate', '--mu', '0.4', '--alpha', 'x', '--t-max', '5', '--n-seqs', '1',
                        '--out', str(tmp_path / 'a.jsonl'))
        assert result.exit_code == 2

    def test_missing_input_exit_code(self, invoke, tmp_path):
        """测试输入文件缺失时退出码为 2"""
        result = invoke('stats', '--in', str(tmp_path / 'none.jsonl'))
        assert result.exit_code == 2

    def test_unreadable_config(self, runner, tmp_path):
        """测试应用配置不是合法 JSON 时退出码为 2"""
        bad = tmp_path / 'config.json'
        bad.write_text('{"logging": ')
        result = runner.invoke(cli, ['-c', str(bad), 'version'])
        assert result.exit_code == 2

    def test_zero_noise_corrupt(self, invoke, tmp_path):
        """测试 simulate → corrupt --p 0 后事件完全一致"""
        data = str(tmp_path / 'sim.jsonl')
        assert _simulate(invoke, data).exit_code == 0
        out = str(tmp_path / 'noisy.jsonl')
        result = invoke('corrupt', '--in', data, '--out', out, '--kind', 'flip', '--p', '0')
        assert result.exit_code == 0, result.output
        original, noisy = load_dataset(data), load_dataset(out)
        assert [s.events for s in original.sequences] == [s.events for s in noisy.sequences]
        assert os.path.exists(tmp_path / 'noisy.corruption.json')

    def test_corrupt_rejects_validation_split(self, invoke, tmp_path):
        """测试对验证集加噪失败"""
        data = str(tmp_path / 'sim.jsonl')
        assert _simulate(invoke, data).exit_code == 0
        splits = str(tmp_path / 'splits')
        assert invoke('split', '--in', data, '--out-dir', splits).exit_code == 0
        result = invoke('corrupt', '--in', os.path.join(splits, 'val.jsonl'),
                        '--out', str(tmp_path / 'x.jsonl'), '--p', '0.2')
        assert result.exit_code == 1

    def test_stats(self, invoke, dataset_file, tmp_path):
        """测试统计命令写出 JSON"""
        out = str(tmp_path / 'stats.json')
        result = invoke('stats', '--in', dataset_file, '--out', out)
        assert result.exit_code == 0, result.output
        with open(out, 'r', encoding='utf-8') as f:
            stats = json.load(f)
        assert stats['sequences'] == 5
        assert stats['events'] == 19

    def test_verify_manifest(self, invoke, tmp_path):
        """测试清单校验：一致时退出码 0，输出被修改后为 1"""
        data = str(tmp_path / 'sim.jsonl')
        assert _simulate(invoke, data).exit_code == 0
        manifest = str(tmp_path / 'manifest.json')
        assert invoke('verify-manifest', manifest).exit_code == 0
        with open(data, 'a', encoding='utf-8') as f:
            f.write('\n')
        assert invoke('verify-manifest', manifest).exit_code == 1

    def test_run_plan(self, invoke, tmp_path):
        """测试按计划文件执行多个阶段"""
        data = str(tmp_path / 'sim.jsonl')
        plan = tmp_path / 'plan.json'
        plan.write_text(json.dumps({'steps': [
            {'command': 'simulate', 'args': {'out': data, 't_max': 5.0, 'n_seqs': 4, 'mu': [0.5],
                                             'alpha': [[0.2]]}},
            {'command': 'stats', 'args': {'input_path': data, 'out': str(tmp_path / 'stats.json')}},
        ]}))
        result = invoke('run', '--plan', str(plan))
        assert result.exit_code == 0, result.output
        assert os.path.exists(tmp_path / 'stats.json')

    def test_run_plan_failure(self, invoke, tmp_path):
        """测试计划中某阶段输入缺失时返回该错误的退出码"""
        plan = tmp_path / 'plan.json'
        plan.write_text(json.dumps({'steps': [
            {'command': 'stats', 'args': {'input_path': str(tmp_path / 'none.jsonl')}}]}))
        assert invoke('run', '--plan', str(plan)).exit_code == 2
