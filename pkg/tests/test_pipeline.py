"""
流水线与清单测试
"""
import json
import os

import numpy as np
import pandas as pd
import pytest

from robust_hawkes.core.dataset_io import load_dataset
from robust_hawkes.core.manifest import ExperimentManifest, file_sha256, verify_manifest
from robust_hawkes.core.pipeline import (SWEEP_CELLS_FILE, SWEEP_RESULTS_FILE, aggregate_sweep, cell_noise,
                                         execute_stage, load_plan, run_pipeline, stage_corrupt, sweep,
                                         sweep_cells)
from robust_hawkes.models.config_models import (HawkesParams, ModelConfig, NoiseKind, SimulationConfig,
                                                SweepConfig, TrainConfig)
from robust_hawkes.models.event_models import SplitSpec
from robust_hawkes.utils.exceptions import ConfigurationError, ContractError, StageError

SIMULATE_ARGS = {'t_max': 10.0, 'n_seqs': 12, 'seed': 5, 'mu': [0.4, 0.3],
                 'alpha': [[0.3, 0.1], [0.2, 0.3]]}


def _plan(root) -> list:
    data = os.path.join(str(root), 'data.jsonl')
    splits = os.path.join(str(root), 'splits')
    return [
        {'command': 'simulate', 'args': {'out': data, **SIMULATE_ARGS}},
        {'command': 'split', 'args': {'input_path': data, 'out_dir': splits, 'train_frac': 0.6,
                                      'val_frac': 0.2, 'test_frac': 0.1, 'clean_frac': 0.1, 'seed': 1}},
        {'command': 'corrupt', 'args': {'input_path': os.path.join(splits, 'train.jsonl'),
                                        'out': os.path.join(splits, 'noisy.jsonl'), 'kind': 'flip',
                                        'p': 0.3, 'time_p': 0.2, 'seed': 2,
                                        'protect': [os.path.join(splits, 'val.jsonl')]}},
    ]


class TestExecuteStage:
    """单阶段执行测试类"""

    def test_writes_manifest_next_to_output(self, tmp_path):
        """测试清单写在输出文件旁并记录哈希与种子"""
        out = str(tmp_path / 'sim.jsonl')
        execute_stage('simulate', {'out': out, **SIMULATE_ARGS})
        manifest = ExperimentManifest.load(str(tmp_path / 'manifest.json'))
        assert len(manifest.records) == 1
        record = manifest.records[0]
        assert record.command == 'simulate'
        assert record.outputs == {out: file_sha256(out)}
        assert record.seeds == {'simulate': 5}
        assert record.versions['robust_hawkes']

    def test_verify_detects_edits(self, tmp_path):
        """测试输出文件被修改或删除后校验失败"""
        out = str(tmp_path / 'sim.jsonl')
        manifest_path = str(tmp_path / 'm.json')
        execute_stage('simulate', {'out': out, **SIMULATE_ARGS}, manifest=manifest_path)
        assert verify_manifest(ExperimentManifest.load(manifest_path)) == []

        with open(out, 'a', encoding='utf-8') as f:
            f.write('\n')
        problems = verify_manifest(ExperimentManifest.load(manifest_path))
        assert [p['path'] for p in problems] == [out]

        os.remove(out)
        assert verify_manifest(ExperimentManifest.load(manifest_path))[0]['actual'] == 'missing'

    def test_unknown_command(self):
        """测试未知命令"""
        with pytest.raises(ConfigurationError):
            execute_stage('plot', {})

    def test_bad_arguments(self, tmp_path):
        """测试多余参数在执行前被拒绝"""
        with pytest.raises(ConfigurationError):
            execute_stage('stats', {'input_path': 'x.jsonl', 'colour': 'red'})

    def test_simulate_needs_params(self, tmp_path):
        """测试缺少 Hawkes 参数"""
        with pytest.raises(ConfigurationError):
            execute_stage('simulate', {'out': str(tmp_path / 'a.jsonl'), 't_max': 5.0, 'n_seqs': 2})


class TestCorruptStage:
    """加噪阶段测试类"""

    def test_refuses_held_out_split(self, tmp_path):
        """测试拒绝对验证集加噪"""
        run_pipeline(_plan(tmp_path)[:2])
        with pytest.raises(ContractError):
            stage_corrupt(str(tmp_path / 'splits' / 'val.jsonl'), str(tmp_path / 'bad.jsonl'), p=0.2)
        assert not os.path.exists(tmp_path / 'bad.jsonl')

    def test_only_train_changes(self, tmp_path):
        """测试加噪后验证集文件不变、日志写在输出旁"""
        run_pipeline(_plan(tmp_path)[:2])
        val_path = str(tmp_path / 'splits' / 'val.jsonl')
        before = file_sha256(val_path)
        result = stage_corrupt(str(tmp_path / 'splits' / 'train.jsonl'), str(tmp_path / 'noisy.jsonl'),
                               kind='uniform', p=0.5, seed=3, protect=[val_path])
        assert file_sha256(val_path) == before
        assert os.path.exists(tmp_path / 'noisy.corruption.json')
        assert result.summary['altered_events'] > 0

    def test_zero_noise_keeps_events(self, tmp_path):
        """测试噪声率为 0 时事件完全不变"""
        run_pipeline(_plan(tmp_path)[:2])
        train_path = str(tmp_path / 'splits' / 'train.jsonl')
        stage_corrupt(train_path, str(tmp_path / 'same.jsonl'), p=0.0, time_p=0.0)
        original, copy = load_dataset(train_path), load_dataset(str(tmp_path / 'same.jsonl'))
        assert [s.events for s in original.sequences] == [s.events for s in copy.sequences]


class TestRunPipeline:
    """流水线执行测试类"""

    def test_replay_reproduces_outputs(self, tmp_path):
        """测试按清单重放得到相同的输出哈希"""
        first = str(tmp_path / 'first.json')
        run_pipeline(_plan(tmp_path), manifest=first)
        original = ExperimentManifest.load(first)

        second = str(tmp_path / 'second.json')
        run_pipeline(load_plan(first), manifest=second)
        replayed = ExperimentManifest.load(second)
        assert [r.command for r in replayed.records] == ['simulate', 'split', 'corrupt']
        for a, b in zip(original.records, replayed.records):
            assert a.outputs == b.outputs
            assert a.config_hash == b.config_hash

    def test_on_stage_callback(self, tmp_path):
        """测试每完成一个阶段回调一次"""
        seen = []
        run_pipeline(_plan(tmp_path)[:2], on_stage=lambda i, result: seen.append((i, result.stage)))
        assert seen == [(1, 'simulate'), (2, 'split')]

    def test_input_error_exit_code(self, tmp_path):
        """测试输入文件缺失时阶段失败的退出码为 2"""
        with pytest.raises(StageError) as exc_info:
            run_pipeline([{'command': 'stats', 'args': {'input_path': str(tmp_path / 'none.jsonl')}}])
        assert exc_info.value.stage == 'stats'
        assert exc_info.value.exit_code == 2

    def test_contract_error_exit_code(self, tmp_path):
        """测试对验证集加噪时阶段失败的退出码为 1"""
        steps = _plan(tmp_path)
        steps[2]['args']['input_path'] = str(tmp_path / 'splits' / 'val.jsonl')
        with pytest.raises(StageError) as exc_info:
            run_pipeline(steps)
        assert exc_info.value.stage == 'corrupt'
        assert exc_info.value.exit_code == 1

    def test_load_plan_errors(self, tmp_path):
        """测试计划文件格式错误"""
        path = tmp_path / 'plan.json'
        path.write_text(json.dumps({'steps': [{'args': {}}]}))
        with pytest.raises(ConfigurationError):
            load_plan(str(path))
        path.write_text(json.dumps([1, 2]))
        with pytest.raises(ConfigurationError):
            load_plan(str(path))


def _sweep_config(**overrides) -> SweepConfig:
    train = TrainConfig(batch_size=4, epochs=1, seed=0,
                        model=ModelConfig(embed_dim=8, attention_heads=2, attention_layers=1,
                                          mlp_layers=2, hidden_size=8))
    fields = {
        'simulate': SimulationConfig(params=HawkesParams(mu=[0.4, 0.3], alpha=[[0.3, 0.1], [0.2, 0.3]],
                                                         gamma=[[1.0, 1.0], [1.0, 1.0]]),
                                     t_max=8.0, n_seqs=20, seed=1),
        'ps': [0.0, 0.4],
        'presets': ['baseline'],
        'seeds': [0],
        'split': SplitSpec(train_frac=0.6, val_frac=0.2, test_frac=0.1, clean_frac=0.1),
        'train': train,
    }
    fields.update(overrides)
    return SweepConfig(**fields)


class TestSweep:
    """实验网格测试类"""

    def test_cells(self):
        """测试网格展开为笛卡尔积"""
        config = _sweep_config(kinds=['uniform', 'flip'], presets=['rdhp', 'baseline'], seeds=[0, 1, 2])
        cells = sweep_cells(config)
        assert len(cells) == 2 * 1 * 2 * 2 * 3
        assert cells[0] == {'kind': 'uniform', 'mode': 'both', 'p': 0.0, 'preset': 'rdhp', 'seed': 0}

    def test_cell_noise_modes(self):
        """测试仅类型与仅时间噪声"""
        cell = {'kind': 'flip', 'p': 0.3, 'seed': 4}
        label = cell_noise({**cell, 'mode': 'label_only'}, 0.8)
        time = cell_noise({**cell, 'mode': 'time_only'}, 0.8)
        both = cell_noise({**cell, 'mode': 'both'}, 0.8)
        assert (label.p, label.time_p) == (0.3, 0.0)
        assert (time.p, time.time_p) == (0.0, 0.3)
        assert (both.p, both.time_p) == (0.3, 0.3)
        assert label.kind == NoiseKind.FLIP and label.seed == 4

    def test_needs_one_source(self):
        """测试 dataset 与 simulate 必须恰好提供一个"""
        with pytest.raises(ValueError):
            _sweep_config(dataset='data.jsonl')

    def test_aggregate(self):
        """测试种子聚合使用样本标准差并标记基线退化违例"""
        cells = pd.DataFrame([
            {'kind': 'uniform', 'mode': 'both', 'p': 0.0, 'preset': 'baseline', 'seed': 0, 'f1': 0.5, 'rmse': 1.0},
            {'kind': 'uniform', 'mode': 'both', 'p': 0.0, 'preset': 'baseline', 'seed': 1, 'f1': 0.7, 'rmse': 3.0},
            {'kind': 'uniform', 'mode': 'both', 'p': 0.3, 'preset': 'baseline', 'seed': 0, 'f1': 0.8, 'rmse': 2.0},
            {'kind': 'uniform', 'mode': 'both', 'p': 0.3, 'preset': 'rdhp', 'seed': 0, 'f1': 0.9, 'rmse': 2.0},
        ])
        table = aggregate_sweep(cells)
        clean = table[(table['p'] == 0.0) & (table['preset'] == 'baseline')].iloc[0]
        assert clean['runs'] == 2
        assert clean['f1_mean'] == pytest.approx(0.6)
        assert clean['f1_std'] == pytest.approx(np.std([0.5, 0.7], ddof=1))
        assert clean['f1'] == '60.00 ± 14.14'
        noisy = table[(table['p'] == 0.3) & (table['preset'] == 'baseline')].iloc[0]
        assert noisy['f1_std'] == 0.0
        assert bool(noisy['degradation_violation']) is True
        assert not table[table['preset'] == 'rdhp']['degradation_violation'].any()

    def test_small_sweep(self, tmp_path):
        """测试顺序执行的小网格写出逐次结果与汇总表"""
        table = sweep(_sweep_config(), str(tmp_path / 'sweep'), jobs=1)
        assert len(table) == 2
        cells = pd.read_csv(tmp_path / 'sweep' / SWEEP_CELLS_FILE)
        assert len(cells) == 2
        assert set(cells.columns) >= {'kind', 'mode', 'p', 'preset', 'seed', 'f1', 'rmse', 'best_epoch'}
        assert os.path.exists(tmp_path / 'sweep' / SWEEP_RESULTS_FILE)
