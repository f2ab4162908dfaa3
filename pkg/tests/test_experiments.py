"""
端到端实验测试

slow 标记的实验在合成真值数据上训练完整模型，默认不运行（pytest -m slow）。
"""
import json
import os

import numpy as np
import pytest

from robust_hawkes.core.dataset_io import split
from robust_hawkes.core.eval_metrics import compounding_report
from robust_hawkes.core.hawkes_sim import simulate_dataset
from robust_hawkes.core.manifest import ExperimentManifest, file_sha256
from robust_hawkes.core.noise_forge import corrupt
from robust_hawkes.core.pipeline import load_plan, run_pipeline
from robust_hawkes.core.trainer import best_model, evaluate, fit, weight_equilibrium
from robust_hawkes.models.config_models import HawkesParams, ModelConfig, NoiseKind, NoiseSpec, TrainConfig
from robust_hawkes.models.event_models import SplitSpec

SEEDS = [0, 1, 2, 3, 4]


@pytest.fixture(scope='module')
def four_type_data():
    """4 类型互激数据集，2000 条序列，平均长度约 27"""
    params = HawkesParams(mu=[0.2] * 4,
                          alpha=[[0.4 if o == j else 0.1 for j in range(4)] for o in range(4)],
                          gamma=[[1.0] * 4 for _ in range(4)])
    return simulate_dataset(params, t_max=10.0, n_seqs=2000, seed=2024)


def _train_config(preset: str, seed: int) -> TrainConfig:
    # 短训练：m、n 从 1e-2 起步
    return TrainConfig(
        batch_size=16, clean_batch_size=16, epochs=12, lr=1e-3, seed=seed, overparam_init_std=1e-2,
        model=ModelConfig(embed_dim=16, attention_heads=4, attention_layers=2, mlp_layers=2,
                          hidden_size=16, dropout_rate=0.1)).apply_preset(preset)



def _splits(dataset, seed: int):
    return split(dataset, SplitSpec(train_frac=0.75, val_frac=0.1, test_frac=0.1, clean_frac=0.05, seed=seed))


def _noisy(train, seed: int, label_p: float = 0.3, time_p: float = 0.3):
    noisy, _ = corrupt(train, NoiseSpec(kind=NoiseKind.UNIFORM, p=label_p, time_p=time_p,
                                        time_sigma=0.8, seed=seed))
    return noisy


@pytest.mark.slow
class TestRobustness:
    """抗噪能力实验测试类"""

    @pytest.fixture(scope='class')
    def runs(self, four_type_data):
        results = {'rdhp': [], 'baseline': [], 'no_overparam': []}
        for seed in SEEDS:
            train, val, test, clean = _splits(four_type_data, seed)
            noisy = _noisy(train, seed)
            for preset in results:
                state, history = fit(_train_config(preset, seed), noisy, clean, val)
                scores = evaluate(best_model(state), test)
                results[preset].append({'f1': scores['macro_f1'], 'rmse': scores['rmse'],
                                        'equilibrium': weight_equilibrium(history)})
        return results

    def test_rdhp_beats_baseline(self, runs):
        """测试 30% 噪声下完整模型的 F1 至少高 3 个百分点且 RMSE 更低"""
        f1 = {k: np.mean([r['f1'] for r in v]) for k, v in runs.items()}
        rmse = {k: np.mean([r['rmse'] for r in v]) for k, v in runs.items()}
        assert f1['rdhp'] - f1['baseline'] >= 0.03
        assert rmse['rdhp'] < rmse['baseline']

    def test_overparams_help_time_prediction(self, runs):
        """测试去掉过参数后 RMSE 严格高于完整模型"""
        rdhp = [r['rmse'] for r in runs['rdhp']]
        ablated = [r['rmse'] for r in runs['no_overparam']]
        assert rdhp != ablated
        assert np.mean(rdhp) < np.mean(ablated)

    def test_weights_settle(self, runs):
        """测试重加权网络输出在训练后期趋于稳定"""
        settled = sum(r['equilibrium']['settled'] for r in runs['rdhp'])
        assert settled >= 4


@pytest.mark.slow
class TestCompounding:
    """噪声叠加实验测试类"""

    def test_both_exceeds_each(self, four_type_data):
        """测试两种噪声同时存在时的强度偏移大于任一单独噪声"""
        hits = 0
        ratios = []
        for seed in SEEDS:
            train, val, test, clean = _splits(four_type_data, seed)
            variants = {
                'clean': train,
                'time': _noisy(train, seed, label_p=0.0),
                'label': _noisy(train, seed, time_p=0.0),
                'both': _noisy(train, seed),
            }
            models = {}
            for name, data in variants.items():
                state, _ = fit(_train_config('baseline', seed), data, clean, val)
                models[name] = best_model(state)
            report = compounding_report(models['clean'], models['time'], models['label'], models['both'],
                                        probe=test)
            hits += report['both_exceeds_max']
            ratios.append(report['ratio'])
        assert hits >= 4, ratios


@pytest.mark.integration
class TestReplay:
    """完整流水线重放测试类"""

    def test_metrics_identical(self, tmp_path):
        """测试从同一清单重放两次得到相同的指标文件"""
        config_path = tmp_path / 'train.json'
        config_path.write_text(json.dumps({
            'epochs': 1, 'batch_size': 4, 'clean_batch_size': 4, 'seed': 0,
            'model': {'embed_dim': 8, 'attention_heads': 2, 'attention_layers': 1, 'mlp_layers': 2,
                      'hidden_size': 8},
            'reweight': {'hidden_size': 8}}))
        data = str(tmp_path / 'data.jsonl')
        splits = str(tmp_path / 'splits')
        ckpt = str(tmp_path / 'ckpt')
        metrics = str(tmp_path / 'metrics.json')
        steps = [
            {'command': 'simulate', 'args': {'out': data, 't_max': 8.0, 'n_seqs': 16, 'seed': 1,
                                             'mu': [0.5, 0.4], 'alpha': [[0.3, 0.1], [0.1, 0.3]]}},
            {'command': 'split', 'args': {'input_path': data, 'out_dir': splits, 'train_frac': 0.5,
                                          'val_frac': 0.2, 'test_frac': 0.2, 'clean_frac': 0.1}},
            {'command': 'corrupt', 'args': {'input_path': os.path.join(splits, 'train.jsonl'),
                                            'out': os.path.join(splits, 'noisy.jsonl'), 'p': 0.3,
                                            'time_p': 0.3, 'seed': 3}},
            {'command': 'train', 'args': {'train': os.path.join(splits, 'noisy.jsonl'), 'out': ckpt,
                                          'config': str(config_path),
                                          'clean': os.path.join(splits, 'clean.jsonl'),
                                          'val': os.path.join(splits, 'val.jsonl')}},
            {'command': 'eval', 'args': {'ckpt': ckpt, 'test': os.path.join(splits, 'test.jsonl'),
                                         'out': metrics}},
        ]
        first = str(tmp_path / 'first.json')
        run_pipeline(steps, manifest=first)
        expected = file_sha256(metrics)

        for name in ('second.json', 'third.json'):
            run_pipeline(load_plan(first), manifest=str(tmp_path / name))
            assert file_sha256(metrics) == expected
        records = ExperimentManifest.load(str(tmp_path / 'third.json')).records
        assert records[-1].outputs == {metrics: expected}
