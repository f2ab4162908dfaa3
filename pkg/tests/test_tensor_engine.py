"""
自动求导引擎测试
"""
import numpy as np
import pytest

from robust_hawkes.core.tensor_engine import (Adam, LayerNorm, Linear, Module, Parameter, Tensor,
                                              clip_grad_norm, concat, default_dtype, dropout,
                                              is_grad_enabled, layer_norm, matmul, no_grad, numerical_gradient,
                                              reshape)
from robust_hawkes.utils.exceptions import ContractError, ShapeError


def _unary_ops():
    return [
        lambda a: a.gelu(),
        lambda a: a.softplus(),
        lambda a: a.sigmoid(),
        lambda a: a.softmax(axis=-1),
        lambda a: a.log_softmax(axis=-1),
        lambda a: (a * 0.5).exp(),
        lambda a: (a.softplus() + 0.1).log(),
        lambda a: a ** 2,
        lambda a: a - a.mean(axis=0, keepdims=True),
        lambda a: a.reshape(4, 3).reshape(3, 4),
        lambda a: concat([a, a * 2.0], axis=0)[1:4],
        lambda a: a.transpose().transpose() * -1.5,
    ]


def _binary_ops():
    return [
        lambda a, x, w, g, b: a @ w,
        lambda a, x, w, g, b: a + x,
        lambda a, x, w, g, b: a * x,
        lambda a, x, w, g, b: a / (x * x + 1.0),
        lambda a, x, w, g, b: layer_norm(a, g, b),
        lambda a, x, w, g, b: a + b,
    ]


def _random_graph(rng: np.random.Generator, depth: int = 3):
    """随机组合运算，返回 forward(x, w, g, b) -> 标量"""
    unary, binary = _unary_ops(), _binary_ops()
    steps = []
    for _ in range(depth):
        if rng.random() < 0.5:
            steps.append(('u', int(rng.integers(len(unary)))))
        else:
            steps.append(('b', int(rng.integers(len(binary)))))
    weights = rng.normal(size=(3, 4))

    def forward(x, w, g, b):
        a = x
        for kind, index in steps:
            a = unary[index](a) if kind == 'u' else binary[index](a, x, w, g, b)
        return (a * Tensor(weights)).sum()

    return forward


class TestGradients:
    """梯度正确性测试类"""

    def test_random_graphs_match_finite_differences(self, float64):
        """测试 100 个随机计算图的梯度与中心差分一致"""
        rng = np.random.default_rng(2024)
        for _ in range(100):
            forward = _random_graph(rng)
            leaves = [Parameter(rng.normal(size=(3, 4))), Parameter(rng.normal(size=(4, 4)) * 0.5),
                      Parameter(1.0 + 0.1 * rng.normal(size=4)), Parameter(0.1 * rng.normal(size=4))]
            loss = forward(*leaves)
            if not loss.requires_grad:
                continue
            loss.backward()
            for leaf in leaves:
                numeric = numerical_gradient(lambda: forward(*leaves), leaf, step=1e-4)
                analytic = leaf.grad if leaf.grad is not None else np.zeros_like(numeric)
                np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-6)

    def test_broadcast_gradient(self, float64):
        """测试广播加法的梯度按行求和"""
        x = Parameter(np.ones((3, 4)))
        b = Parameter(np.zeros(4))
        (x + b).sum().backward()
        assert np.array_equal(b.grad, np.full(4, 3.0))

    def test_gradients_accumulate(self, float64):
        """测试两次反向传播梯度累加"""
        x = Parameter(np.array([1.0, 2.0]))
        (x * 3.0).sum().backward()
        (x * 3.0).sum().backward()
        assert np.array_equal(x.grad, np.array([6.0, 6.0]))

    def test_linear_and_layer_norm(self, float64):
        """测试 Linear 与 LayerNorm 组合的参数梯度"""
        rng = np.random.default_rng(0)
        linear = Linear(4, 3, rng)
        norm = LayerNorm(3)
        x = Tensor(rng.normal(size=(2, 4)))

        def loss():
            return (norm(linear(x)).gelu() * Tensor([[1.0, -2.0, 0.5]])).sum()

        loss().backward()
        for param in (linear.weight, linear.bias, norm.gain):
            np.testing.assert_allclose(param.grad, numerical_gradient(loss, param), rtol=1e-3, atol=1e-6)


class TestTensorOps:
    """张量运算测试类"""

    def test_softmax_normalized(self):
        """测试 softmax 非负且和为 1"""
        out = Tensor(np.random.default_rng(1).normal(size=(5, 7)) * 10, dtype='float64').softmax(axis=-1)
        assert np.all(out.data >= 0)
        assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_backward_requires_scalar(self):
        """测试非标量损失反向传播时报错"""
        x = Parameter(np.ones(3))
        with pytest.raises(ContractError):
            (x * 2.0).backward()

    def test_backward_requires_graph(self):
        """测试不在梯度带上的损失"""
        with pytest.raises(ContractError):
            Tensor(1.0).backward()

    def test_shape_errors(self):
        """测试形状不兼容"""
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ShapeError):
            reshape(Tensor(np.ones(6)), (4, 2))
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4, 3)))

    def test_no_grad(self):
        """测试 no_grad 中不记录梯度"""
        x = Parameter(np.ones(3))
        with no_grad():
            assert not is_grad_enabled()
            y = x * 2.0
        assert is_grad_enabled()
        assert not y.requires_grad

    def test_default_dtype(self):
        """测试存储精度切换"""
        assert Tensor(1.0).dtype == np.float32
        with default_dtype('float64'):
            assert Tensor(1.0).dtype == np.float64
        assert Tensor(1.0).dtype == np.float32

    def test_dropout(self):
        """测试 dropout 仅在训练时生效"""
        x = Tensor(np.ones((100, 10)))
        assert dropout(x, 0.5, None, training=False) is x
        dropped = dropout(x, 0.5, np.random.default_rng(0), training=True)
        assert set(np.unique(dropped.data).tolist()) <= {0.0, 2.0}
        with pytest.raises(ContractError):
            dropout(x, 0.5, None, training=True)


class _Toy(Module):
    def __init__(self):
        rng = np.random.default_rng(0)
        self.first = Linear(2, 3, rng)
        self.blocks = [Linear(3, 3, rng), Linear(3, 1, rng)]
        self.assign_names()


class TestModule:
    """模块测试类"""

    def test_named_parameters(self):
        """测试参数递归收集与命名"""
        names = [name for name, _ in _Toy().named_parameters()]
        assert names == ['first.weight', 'first.bias', 'blocks.0.weight', 'blocks.0.bias',
                         'blocks.1.weight', 'blocks.1.bias']

    def test_state_round_trip(self):
        """测试参数导出与加载"""
        source, target = _Toy(), _Toy()
        for param in source.parameters():
            param.data = param.data + 1.0
        target.load_state_arrays(source.state_arrays())
        for a, b in zip(source.parameters(), target.parameters()):
            assert np.array_equal(a.data, b.data)

    def test_load_shape_mismatch(self):
        """测试形状不一致时报错"""
        arrays = _Toy().state_arrays()
        arrays['first.weight'] = np.zeros((5, 5))
        with pytest.raises(ShapeError):
            _Toy().load_state_arrays(arrays)

    def test_load_missing(self):
        """测试缺少参数时报错"""
        arrays = _Toy().state_arrays()
        del arrays['first.bias']
        with pytest.raises(ContractError):
            _Toy().load_state_arrays(arrays)


class TestAdam:
    """优化器测试类"""

    def test_quadratic_bowl(self, float64):
        """测试 Adam 在 (x−3)² 上收敛"""
        x = Parameter(np.array([0.0]))
        opt = Adam([x], lr=1e-1)
        for _ in range(500):
            opt.zero_grad()
            ((x - 3.0) ** 2).sum().backward()
            opt.step()
        assert abs(float(x.data[0]) - 3.0) < 1e-2

    def test_single_group(self):
        """测试参数只能属于一个优化器分组"""
        x = Parameter(np.zeros(2))
        Adam([x], group='heads')
        with pytest.raises(ContractError):
            Adam([x], group='encoder')

    def test_parameters_without_grad_unchanged(self):
        """测试没有梯度的参数不更新"""
        x = Parameter(np.ones(2))
        Adam([x]).step()
        assert np.array_equal(x.data, np.ones(2, dtype=np.float32))

    def test_clip_grad_norm(self, float64):
        """测试全局范数裁剪"""
        x = Parameter(np.zeros(2))
        x.grad = np.array([3.0, 4.0])
        norm = clip_grad_norm([x], 1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(x.grad) == pytest.approx(1.0, rel=1e-5)
