"""
张量与反向模式自动微分

基于 numpy 的稠密张量、梯度带、神经网络基础层与 Adam 优化器。
"""
import contextlib
import itertools
import math
import threading
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..utils.exceptions import ContractError, ShapeError
from ..utils.logger import get_logger

logger = get_logger()

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_GELU_C = math.sqrt(2.0 / math.pi)
_node_ids = itertools.count()


class _EngineState(threading.local):
    """每个线程独立的梯度开关与存储精度"""

    def __init__(self):
        self.grad_enabled = True
        self.dtype: np.dtype = np.dtype(np.float32)


_state = _EngineState()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """在该上下文中的运算不记录到梯度带"""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextlib.contextmanager
def default_dtype(dtype: Union[str, type, np.dtype]) -> Iterator[None]:
    """临时切换张量存储精度（梯度检查使用 float64）"""
    previous = _state.dtype
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


def get_default_dtype() -> np.dtype:
    return _state.dtype


def is_grad_enabled() -> bool:
    return _state.grad_enabled


class Tensor:
    """参与梯度带的稠密张量"""

    # numpy 数组在左侧时交给 Tensor 的反射运算符
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 dtype: Optional[Union[str, type, np.dtype]] = None):
        self.data: np.ndarray = np.array(data, dtype=dtype or _state.dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.id = next(_node_ids)
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = ''

    # ---- 基本属性 ----

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() 需要单元素张量，当前形状 {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        grad = ', requires_grad=True' if self.requires_grad else ''
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}{grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # ---- 反向传播 ----

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """从标量损失反向传播，梯度在叶子节点上累加"""
        if grad is None and self.size != 1:
            raise ContractError(f"backward 需要标量损失，当前形状 {self.shape}")
        if not self.requires_grad:
            raise ContractError("损失不在梯度带上（没有可训练的上游参数）")
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.dtype)
        GradientTape.from_output(self).run(self, seed)

    # ---- 运算符 ----

    def __add__(self, other: ArrayLike) -> 'Tensor':
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> 'Tensor':
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> 'Tensor':
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> 'Tensor':
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> 'Tensor':
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> 'Tensor':
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> 'Tensor':
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> 'Tensor':
        return div(other, self)

    def __neg__(self) -> 'Tensor':
        return neg(self)

    def __matmul__(self, other: 'Tensor') -> 'Tensor':
        return matmul(self, other)

    def __pow__(self, exponent: float) -> 'Tensor':
        return power(self, exponent)

    def __getitem__(self, index: Any) -> 'Tensor':
        return getitem(self, index)

    # ---- 方法形式 ----

    def exp(self) -> 'Tensor':
        return exp(self)

    def log(self) -> 'Tensor':
        return log(self)

    def abs(self) -> 'Tensor':
        return absolute(self)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> 'Tensor':
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape: Any) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> 'Tensor':
        return transpose(self, axes or None)

    @property
    def T(self) -> 'Tensor':
        return transpose(self, None)

    def softmax(self, axis: int = -1) -> 'Tensor':
        return softmax(self, axis)

    def log_softmax(self, axis: int = -1) -> 'Tensor':
        return log_softmax(self, axis)

    def gelu(self) -> 'Tensor':
        return gelu(self)

    def softplus(self) -> 'Tensor':
        return softplus(self)

    def sigmoid(self) -> 'Tensor':
        return sigmoid(self)

    def clamp(self, low: Optional[float] = None, high: Optional[float] = None) -> 'Tensor':
        return clamp(self, low, high)


class Parameter(Tensor):
    """可训练参数，只能属于一个优化器分组"""

    def __init__(self, data: ArrayLike, name: str = '', dtype: Optional[Union[str, type, np.dtype]] = None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.group: Optional[str] = None

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


class GradientTape:
    """按节点 id 逆序排列的反向遍历记录"""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> 'GradientTape':
        seen = set()
        nodes: List[Tensor] = []
        stack = [output]
        while stack:
            node = stack.pop()
            if node.id in seen or not node.requires_grad:
                continue
            seen.add(node.id)
            nodes.append(node)
            stack.extend(node._parents)
        # 节点 id 单调递增，父节点总是先于子节点创建
        nodes.sort(key=lambda n: n.id, reverse=True)
        return cls(nodes)

    def run(self, output: Tensor, seed: np.ndarray) -> None:
        grads: Dict[int, np.ndarray] = {output.id: seed}
        for node in self.nodes:
            g = grads.pop(node.id, None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)  # type: ignore[misc]
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=parent.dtype)
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + pg
                else:
                    grads[parent.id] = pg


# ---- 内部工具 ----

def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
    dtype = parents[0].dtype if parents else _state.dtype
    out = Tensor(data, dtype=dtype)
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op} 形状不兼容", a.shape, b.shape) from None


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度求和回原形状"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---- 逐元素运算 ----

def add(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'add')
    return _result(a.data + b.data, (a, b),
                   lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)), 'add')


def sub(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'sub')
    return _result(a.data - b.data, (a, b),
                   lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)), 'sub')


def mul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'mul')
    return _result(a.data * b.data, (a, b),
                   lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)), 'mul')


def div(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'div')
    out = a.data / b.data
    return _result(out, (a, b),
                   lambda g: (unbroadcast(g / b.data, a.shape),
                              unbroadcast(-g * out / b.data, b.shape)), 'div')


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,), 'neg')


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), 'exp')


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), 'log')


def power(a: Tensor, exponent: float) -> Tensor:
    if isinstance(exponent, Tensor):
        raise ContractError("power 只支持标量指数")
    exponent = float(exponent)
    return _result(a.data ** exponent, (a,),
                   lambda g: (g * exponent * a.data ** (exponent - 1.0),), 'power')


def absolute(a: Tensor) -> Tensor:
    # 0 处次梯度取 0
    return _result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), 'abs')


def clamp(a: Tensor, low: Optional[float] = None, high: Optional[float] = None) -> Tensor:
    """截断；区间内（含端点）梯度为 1，区间外为 0"""
    lo = -np.inf if low is None else low
    hi = np.inf if high is None else high
    inside = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), 'clamp')


def gelu(a: Tensor) -> Tensor:
    """tanh 近似 gelu"""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th ** 2) * d_inner),)

    return _result(out, (a,), backward, 'gelu')


def softplus(a: Tensor) -> Tensor:
    return _result(np.logaddexp(0.0, a.data), (a,), lambda g: (g * expit(a.data),), 'softplus')


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), 'sigmoid')


# ---- 归约与形状 ----

def _normalize_axis(axis: Optional[Union[int, Tuple[int, ...]]], ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(ax % ndim for ax in axes)


def tensor_sum(a: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None,
               keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    # 双精度累加
    out = np.sum(a.data, axis=axes, keepdims=keepdims, dtype=np.float64)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward, 'sum')


def tensor_mean(a: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None,
                keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tensor_sum(a, axis, keepdims) * (1.0 / max(count, 1))


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape 元素数不一致", a.shape, tuple(shape)) from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    perm = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(perm))
    return _result(np.transpose(a.data, perm), (a,), lambda g: (np.transpose(g, inverse),), 'transpose')


def swap_last(a: Tensor) -> Tensor:
    perm = list(range(a.ndim))
    perm[-1], perm[-2] = perm[-2], perm[-1]
    return transpose(a, perm)


def getitem(a: Tensor, index: Any) -> Tensor:
    """切片/索引"""
    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), backward, 'slice')


def concat(tensors: Sequence[Union[Tensor, ArrayLike]], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat 至少需要一个张量")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat 形状不兼容", parts[0].shape, parts[-1].shape) from None
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]
    return _result(out, parts, lambda g: tuple(np.split(g, bounds, axis=axis)), 'concat')


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul 形状不兼容", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul 批维度不兼容", a.shape, b.shape) from None

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), backward, 'matmul')


# ---- 归一化与激活 ----

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _result(out, (a,), backward, 'softmax')


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return _result(out, (a,), backward, 'log_softmax')


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps) ** 0.5 * gain + bias


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """倒置 dropout，仅训练时生效"""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ContractError("训练模式下 dropout 需要随机数生成器")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * Tensor(mask, dtype=x.dtype)


# ---- 模块 ----

class Module:
    """参数容器基类：属性中的 Parameter 和子 Module 会被递归收集"""

    training = True

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + '.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{path}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = '') -> None:
        for name, param in self.named_parameters(prefix):
            param.name = name

    def modules(self) -> Iterator['Module']:
        yield self
        for value in vars(self).values():
            children = value if isinstance(value, (list, tuple)) else [value]
            for child in children:
                if isinstance(child, Module):
                    yield from child.modules()

    def train(self, mode: bool = True) -> 'Module':
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(arrays))
        if missing:
            raise ContractError(f"检查点缺少参数: {missing[:5]}", {'missing': missing})
        for name, param in params.items():
            value = np.asarray(arrays[name], dtype=param.dtype)
            if value.shape != param.shape:
                raise ShapeError(f"参数 {name} 形状不一致", param.shape, value.shape)
            param.data = value.copy()


class Linear(Module):
    """全连接层 y = xW + b"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 init_std: Optional[float] = None, bias: bool = True, zero_init: bool = False):
        std = init_std if init_std is not None else 1.0 / math.sqrt(in_features)
        if zero_init:
            weight = np.zeros((in_features, out_features))
        else:
            weight = rng.normal(0.0, std, size=(in_features, out_features))
        self.weight = Parameter(weight)
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


# ---- 优化器 ----

class Adam:
    """带偏差修正的 Adam 优化器，管理一个参数分组"""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8, group: str = 'default'):
        self.params = list(params)
        for p in self.params:
            if p.group is not None:
                raise ContractError(f"参数 {p.name or p.id} 已属于优化器分组 {p.group}",
                                    {'parameter': p.name, 'group': p.group})
            p.group = group
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.group = group
        self.step_count = 0
        self.exp_avg = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]
        self.exp_avg_sq = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]

    def step(self) -> None:
        """按当前梯度更新一次；没有梯度的参数保持不变"""
        self.step_count += 1
        beta1, beta2 = self.betas
        bias1 = 1.0 - beta1 ** self.step_count
        bias2 = 1.0 - beta2 ** self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            self.exp_avg[i] = beta1 * self.exp_avg[i] + (1.0 - beta1) * g
            self.exp_avg_sq[i] = beta2 * self.exp_avg_sq[i] + (1.0 - beta2) * g * g
            update = (self.exp_avg[i] / bias1) / (np.sqrt(self.exp_avg_sq[i] / bias2) + self.eps)
            p.data = (p.data.astype(np.float64) - self.lr * update).astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> Dict[str, Any]:
        return {
            'step': self.step_count,
            'exp_avg': {p.name: m.copy() for p, m in zip(self.params, self.exp_avg)},
            'exp_avg_sq': {p.name: v.copy() for p, v in zip(self.params, self.exp_avg_sq)},
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.step_count = int(state['step'])
        try:
            self.exp_avg = [np.asarray(state['exp_avg'][p.name], dtype=np.float64) for p in self.params]
            self.exp_avg_sq = [np.asarray(state['exp_avg_sq'][p.name], dtype=np.float64)
                               for p in self.params]
        except KeyError as e:
            raise ContractError(f"优化器状态缺少参数 {e}") from e


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """全局范数裁剪，返回裁剪前的范数"""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.dtype)
        logger.debug(f"Gradient norm {total:.4f} clipped to {max_norm}")
    return total


def numerical_gradient(fn: Callable[[], Union[Tensor, float]], tensor: Tensor,
                       step: float = 1e-4) -> np.ndarray:
    """中心差分数值梯度"""
    grad = np.zeros(tensor.shape, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = fn()
            flat[i] = original - step
            minus = fn()
            flat[i] = original
            plus_v = plus.item() if isinstance(plus, Tensor) else float(plus)
            minus_v = minus.item() if isinstance(minus, Tensor) else float(minus)
            grad.reshape(-1)[i] = (plus_v - minus_v) / (2.0 * step)
    return grad
