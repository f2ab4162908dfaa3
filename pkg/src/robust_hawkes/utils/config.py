"""
配置管理模块
"""
import copy
import json
import os
from typing import Any, Dict, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from .exceptions import ConfigurationError

ModelT = TypeVar('ModelT', bound=BaseModel)


class Config:
    """应用级配置（日志、并发、存储精度等），支持点号路径访问"""

    CONFIG_FILE = 'config.json'
    ENV_PREFIX = 'RDHP_'

    # 环境变量 -> 配置键
    ENV_OVERRIDES = {
        'RDHP_LOG_LEVEL': ('logging.level', str),
        'RDHP_JOBS': ('sweep.jobs', int),
        'RDHP_DTYPE': ('tensor.dtype', str),
    }

    def __init__(self, config_file: Optional[str] = None,
                 config_dict: Optional[Dict[str, Any]] = None):
        """
        初始化配置

        Args:
            config_file: JSON 配置文件路径
            config_dict: 直接传入的配置字典（优先于文件）
        """
        if config_dict is not None:
            data = copy.deepcopy(config_dict)
        elif config_file is not None:
            data = self._read_file(config_file)
        else:
            data = {}
        self._data = self._merge(self.get_default_config(), data)
        self._apply_env_overrides()

    @staticmethod
    def _read_file(path: str) -> Dict[str, Any]:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except FileNotFoundError as e:
            raise ConfigurationError(f"配置文件不存在: {path}", 'config_file', path) from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"配置文件不是合法 JSON: {path}: {e}", 'config_file', path) from e

    @classmethod
    def _merge(cls, base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        merged = copy.deepcopy(base)
        for key, value in override.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = cls._merge(merged[key], value)
            else:
                merged[key] = value
        return merged

    def _apply_env_overrides(self) -> None:
        """应用环境变量覆盖"""
        for env_name, (key, caster) in self.ENV_OVERRIDES.items():
            raw = os.getenv(env_name)
            if raw is None:
                continue
            try:
                self.set(key, caster(raw))
            except ValueError as e:
                raise ConfigurationError(f"环境变量 {env_name} 取值非法: {raw}", key, raw) from e

    def get(self, key: str, default: Any = None) -> Any:
        """按点号路径读取配置"""
        node: Any = self._data
        for part in key.split('.'):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, key: str, value: Any) -> None:
        """按点号路径写入配置"""
        parts = key.split('.')
        node = self._data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def update(self, updates: Dict[str, Any]) -> None:
        """批量更新配置"""
        for key, value in updates.items():
            self.set(key, value)

    def has(self, key: str) -> bool:
        """检查配置是否存在"""
        sentinel = object()
        return self.get(key, sentinel) is not sentinel

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._data)

    def save(self, path: str) -> None:
        """保存配置文件"""
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(self._data, f, indent=2, ensure_ascii=False)
        except OSError as e:
            raise ConfigurationError(f"配置文件保存失败: {e}", 'config_file', path) from e

    @staticmethod
    def get_default_config() -> Dict[str, Any]:
        """获取默认配置"""
        return {
            "logging": {
                "level": "INFO"
            },
            "tensor": {
                "dtype": "float32"
            },
            "sweep": {
                "jobs": 1
            },
            "output": {
                "manifest_name": "manifest.json",
                "quiet": False
            }
        }


def load_json_model(path: str, model: Type[ModelT]) -> ModelT:
    """
    从 JSON 文件加载 pydantic 配置模型

    Args:
        path: JSON 文件路径
        model: 目标模型类

    Returns:
        校验后的模型实例
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"配置文件不存在: {path}", 'config_file', path) from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"配置文件不是合法 JSON: {path}: {e}", 'config_file', path) from e
    return validate_model(raw, model, source=path)


def validate_model(raw: Dict[str, Any], model: Type[ModelT], source: str = '<dict>') -> ModelT:
    """把 pydantic 校验错误转换成 ConfigurationError"""
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        key = '.'.join(str(p) for p in first.get('loc', ()))
        raise ConfigurationError(f"{source}: {key}: {first.get('msg')}", key, first.get('input')) from e
