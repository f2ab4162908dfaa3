"""
张量检查点读写（JSON 格式）
"""
import json
import os
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..utils.exceptions import CheckpointError
from ..utils.logger import get_logger

logger = get_logger()

FORMAT_VERSION = 1


def save_tensors(path: str, tensors: Dict[str, np.ndarray],
                 metadata: Optional[Dict[str, Any]] = None) -> None:
    """
    保存 name -> 数组 映射

    Args:
        path: 输出文件路径
        tensors: 名称到数组的映射
        metadata: 附加信息
    """
    payload = {
        'format_version': FORMAT_VERSION,
        'metadata': metadata or {},
        'tensors': {
            name: {'shape': list(np.shape(value)), 'dtype': str(np.asarray(value).dtype),
                   'data': np.asarray(value).reshape(-1).tolist()}
            for name, value in sorted(tensors.items())
        },
    }
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f)
    except OSError as e:
        raise CheckpointError(f"检查点写入失败: {e}", path) from e
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"检查点元数据无法序列化为 JSON: {e}", path) from e
    logger.debug(f"Saved {len(tensors)} tensors to {path}")


def load_tensors(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    读取检查点

    Returns:
        (name -> 数组, metadata)
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except FileNotFoundError as e:
        raise CheckpointError(f"检查点不存在: {path}", path) from e
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"检查点读取失败: {e}", path) from e

    version = payload.get('format_version')
    if version != FORMAT_VERSION:
        raise CheckpointError(f"不支持的检查点版本: {version}", path)

    tensors: Dict[str, np.ndarray] = {}
    for name, entry in payload.get('tensors', {}).items():
        dtype = np.dtype(entry.get('dtype', 'float32'))
        data = np.asarray(entry['data'], dtype=np.float64).astype(dtype)
        try:
            tensors[name] = data.reshape(entry['shape'])
        except ValueError as e:
            raise CheckpointError(f"张量 {name} 数据与形状不符", path) from e
    return tensors, payload.get('metadata', {})
