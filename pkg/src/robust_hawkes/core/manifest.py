"""
实验清单：记录每次命令的参数、配置哈希、输入输出文件哈希、随机种子与版本
"""
import hashlib
import json
import os
import platform
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import BaseModel, Field

from ..utils.config import validate_model
from ..utils.exceptions import DatasetIOError, MalformedInputError
from ..utils.logger import get_logger

logger = get_logger()

MANIFEST_VERSION = 1


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(payload: Any) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def runtime_versions() -> Dict[str, str]:
    from .. import __version__

    return {
        'robust_hawkes': __version__,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
        'pydantic': pydantic.VERSION,
    }


class ManifestRecord(BaseModel):
    """一次命令调用"""
    command: str
    args: Dict[str, Any] = Field(default_factory=dict)
    config_hash: Optional[str] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    seeds: Dict[str, Any] = Field(default_factory=dict)
    versions: Dict[str, str] = Field(default_factory=dict)
    started_at: str = ''


class ExperimentManifest(BaseModel):
    """按调用顺序排列的命令记录"""
    format_version: int = MANIFEST_VERSION
    records: List[ManifestRecord] = Field(default_factory=list)

    @classmethod
    def load(cls, path: str) -> 'ExperimentManifest':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                raw = json.load(f)
        except FileNotFoundError as e:
            raise DatasetIOError(f"清单文件不存在: {path}", path) from e
        except json.JSONDecodeError as e:
            raise MalformedInputError(f"{path}:{e.lineno}: 清单不是合法 JSON", e.lineno, path) from e
        return validate_model(raw, cls, source=path)

    @classmethod
    def load_or_create(cls, path: str) -> 'ExperimentManifest':
        return cls.load(path) if os.path.exists(path) else cls()

    def save(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.model_dump_json(indent=2))
            f.write('\n')


def make_record(command: str, args: Dict[str, Any], inputs: Iterable[str], outputs: Iterable[str],
                seeds: Optional[Dict[str, Any]] = None, cfg_hash: Optional[str] = None) -> ManifestRecord:
    return ManifestRecord(
        command=command,
        args=args,
        config_hash=cfg_hash or config_hash(args),
        inputs={p: file_sha256(p) for p in inputs if p and os.path.exists(p)},
        outputs={p: file_sha256(p) for p in outputs if p and os.path.exists(p)},
        seeds=seeds or {},
        versions=runtime_versions(),
        started_at=datetime.now(timezone.utc).isoformat(timespec='seconds'),
    )


def append_record(path: str, record: ManifestRecord) -> ExperimentManifest:
    manifest = ExperimentManifest.load_or_create(path)
    manifest.records.append(record)
    manifest.save(path)
    logger.debug(f"Manifest {path}: recorded '{record.command}' ({len(record.outputs)} output(s))")
    return manifest


def verify_manifest(manifest: ExperimentManifest) -> List[Dict[str, str]]:
    """
    校验清单中每个输出文件的当前哈希（同一路径以最后一次记录为准）

    Returns:
        不一致项列表，每项包含 command、path、expected、actual（文件缺失时为 missing）
    """
    problems: List[Dict[str, str]] = []
    latest: Dict[str, ManifestRecord] = {}
    for record in manifest.records:
        for path in record.outputs:
            latest[path] = record
    for path, record in latest.items():
        expected = record.outputs[path]
        actual = file_sha256(path) if os.path.exists(path) else 'missing'
        if actual != expected:
            problems.append({'command': record.command, 'path': path,
                             'expected': expected, 'actual': actual})
    return problems
