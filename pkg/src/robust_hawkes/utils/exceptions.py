"""
异常定义模块
"""
import logging
import traceback
from typing import Any, Dict, Optional, Sequence


class RobustHawkesError(Exception):
    """项目基础异常类"""

    def __init__(self, message: str, error_code: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        """
        初始化异常

        Args:
            message: 错误消息
            error_code: 错误代码
            details: 附加详细信息
        """
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}

        # 记录异常堆栈信息
        self.traceback_str = traceback.format_exc()

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            'error_type': self.__class__.__name__,
            'message': self.message,
            'error_code': self.error_code,
            'details': self.details,
            'traceback': self.traceback_str if self.details.get('include_traceback') else None
        }

    def log_error(self, logger: Optional[logging.Logger] = None) -> None:
        """记录错误日志"""
        if logger is None:
            logger = logging.getLogger(__name__)

        logger.error(f"[{self.__class__.__name__}] {self.message}",
                     extra={'error_code': self.error_code, 'details': self.details})


# 配置相关异常
class ConfigurationError(RobustHawkesError):
    """配置异常"""

    def __init__(self, message: str, config_key: Optional[str] = None,
                 config_value: Optional[Any] = None):
        super().__init__(message, 'CONFIG_ERROR')
        self.details['config_key'] = config_key
        self.details['config_value'] = config_value


# 数据相关异常
class DataValidationError(RobustHawkesError):
    """数据验证异常"""

    def __init__(self, message: str, field_name: Optional[str] = None,
                 field_value: Optional[Any] = None, error_code: str = 'VALIDATION_ERROR'):
        super().__init__(message, error_code)
        self.details['field_name'] = field_name
        self.details['field_value'] = field_value


class MalformedInputError(DataValidationError):
    """输入文件格式错误"""

    def __init__(self, message: str, line_number: Optional[int] = None,
                 path: Optional[str] = None):
        super().__init__(message, error_code='MALFORMED_INPUT')
        self.line_number = line_number
        self.details['line_number'] = line_number
        self.details['path'] = path


class SchemaViolationError(DataValidationError):
    """数据违反 schema 约束（如 mark >= K）"""

    def __init__(self, message: str, field_name: Optional[str] = None,
                 field_value: Optional[Any] = None, line_number: Optional[int] = None):
        super().__init__(message, field_name, field_value, error_code='SCHEMA_VIOLATION')
        self.line_number = line_number
        self.details['line_number'] = line_number


class EmptyDatasetError(DataValidationError):
    """数据集为空"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message, error_code='EMPTY_DATASET')
        self.details['path'] = path


class DatasetIOError(RobustHawkesError):
    """数据集读写失败"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message, 'IO_ERROR')
        self.details['path'] = path


# 数值计算相关异常
class DomainError(RobustHawkesError):
    """参数超出定义域"""

    def __init__(self, message: str, argument: Optional[str] = None,
                 value: Optional[Any] = None):
        super().__init__(message, 'DOMAIN_ERROR')
        self.details['argument'] = argument
        self.details['value'] = value


class ShapeError(RobustHawkesError):
    """张量形状不匹配"""

    def __init__(self, message: str, left: Sequence[int] = (), right: Sequence[int] = ()):
        super().__init__(f"{message}: {tuple(left)} vs {tuple(right)}", 'SHAPE_ERROR')
        self.details['left_shape'] = tuple(left)
        self.details['right_shape'] = tuple(right)


class ContractError(RobustHawkesError):
    """调用契约被破坏"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, 'CONTRACT_ERROR', details)


class NumericalInstabilityError(RobustHawkesError):
    """训练中出现 NaN/Inf"""

    def __init__(self, message: str, epoch: Optional[int] = None,
                 sequence_ids: Optional[Sequence[str]] = None, dump_path: Optional[str] = None):
        super().__init__(message, 'NUMERICAL_ERROR')
        self.details['epoch'] = epoch
        self.details['sequence_ids'] = list(sequence_ids or [])
        self.details['dump_path'] = dump_path


class CheckpointError(RobustHawkesError):
    """检查点读写异常"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message, 'CHECKPOINT_ERROR')
        self.details['path'] = path


class StageError(RobustHawkesError):
    """流水线阶段失败"""

    def __init__(self, message: str, stage: str, exit_code: int = 1):
        super().__init__(message, 'STAGE_ERROR')
        self.stage = stage
        self.exit_code = exit_code
        self.details['stage'] = stage
        self.details['exit_code'] = exit_code


# 输入类错误对应 CLI 退出码 2
INPUT_ERRORS = (ConfigurationError, DataValidationError, DatasetIOError)


def exit_code_for(error: Exception) -> int:
    """
    根据异常类型返回 CLI 退出码

    Args:
        error: 异常对象

    Returns:
        0 成功, 1 运行时失败, 2 用法/输入错误
    """
    if isinstance(error, StageError):
        return error.exit_code
    if isinstance(error, INPUT_ERRORS):
        return 2
    return 1
