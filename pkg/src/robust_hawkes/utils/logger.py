"""
日志管理模块
"""
import logging
import os
import sys
from typing import Optional

LOGGER_NAME = 'robust_hawkes'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class Logger:
    """日志管理器"""

    _instance: Optional['Logger'] = None
    _logger: Optional[logging.Logger] = None

    def __new__(cls) -> 'Logger':
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if self._logger is None:
            self._setup_logger()

    def _setup_logger(self) -> None:
        """设置日志器"""
        self._logger = logging.getLogger(LOGGER_NAME)
        level_name = os.getenv('RDHP_LOG_LEVEL', 'INFO').upper()
        self._logger.setLevel(getattr(logging, level_name, logging.INFO))

        # 避免重复添加处理器
        if not self._logger.handlers:
            # stdout 留给命令输出
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
            self._logger.addHandler(console_handler)

    def get_logger(self) -> logging.Logger:
        """获取日志器实例"""
        return self._logger

    def set_level(self, level: str) -> None:
        """调整日志级别"""
        self._logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    @classmethod
    def get_instance(cls) -> 'Logger':
        """获取单例实例"""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance


def get_logger() -> logging.Logger:
    """获取日志器实例的便捷函数"""
    return Logger.get_instance().get_logger()


def set_log_level(level: str) -> None:
    """设置全局日志级别"""
    Logger.get_instance().set_level(level)
