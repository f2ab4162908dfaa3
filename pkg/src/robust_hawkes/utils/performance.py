"""
性能工具：计时与多进程并行
"""
import concurrent.futures
import time
from typing import Any, Callable, List, Optional, Sequence, Tuple

from .logger import get_logger

logger = get_logger()


class Timer:
    """计时器上下文管理器"""

    def __init__(self, description: str = "Operation", log_result: bool = True):
        self.description = description
        self.log_result = log_result
        self.start_time: Optional[float] = None
        self.end_time: Optional[float] = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        logger.debug(f"Starting {self.description}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.end_time = time.perf_counter()
        duration = self.end_time - self.start_time

        if self.log_result:
            if duration > 1.0:
                logger.info(f"{self.description} completed in {duration:.2f}s")
            else:
                logger.debug(f"{self.description} completed in {duration*1000:.0f}ms")

    @property
    def duration(self) -> Optional[float]:
        """获取持续时间（秒）"""
        if self.start_time is not None and self.end_time is not None:
            return self.end_time - self.start_time
        return None


class ParallelExecutor:
    """并行执行器（进程池，单元格之间互不共享状态）"""

    def __init__(self, max_workers: Optional[int] = None):
        """
        初始化并行执行器

        Args:
            max_workers: 最大工作进程数，1 表示在当前进程内顺序执行
        """
        self.max_workers = max_workers

    def execute_parallel_with_args(self, func: Callable, args_list: Sequence[Tuple],
                                   on_done: Optional[Callable[[int, Any], None]] = None) -> List[Any]:
        """
        使用不同参数并行执行同一函数，结果按输入顺序返回

        Args:
            func: 可被 pickle 的顶层函数
            args_list: 参数列表
            on_done: 每个任务完成时的回调 (索引, 结果)

        Returns:
            结果列表；任务内部抛出的异常会原样向上传播
        """
        results: List[Any] = [None] * len(args_list)
        if not args_list:
            return results

        if self.max_workers is not None and self.max_workers <= 1:
            for i, args in enumerate(args_list):
                results[i] = func(*args)
                if on_done:
                    on_done(i, results[i])
            return results

        with concurrent.futures.ProcessPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {executor.submit(func, *args): i for i, args in enumerate(args_list)}
            for future in concurrent.futures.as_completed(futures):
                i = futures[future]
                try:
                    results[i] = future.result()
                except Exception as e:
                    logger.error(f"Task {i} failed: {e}")
                    raise
                if on_done:
                    on_done(i, results[i])
        return results
