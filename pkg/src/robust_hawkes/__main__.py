"""
主入口文件
"""
import os
import sys

# 添加src目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from robust_hawkes.cli.commands import cli  # noqa: E402


def main():
    """主入口函数"""
    cli()


if __name__ == '__main__':
    main()
