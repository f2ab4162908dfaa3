"""
Robust Hawkes - 噪声鲁棒的深度 Hawkes 过程
"""
__version__ = "0.1.0"
