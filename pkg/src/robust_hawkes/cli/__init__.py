"""CLI模块"""
