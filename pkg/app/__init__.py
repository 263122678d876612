# app/__init__.py
"""
应用主模块初始化
"""
