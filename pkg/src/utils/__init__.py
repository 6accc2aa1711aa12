"""
通用工具模块
"""

from .file_ops import (
    ensure_parent_dir,
    atomic_write_text,
    atomic_write_json,
    read_json
)

__all__ = [
    'ensure_parent_dir',
    'atomic_write_text',
    'atomic_write_json',
    'read_json',
]
