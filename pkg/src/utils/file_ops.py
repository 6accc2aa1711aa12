"""
文件输出工具模块
所有结果文件都先写临时文件再重命名，保证原子性
"""

import os
import json
import math
import logging
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def ensure_parent_dir(path: PathLike) -> Path:
    """确保文件所在目录存在"""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        logger.info(f"创建目录: {path.parent}")
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    """原子写入文本文件（write-temp-then-rename）

    Args:
        path: 目标路径
        text: 文件内容

    Returns:
        目标路径
    """
    path = ensure_parent_dir(path)
    fd, tmp_path = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"已写入: {path}")
    return path


def _json_safe(value: Any) -> Any:
    # NaN/inf 不是合法JSON，统一写成 null
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _json_default(value: Any) -> Any:
    # numpy 标量和数组
    if hasattr(value, "tolist"):
        return _json_safe(value.tolist())
    raise TypeError(f"无法序列化的类型: {type(value).__name__}")


def atomic_write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    """原子写入JSON；字段顺序与字典插入顺序一致"""
    text = json.dumps(_json_safe(data), ensure_ascii=False, indent=4,
                      allow_nan=False, default=_json_default) + "\n"
    return atomic_write_text(path, text)


def read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
