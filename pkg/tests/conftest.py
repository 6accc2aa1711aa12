"""
测试公共夹具
"""

import os

import numpy as np
import pytest

from pivchol.kernels import KernelFamily, KernelSpec, PointSet


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    """每个测试在临时目录中运行，不读取真实配置，不写日志文件"""
    for name in list(os.environ):
        if name.startswith("PIVCHOL_"):
            monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("PIVCHOL_LOG_FILE", "")
    monkeypatch.setenv("PIVCHOL_CONFIG_PATH", str(tmp_path / "pivchol_config.json"))
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def rbf():
    return KernelSpec(family=KernelFamily.RBF, lengthscale=0.5)


@pytest.fixture
def linear():
    return KernelSpec(family=KernelFamily.LINEAR)


@pytest.fixture
def random_points(rng):
    return PointSet(rng.random((30, 2)))


@pytest.fixture
def write_csv(tmp_path):
    """写一个CSV文件并返回路径"""
    def _write(text, name="points.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write
