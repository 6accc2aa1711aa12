#!/usr/bin/env python3
"""
pivchol - 核矩阵惰性主元Cholesky分解工具 - 主程序入口
"""

import os
import sys

# 添加src目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from pivchol.cli import main

if __name__ == "__main__":
    sys.exit(main())
