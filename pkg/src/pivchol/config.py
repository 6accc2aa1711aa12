import os
import json
import logging
from dataclasses import dataclass, asdict
from typing import Optional, Dict, Any, List

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = "pivchol_config.json"


@dataclass
class PivCholConfig:
    """低秩分解工具包配置类"""

    # 配置文件路径，如果为None则从环境变量或默认路径加载
    config_file: Optional[str] = None

    # 分解配置
    tolerance: float = 1e-6  # 最大剩余对角元的绝对阈值
    clamp_negative: bool = True  # 残差对角线负值截断为0

    # 参考实现配置
    oracle_cap: int = 2000  # 稠密Gram矩阵的最大点数

    # 求解器配置
    matvec_block_size: int = 256
    cg_tolerance: float = 1e-8
    cg_max_iter: int = 1000
    cg_true_residual_interval: int = 50
    num_threads: int = 1

    # 输出配置
    output_dir: str = "reports"
    log_file: Optional[str] = "pivchol.log"
    log_level: str = "INFO"

    def __post_init__(self):
        """初始化后处理"""
        # 确定配置文件路径（优先级：实例参数 > 环境变量 > 默认值）
        if self.config_file is None:
            self.config_file = os.getenv("PIVCHOL_CONFIG_PATH", DEFAULT_CONFIG_FILE)

        # 加载优先级：环境变量 > 配置文件 > 默认值
        load_dotenv()
        self._load_from_config_file()
        self._load_from_env()

    def _load_from_config_file(self):
        """从配置文件加载配置"""
        config_file = self.config_file or DEFAULT_CONFIG_FILE

        if not os.path.exists(config_file):
            logger.debug(f"配置文件不存在，使用默认值: {config_file}")
            return

        try:
            with open(config_file, 'r', encoding='utf-8') as f:
                config_data = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"配置文件格式错误 {config_file}: {e}")
            return
        except OSError as e:
            logger.error(f"加载配置文件 {config_file} 失败: {e}")
            return

        decomposition = config_data.get("decomposition", {})
        self.tolerance = float(decomposition.get("tolerance", self.tolerance))
        self.clamp_negative = bool(decomposition.get("clamp_negative", self.clamp_negative))

        oracles = config_data.get("oracles", {})
        self.oracle_cap = int(oracles.get("cap", self.oracle_cap))

        solver = config_data.get("solver", {})
        self.matvec_block_size = int(solver.get("block_size", self.matvec_block_size))
        self.cg_tolerance = float(solver.get("tolerance", self.cg_tolerance))
        self.cg_max_iter = int(solver.get("max_iter", self.cg_max_iter))
        self.cg_true_residual_interval = int(
            solver.get("true_residual_interval", self.cg_true_residual_interval))
        self.num_threads = int(solver.get("num_threads", self.num_threads))

        output = config_data.get("output", {})
        self.output_dir = output.get("dir", self.output_dir)
        self.log_file = output.get("log_file", self.log_file)
        self.log_level = output.get("log_level", self.log_level)

        logger.info(f"配置文件加载成功: {config_file}")

    def _load_from_env(self):
        """从环境变量加载配置（覆盖配置文件）"""
        self.tolerance = _env_value("PIVCHOL_TOLERANCE", float, self.tolerance)
        self.oracle_cap = _env_value("PIVCHOL_ORACLE_CAP", int, self.oracle_cap)
        self.matvec_block_size = _env_value("PIVCHOL_BLOCK_SIZE", int, self.matvec_block_size)
        self.num_threads = _env_value("PIVCHOL_NUM_THREADS", int, self.num_threads)

        env_output_dir = os.getenv("PIVCHOL_OUTPUT_DIR")
        if env_output_dir:
            self.output_dir = env_output_dir

        env_log_file = os.getenv("PIVCHOL_LOG_FILE")
        if env_log_file is not None:
            # 空字符串表示只输出到控制台
            self.log_file = env_log_file or None

        env_log_level = os.getenv("PIVCHOL_LOG_LEVEL")
        if env_log_level:
            self.log_level = env_log_level.upper()

    def collect_problems(self) -> Dict[str, List[str]]:
        """收集配置中的错误和警告

        Returns:
            {'errors': [...], 'warnings': [...]}
        """
        errors = []
        warnings = []

        if self.tolerance < 0:
            errors.append(f"分解容差不能为负，当前为{self.tolerance}")
        elif self.tolerance == 0:
            warnings.append("分解容差为0，只有残差恰好为0时才会提前终止")

        if self.oracle_cap < 1:
            errors.append(f"参考实现规模上限必须为正，当前为{self.oracle_cap}")

        if self.matvec_block_size < 1:
            errors.append(f"矩阵向量乘分块大小必须为正，当前为{self.matvec_block_size}")

        if self.cg_tolerance <= 0:
            errors.append(f"CG容差必须大于0，当前为{self.cg_tolerance}")

        if self.cg_max_iter < 1:
            errors.append(f"CG最大迭代次数必须为正，当前为{self.cg_max_iter}")

        if self.cg_true_residual_interval < 1:
            errors.append(f"真实残差重算间隔必须为正，当前为{self.cg_true_residual_interval}")

        if self.num_threads < 1:
            errors.append(f"线程数必须为正，当前为{self.num_threads}")

        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            warnings.append(f"未知日志级别: {self.log_level}，将使用INFO")

        if not os.path.exists(self.output_dir):
            warnings.append(f"输出目录不存在（运行时自动创建）: {self.output_dir}")

        return {'errors': errors, 'warnings': warnings}

    def validate_config(self, verbose: bool = False) -> bool:
        """验证配置有效性

        Args:
            verbose: 是否显示详细信息

        Returns:
            配置是否有效
        """
        problems = self.collect_problems()
        errors = problems['errors']
        warnings = problems['warnings']

        if errors:
            print("❌ 配置验证失败:")
            for error in errors:
                print(f"  - {error}")
            if warnings and verbose:
                print("\n⚠️  配置警告:")
                for warning in warnings:
                    print(f"  - {warning}")
            return False

        if verbose:
            print("✅ 配置验证通过")
            if warnings:
                print("\n⚠️  配置警告（不影响运行）:")
                for warning in warnings:
                    print(f"  - {warning}")
            else:
                print("  无警告")
        return True

    def show_config_summary(self):
        """显示配置摘要"""
        print(f"\n{'='*60}")
        print("pivchol 配置摘要")
        print(f"{'='*60}")

        config_file = self.config_file or DEFAULT_CONFIG_FILE
        state = "存在" if os.path.exists(config_file) else "不存在"
        print(f"📄 配置文件: {config_file} ({state})")

        print("🧮 分解:")
        print(f"  容差: {self.tolerance:g}")
        print(f"  负残差截断: {'启用' if self.clamp_negative else '禁用'}")

        print("🔍 参考实现:")
        print(f"  稠密规模上限: {self.oracle_cap}")

        print("📉 求解器:")
        print(f"  分块大小: {self.matvec_block_size}")
        print(f"  CG容差: {self.cg_tolerance:g}")
        print(f"  CG最大迭代: {self.cg_max_iter}")
        print(f"  真实残差重算间隔: {self.cg_true_residual_interval}")
        print(f"  线程数: {self.num_threads}")

        print("📁 输出:")
        print(f"  报告目录: {self.output_dir}")
        print(f"  日志文件: {self.log_file or '仅控制台'}")
        print(f"  日志级别: {self.log_level}")
        print(f"{'='*60}")

    def to_dict(self) -> Dict[str, Any]:
        """导出为字典（写入运行清单）"""
        return asdict(self)


def _env_value(name: str, cast, current):
    """读取并转换环境变量，格式错误时保留当前值"""
    raw = os.getenv(name)
    if not raw:
        return current
    try:
        return cast(raw)
    except ValueError:
        logger.warning(f"环境变量 {name} 格式错误，已忽略: {raw}")
        return current


def get_default_config() -> PivCholConfig:
    """获取默认配置实例"""
    return PivCholConfig()
