"""
pivchol - 核矩阵惰性主元Cholesky分解工具包
"""

__version__ = "1.0.0"
__description__ = "核矩阵惰性主元Cholesky分解、子空间最远点采样校验与低秩预条件"

from .errors import (
    PivCholError,
    KernelArgumentError,
    UnsupportedFeatureError,
    DataParseError,
    OracleScaleError,
    InvalidKernelError,
    NumericError,
    OracleDegeneracyError,
    DegenerateFeatureError,
    SolverDivergenceError,
    VerificationFailure,
)

from .config import (
    PivCholConfig,
    get_default_config
)

from .kernels import (
    KernelFamily,
    KernelSpec,
    PointSet,
    EvalCounter,
    eval_pair,
    eval_diag,
    eval_cross,
    explicit_features,
)

from .decomposition import (
    StopReason,
    DecompositionConfig,
    CholeskyFactor,
    DecompositionTrace,
    pivoted_cholesky,
    factor_times_transpose_diag,
    unpermute,
    expected_eval_count,
)

from .oracles import (
    GramMatrix,
    OrthonormalBasis,
    PivotSequence,
    dense_gram,
    subspace_fps,
    pointwise_fps,
    dense_pivoted_cholesky,
    qr_factor_oracle,
    residual_identity_check,
    residual_matrix_metrics,
    projection_coefficient_check,
    compare_sequences,
)

from .preconditioner import (
    LowRankPlusDiagonal,
    SolveReport,
    build_preconditioner,
    cg_solve,
    kernel_matvec,
)

from .data import (
    CsvSource,
    SyntheticKind,
    SyntheticRecipe,
    load_points,
    write_points,
    generate_rhs,
)

__all__ = [
    # 异常
    'PivCholError',
    'KernelArgumentError',
    'UnsupportedFeatureError',
    'DataParseError',
    'OracleScaleError',
    'InvalidKernelError',
    'NumericError',
    'OracleDegeneracyError',
    'DegenerateFeatureError',
    'SolverDivergenceError',
    'VerificationFailure',

    # 配置
    'PivCholConfig',
    'get_default_config',

    # 核函数
    'KernelFamily',
    'KernelSpec',
    'PointSet',
    'EvalCounter',
    'eval_pair',
    'eval_diag',
    'eval_cross',
    'explicit_features',

    # 分解
    'StopReason',
    'DecompositionConfig',
    'CholeskyFactor',
    'DecompositionTrace',
    'pivoted_cholesky',
    'factor_times_transpose_diag',
    'unpermute',
    'expected_eval_count',

    # 参考实现
    'GramMatrix',
    'OrthonormalBasis',
    'PivotSequence',
    'dense_gram',
    'subspace_fps',
    'pointwise_fps',
    'dense_pivoted_cholesky',
    'qr_factor_oracle',
    'residual_identity_check',
    'residual_matrix_metrics',
    'projection_coefficient_check',
    'compare_sequences',

    # 预条件
    'LowRankPlusDiagonal',
    'SolveReport',
    'build_preconditioner',
    'cg_solve',
    'kernel_matvec',

    # 数据
    'CsvSource',
    'SyntheticKind',
    'SyntheticRecipe',
    'load_points',
    'write_points',
    'generate_rhs',
]
