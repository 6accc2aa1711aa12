"""
命令行入口
子命令: decompose / verify / solve / compare-sampling / show-config
"""

import argparse
import logging
import os
import time
from typing import Optional, List, Dict, Any

import numpy as np

from . import __version__
from .config import PivCholConfig
from .data import CsvSource, parse_synthetic, load_points, read_points_csv, generate_rhs, diameter, \
    min_pairwise_distance
from .decomposition import DecompositionConfig, pivoted_cholesky, summarize
from .errors import (
    EXIT_OK,
    EXIT_ARGUMENT_ERROR,
    EXIT_NUMERIC_ERROR,
    EXIT_INTERRUPTED,
    KernelArgumentError,
    PivCholError,
    SolverDivergenceError,
    VerificationFailure,
)
from .kernels import KernelFamily, KernelSpec, PointSet, EvalCounter
from .oracles import dense_gram, pointwise_fps, compare_sequences
from .preconditioner import build_preconditioner, cg_solve, make_kernel_operator
from .serialization import save_factor, write_trace, write_report, write_residual_curve
from .verification import run_battery, verify_factor_file, add_checks

logger = logging.getLogger(__name__)


def setup_logging(config: PivCholConfig):
    """配置日志"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if config.log_file:
        handlers.insert(0, logging.FileHandler(config.log_file, encoding='utf-8'))
    level = getattr(logging, config.log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


def _default_path(config: PivCholConfig, value: Optional[str], name: str) -> str:
    return value if value else os.path.join(config.output_dir, name)


def _add_data_arguments(parser: argparse.ArgumentParser, required: bool = True):
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument('--points', type=str, help='点集CSV文件（每行一个点）')
    group.add_argument('--synthetic', type=str,
                       help='合成数据，例如 "uniform:n=200,dim=2,seed=7"、"clusters:n=100,dim=3,clusters=4"、"grid:n=64,dim=2"')


def _add_kernel_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--kernel', type=str, default='rbf',
                        choices=[f.value for f in KernelFamily], help='核函数族')
    parser.add_argument('--lengthscale', type=float, default=1.0, help='长度尺度 ℓ')
    parser.add_argument('--lengthscale-factor', type=float, help='按数据统计量设置 ℓ = factor × 统计量')
    parser.add_argument('--lengthscale-rule', type=str, default='diameter',
                        choices=['diameter', 'min-distance'], help='--lengthscale-factor 使用的统计量')
    parser.add_argument('--variance', type=float, default=1.0, help='核方差')
    parser.add_argument('--degree', type=int, default=2, help='多项式核次数')
    parser.add_argument('--offset', type=float, default=0.0, help='多项式核偏移 c')


def _load_dataset(args):
    """返回 (点集, 数据源回显)"""
    if args.points:
        source = CsvSource(path=args.points)
    else:
        source = parse_synthetic(args.synthetic)
    X = load_points(source)
    print(f"📊 点集: N={X.n}, D={X.dim}")
    return X, source.to_dict()


def _kernel_spec(args, X: PointSet) -> KernelSpec:
    lengthscale = args.lengthscale
    if args.lengthscale_factor is not None:
        statistic = diameter(X) if args.lengthscale_rule == 'diameter' else min_pairwise_distance(X)
        if not (np.isfinite(statistic) and statistic > 0):
            raise KernelArgumentError(f"无法按 {args.lengthscale_rule} 设置长度尺度（统计量为{statistic}）")
        lengthscale = args.lengthscale_factor * statistic
        logger.info(f"长度尺度 ℓ = {args.lengthscale_factor:g} × {args.lengthscale_rule} = {lengthscale:.6g}")
    return KernelSpec(family=args.kernel, lengthscale=lengthscale, variance=args.variance,
                      degree=args.degree, offset=args.offset)


def _eval_counts(counter: EvalCounter) -> Dict[str, int]:
    snapshot = counter.snapshot()
    return {'diag': snapshot['diag_evals'], 'pair': snapshot['pair_evals'], 'total': snapshot['total_evals']}


def cmd_decompose(args, config: PivCholConfig) -> int:
    """主元Cholesky分解，输出因子、残差曲线和运行清单"""
    timing = {}
    start = time.perf_counter()
    X, dataset = _load_dataset(args)
    spec = _kernel_spec(args, X)
    timing['load'] = time.perf_counter() - start

    tolerance = config.tolerance if args.tol is None else args.tol
    decomposition = DecompositionConfig(max_rank=args.rank, tolerance=tolerance,
                                        clamp_negative=config.clamp_negative)
    counter = EvalCounter()
    start = time.perf_counter()
    factor, trace = pivoted_cholesky(spec, X, decomposition, counter=counter)
    timing['decompose'] = time.perf_counter() - start

    start = time.perf_counter()
    factor_path = _default_path(config, args.out_factor, 'factor.json')
    trace_path = _default_path(config, args.out_trace, 'trace.csv')
    manifest_path = _default_path(config, args.manifest, 'manifest.json')
    _, matrix_path = save_factor(factor, spec, decomposition, dataset, factor_path)
    write_trace(trace, trace_path)
    timing['write'] = time.perf_counter() - start

    manifest = {
        'tool_version': __version__,
        'command': 'decompose',
        'inputs': {
            'dataset': dataset,
            'kernel': spec.to_dict(),
            'decomposition': {
                'max_rank': decomposition.max_rank,
                'tolerance': decomposition.tolerance,
                'clamp_negative': decomposition.clamp_negative,
            },
        },
        'result': summarize(factor, trace),
        'kernel_evals': _eval_counts(counter),
        'outputs': {'factor': factor_path, 'matrix': matrix_path, 'trace': trace_path},
    }
    write_report(manifest, manifest_path, timing=timing)

    print(f"✅ 分解完成: rank={factor.rank}, 终止原因={factor.stop_reason.value}, "
          f"残差迹={factor.residual_trace:.6e}")
    print(f"📁 因子: {factor_path}")
    print(f"📁 曲线: {trace_path}")
    print(f"📁 清单: {manifest_path}")
    return EXIT_OK


def cmd_verify(args, config: PivCholConfig) -> int:
    """参考实现校验套件"""
    start = time.perf_counter()
    report = run_battery(args.instances, args.max_n, args.max_rank, args.seed,
                         cap=config.oracle_cap, tool_version=__version__)

    if args.factor:
        X = None
        if args.points or args.synthetic:
            X, _ = _load_dataset(args)
        report['factor_file'] = args.factor
        report = add_checks(report, verify_factor_file(args.factor, X=X, cap=config.oracle_cap))

    report_path = _default_path(config, args.report, 'verification.json')
    write_report(report, report_path, timing={'total': time.perf_counter() - start})

    summary = report['summary']
    if report['passed']:
        print(f"✅ 校验通过: {summary['total']} 项检查")
        print(f"📁 报告: {report_path}")
        return EXIT_OK

    failure = report['first_failure']
    print(f"❌ 校验未通过: {summary['failed']}/{summary['total']} 项失败")
    print(f"   首个失败: {failure['name']} (实例种子={failure['instance_seed']}, 偏差={failure['deviation']})")
    print(f"📁 报告: {report_path}")
    raise VerificationFailure(failure['name'], failure['instance_seed'], failure['deviation'])


def _load_rhs(args, n: int) -> np.ndarray:
    if args.rhs_file:
        values = read_points_csv(args.rhs_file).points
        if values.shape[1] != 1 or values.shape[0] != n:
            raise KernelArgumentError(f"右端项文件应为{n}行1列，实际为{values.shape}")
        return values[:, 0].copy()
    return generate_rhs(n, args.rhs_seed)


def cmd_solve(args, config: PivCholConfig) -> int:
    """求解 (K + σ²I)x = b，可选低秩预条件"""
    if not args.noise > 0:
        raise KernelArgumentError(f"--noise 必须为正，当前为{args.noise}")
    if args.precond_rank < 0:
        raise KernelArgumentError(f"--precond-rank 不能为负，当前为{args.precond_rank}")

    timing = {}
    start = time.perf_counter()
    X, dataset = _load_dataset(args)
    spec = _kernel_spec(args, X)
    b = _load_rhs(args, X.n)
    timing['load'] = time.perf_counter() - start

    tol = config.cg_tolerance if args.tol is None else args.tol
    max_iter = config.cg_max_iter if args.max_iter is None else args.max_iter
    counter = EvalCounter()
    operator = make_kernel_operator(spec, X, args.noise, block_size=config.matvec_block_size,
                                    num_threads=config.num_threads, counter=counter)
    report_path = _default_path(config, args.report, 'solve.json')

    def _run(precond, label):
        try:
            return cg_solve(operator, b, precond=precond, tol=tol, max_iter=max_iter,
                            true_residual_interval=config.cg_true_residual_interval)
        except SolverDivergenceError as e:
            curve_path = f"{report_path}.divergence.csv"
            write_residual_curve(e.residual_norms, curve_path)
            print(f"❌ {label}CG发散: {e}")
            print(f"📁 残差轨迹: {curve_path}")
            raise

    results: Dict[str, Any] = {}
    iterations: Dict[str, Optional[int]] = {'preconditioned': None, 'unpreconditioned': None}
    factor_info = None

    if args.precond_rank > 0:
        start = time.perf_counter()
        decomposition = DecompositionConfig(max_rank=args.precond_rank, tolerance=args.precond_tol,
                                            clamp_negative=config.clamp_negative)
        factor, _ = pivoted_cholesky(spec, X, decomposition, counter=counter)
        precond = build_preconditioner(factor, args.noise)
        timing['precondition'] = time.perf_counter() - start
        factor_info = {'rank': factor.rank, 'stop_reason': factor.stop_reason.value,
                       'residual_trace': factor.residual_trace}

        start = time.perf_counter()
        _, report = _run(precond, "预条件")
        timing['solve_preconditioned'] = time.perf_counter() - start
        results['preconditioned'] = report.to_dict()
        iterations['preconditioned'] = report.iterations
        print(f"{'✅' if report.converged else '⚠️'} 预条件CG: {report.iterations}次迭代")

    if args.precond_rank == 0 or args.compare:
        start = time.perf_counter()
        _, report = _run(None, "")
        timing['solve_unpreconditioned'] = time.perf_counter() - start
        results['unpreconditioned'] = report.to_dict()
        iterations['unpreconditioned'] = report.iterations
        print(f"{'✅' if report.converged else '⚠️'} 无预条件CG: {report.iterations}次迭代")

    output = {
        'tool_version': __version__,
        'command': 'solve',
        'inputs': {
            'dataset': dataset,
            'kernel': spec.to_dict(),
            'noise': args.noise,
            'precond_rank': args.precond_rank,
            'precond_tolerance': args.precond_tol,
            'tol': tol,
            'max_iter': max_iter,
            'rhs': {'file': args.rhs_file} if args.rhs_file else {'seed': args.rhs_seed},
        },
        'preconditioner': factor_info,
        'iterations': iterations,
        'kernel_evals': _eval_counts(counter),
        **results,
    }
    write_report(output, report_path, timing=timing)
    print(f"📁 报告: {report_path}")
    return EXIT_OK


def cmd_compare_sampling(args, config: PivCholConfig) -> int:
    """比较子空间FPS（即分解的主元序列）与逐点FPS"""
    X, dataset = _load_dataset(args)
    spec = _kernel_spec(args, X)
    gram = dense_gram(spec, X, cap=config.oracle_cap)

    tolerance = config.tolerance if args.tol is None else args.tol
    factor, trace = pivoted_cholesky(spec, X, DecompositionConfig(
        max_rank=args.rank, tolerance=tolerance, clamp_negative=config.clamp_negative))
    subspace = [int(p) for p in factor.pivots]

    seed_index = args.seed_index
    if seed_index is None:
        seed_index = subspace[0] if subspace else 0
    pointwise = pointwise_fps(gram, min(args.rank, X.n), seed_index)
    comparison = compare_sequences(subspace, pointwise.indices)

    steps = []
    for k in range(max(len(subspace), len(pointwise))):
        steps.append({
            'step': k + 1,
            'subspace_index': subspace[k] if k < len(subspace) else None,
            'subspace_distance': trace.pivot_values[k] if k < len(subspace) else None,
            'pointwise_index': pointwise.indices[k] if k < len(pointwise) else None,
            'pointwise_distance': pointwise.distances[k] if k < len(pointwise) else None,
        })
    zero_distance = [i for i, d in zip(pointwise.indices[1:], pointwise.distances[1:]) if d == 0.0]

    report = {
        'tool_version': __version__,
        'command': 'compare-sampling',
        'inputs': {
            'dataset': dataset,
            'kernel': spec.to_dict(),
            'rank': args.rank,
            'tolerance': tolerance,
            'seed_index': seed_index,
        },
        'subspace': {'pivots': subspace, 'distances': trace.pivot_values},
        'pointwise': {'pivots': pointwise.indices, 'distances': pointwise.distances},
        'steps': steps,
        'common_prefix': comparison.common_prefix,
        'overlap_fraction': comparison.overlap_fraction,
        'divergence_step': comparison.divergence_step,
        'zero_distance_indices': zero_distance,
    }
    report_path = _default_path(config, args.report, 'sampling.json')
    write_report(report, report_path)

    logger.info(f"采样比较: 公共前缀={comparison.common_prefix}, 重叠={comparison.overlap_fraction:.3f}, "
                f"分歧步={comparison.divergence_step}")
    if comparison.identical:
        print(f"✅ 两种采样序列一致 (长度{len(subspace)})")
    else:
        print(f"⚠️ 序列在第{comparison.divergence_step}步分歧，公共前缀={comparison.common_prefix}，"
              f"重叠比例={comparison.overlap_fraction:.3f}")
    if zero_distance:
        print(f"⚠️ 逐点距离为0的点: {zero_distance}")
    print(f"📁 报告: {report_path}")
    return EXIT_OK


def cmd_show_config(args, config: PivCholConfig) -> int:
    """显示配置摘要并验证"""
    config.show_config_summary()
    return EXIT_OK if config.validate_config(verbose=True) else EXIT_ARGUMENT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pivchol',
        description='pivchol - 核矩阵惰性主元Cholesky分解工具',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''
使用示例:
  python main.py decompose --synthetic "uniform:n=200,dim=2,seed=7" --kernel rbf --lengthscale 0.5 --rank 40
  python main.py verify --instances 200 --max-n 50 --max-rank 15 --seed 0
  python main.py solve --synthetic "uniform:n=500,dim=2,seed=1" --lengthscale-factor 0.1 --noise 1e-2 --precond-rank 50 --compare
  python main.py compare-sampling --points points.csv --kernel linear --rank 3
  python main.py show-config
        '''
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--config', type=str, help='配置文件路径（默认读取 PIVCHOL_CONFIG_PATH 或 pivchol_config.json）')
    sub = parser.add_subparsers(dest='command')

    decompose = sub.add_parser('decompose', help='主元Cholesky分解')
    _add_data_arguments(decompose)
    _add_kernel_arguments(decompose)
    decompose.add_argument('--rank', type=int, required=True, help='最大秩 M')
    decompose.add_argument('--tol', type=float, help='最大剩余对角元的绝对容差')
    decompose.add_argument('--out-factor', type=str, help='因子表头JSON路径')
    decompose.add_argument('--out-trace', type=str, help='残差曲线CSV路径')
    decompose.add_argument('--manifest', type=str, help='运行清单JSON路径')

    verify = sub.add_parser('verify', help='参考实现校验套件')
    _add_data_arguments(verify, required=False)
    verify.add_argument('--instances', type=int, default=20, help='随机实例数')
    verify.add_argument('--max-n', type=int, default=30, help='最大点数')
    verify.add_argument('--max-rank', type=int, default=10, help='最大秩')
    verify.add_argument('--seed', type=int, default=0, help='基准种子')
    verify.add_argument('--factor', type=str, help='额外校验一个已保存的因子文件')
    verify.add_argument('--report', type=str, help='校验报告JSON路径')

    solve = sub.add_parser('solve', help='共轭梯度求解 (K + σ²I)x = b')
    _add_data_arguments(solve)
    _add_kernel_arguments(solve)
    solve.add_argument('--noise', type=float, required=True, help='σ²')
    solve.add_argument('--precond-rank', type=int, default=0, help='预条件器秩（0表示不使用）')
    solve.add_argument('--precond-tol', type=float, default=0.0, help='预条件器分解容差')
    solve.add_argument('--tol', type=float, help='CG相对容差')
    solve.add_argument('--max-iter', type=int, help='CG最大迭代次数')
    rhs = solve.add_mutually_exclusive_group()
    rhs.add_argument('--rhs-seed', type=int, default=0, help='随机右端项种子')
    rhs.add_argument('--rhs-file', type=str, help='右端项CSV（单列）')
    solve.add_argument('--compare', action='store_true', help='同时运行无预条件CG')
    solve.add_argument('--report', type=str, help='求解报告JSON路径')

    compare = sub.add_parser('compare-sampling', help='比较子空间FPS与逐点FPS')
    _add_data_arguments(compare)
    _add_kernel_arguments(compare)
    compare.add_argument('--rank', type=int, required=True, help='最大选点数')
    compare.add_argument('--tol', type=float, help='分解容差')
    compare.add_argument('--seed-index', type=int, help='逐点FPS种子下标（默认取子空间序列第一个主元）')
    compare.add_argument('--report', type=str, help='比较报告JSON路径')

    sub.add_parser('show-config', help='显示配置摘要')
    return parser


COMMANDS = {
    'decompose': cmd_decompose,
    'verify': cmd_verify,
    'solve': cmd_solve,
    'compare-sampling': cmd_compare_sampling,
    'show-config': cmd_show_config,
}


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if not args.command:
        parser.print_help()
        return EXIT_OK

    config = PivCholConfig(config_file=args.config)
    setup_logging(config)

    try:
        return COMMANDS[args.command](args, config)
    except PivCholError as e:
        print(f"❌ {type(e).__name__}: {e}")
        logger.error(f"{args.command} 失败: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        print("\n\n操作已取消")
        return EXIT_INTERRUPTED
    except Exception as e:
        print(f"❌ 系统错误: {e}")
        logging.exception("系统错误:")
        return EXIT_NUMERIC_ERROR
