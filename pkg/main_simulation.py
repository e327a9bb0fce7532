#!/usr/bin/env python3
"""
준정적 완전 손상 모델 시뮬레이터 메인 스크립트
하위 명령: run, t0, verify, sweep, convergence, stability
"""

import argparse
import logging
import sys
from pathlib import Path

# 프로젝트 루트를 Python 경로에 추가
sys.path.append(str(Path(__file__).parent))

from src.cli.config_parser import parse_float
from src.cli.dispatcher import CliInvocation, dispatch
from src.errors import ConfigParseError
from config import EXIT_CODES

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='준정적 완전 손상 모델 시뮬레이터')
    parser.add_argument('--verbose', action='store_true', help='DEBUG 로그 출력')
    subparsers = parser.add_subparsers(dest='subcommand', required=True)

    def add_common(sub, needs_config=True):
        sub.add_argument('--config', required=needs_config, help='INI 설정 파일 경로')
        sub.add_argument('--output-dir', default='output', help='산출물 디렉토리 경로')
        sub.add_argument('--set', dest='overrides', action='append', default=[],
                         metavar='KEY=VALUE', help='설정 값 덮어쓰기 (여러 번 사용 가능)')
        sub.add_argument('--progress', action='store_true', help='진행 막대 표시')

    for name, help_text in [('run', '시뮬레이션 실행'), ('sweep', '매개변수 스윕'),
                            ('convergence', '격자/시간 간격 수렴 연구'),
                            ('stability', '연속 의존성 실험')]:
        add_common(subparsers.add_parser(name, help=help_text))

    t0 = subparsers.add_parser('t0', help='장벽 함수 표와 국소 존재 시간 T0')
    add_common(t0, needs_config=False)
    t0.add_argument('--delta', type=parse_float, help='δ ∈ (0, 1/12] (예: 1/12)')
    t0.add_argument('--eps', type=parse_float, help='ε = c_Ω‖1 - z0‖_W ≤ 1/2')
    t0.add_argument('--c3', type=parse_float, default=1.0, help='포락선 상수 c3')
    t0.add_argument('--horizon', type=parse_float, default=float('inf'), help='최종 시간 T')

    verify = subparsers.add_parser('verify', help='저장된 궤적의 불변 조건 검사')
    verify.add_argument('trajectory_dir', help='run 하위 명령의 출력 디렉토리')
    return parser


def main(argv=None) -> int:
    """메인 실행 함수"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        if args.subcommand == 'verify':
            invocation = CliInvocation('verify', output_dir=args.trajectory_dir)
        else:
            extra = {}
            if args.subcommand == 't0':
                extra = {'delta': args.delta, 'eps': args.eps, 'c3': args.c3, 'horizon': args.horizon}
            invocation = CliInvocation(args.subcommand, args.config, args.output_dir,
                                       args.overrides, progress=args.progress, **extra)
    except ConfigParseError as e:
        logger.error(f"명령 해석 중 오류 발생: {e}")
        return EXIT_CODES['parse']
    return dispatch(invocation)


if __name__ == "__main__":
    sys.exit(main())
