"""
하위 명령 실행과 종료 코드 규약
0 성공, 1 실행 실패, 2 파싱 오류, 3 가정 위반, 4 불변 조건 위반
"""

import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
from config import EXIT_CODES
from src.analysis.experiments import (apriori_report, certificate_monitor,
                                      continuous_dependence_experiment, convergence_study,
                                      stability_summary, sweep)
from src.analysis.trajectory_analysis import verify
from src.cli.config_parser import parse_config, write_config
from src.data_processing.field_io import save_table, save_trajectory, write_events, write_manifest
from src.errors import (AssumptionViolation, ConfigParseError, DamageSimError,
                        InvariantViolation)
from src.models.damage_model import DamageSimulator
from src.numerics.potentials import TruncationParams, barrier_table, t0_formula

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('run', 't0', 'verify', 'sweep', 'convergence', 'stability')


@dataclass
class CliInvocation:
    """하위 명령 호출

    Args:
        subcommand (str): run, t0, verify, sweep, convergence, stability
        config_path (str): INI 설정 파일 (t0, verify에서는 생략 가능)
        output_dir (str): 산출물 디렉터리 (verify에서는 검사할 궤적 디렉터리)
        overrides (list): 'key=value' 목록
    """

    subcommand: str
    config_path: Optional[str] = None
    output_dir: str = 'output'
    overrides: List[str] = field(default_factory=list)
    delta: Optional[float] = None
    eps: Optional[float] = None
    c3: float = 1.0
    horizon: float = math.inf
    progress: bool = False

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigParseError(f"알 수 없는 하위 명령: {self.subcommand}")
        if self.subcommand not in ('t0', 'verify') and not self.config_path:
            raise ConfigParseError(f"{self.subcommand} 하위 명령에는 설정 파일이 필요합니다")


def _load(inv: CliInvocation):
    return parse_config(inv.config_path, inv.overrides)


def _finish(output_dir: Path, artifacts: List[Path]) -> int:
    write_manifest(output_dir, artifacts)
    return EXIT_CODES['success']


def _run(inv: CliInvocation) -> int:
    cfg = _load(inv)
    output_dir = Path(inv.output_dir)
    trajectory = DamageSimulator(cfg).run(progress=inv.progress)
    report = certificate_monitor(trajectory, cfg)
    trajectory.events['c3_fitted'] = report.c3_fitted
    artifacts = save_trajectory(trajectory, output_dir)
    artifacts.append(write_config(cfg, output_dir / 'config.ini'))
    constants = apriori_report(trajectory, cfg)
    artifacts.append(write_events(output_dir / 'apriori.txt', constants))
    return _finish(output_dir, artifacts)


def _t0(inv: CliInvocation) -> int:
    if inv.config_path:
        cfg = _load(inv)
        simulator = DamageSimulator(cfg)
        p = cfg.truncation
        eps = inv.eps if inv.eps is not None else math.sqrt(
            simulator.certificate_value(simulator.initial_state()[0]))
    else:
        p = TruncationParams(inv.delta if inv.delta is not None else 1.0 / 12.0)
        eps = inv.eps if inv.eps is not None else 0.0
    t0 = t0_formula(eps, p, inv.c3, inv.horizon)
    output_dir = Path(inv.output_dir)
    artifacts = [
        save_table(barrier_table(p), output_dir / 'b_table.csv'),
        write_events(output_dir / 't0.txt', {'delta': p.delta, 'eps': eps, 'c3': inv.c3, 't0': t0}),
    ]
    print(f"T0 = {t0!r}")
    return _finish(output_dir, artifacts)


def _verify(inv: CliInvocation) -> int:
    verify(inv.output_dir)
    logger.info(f"불변 조건 검사 통과: {inv.output_dir}")
    return EXIT_CODES['success']


def _sweep(inv: CliInvocation) -> int:
    cfg = _load(inv)
    output_dir = Path(inv.output_dir)
    table = sweep(cfg, progress=inv.progress)
    return _finish(output_dir, [save_table(table, output_dir / 'sweep_summary.csv')])


def _convergence(inv: CliInvocation) -> int:
    cfg = _load(inv)
    output_dir = Path(inv.output_dir)
    result = convergence_study(cfg)
    artifacts = [
        save_table(result.table, output_dir / 'convergence.csv'),
        write_events(output_dir / 'convergence.txt',
                     {'monotone': result.monotone, 'fitted_order': result.fitted_order}),
    ]
    write_manifest(output_dir, artifacts)
    if not result.monotone:
        raise InvariantViolation("수렴 연구의 연속 차이가 단조 감소하지 않습니다")
    return EXIT_CODES['success']


def _stability(inv: CliInvocation) -> int:
    cfg = _load(inv)
    output_dir = Path(inv.output_dir)
    table = continuous_dependence_experiment(cfg, cfg.perturbation_sizes)
    summary = stability_summary(table).reset_index().rename(columns={'ratio': 'max_ratio'})
    return _finish(output_dir, [
        save_table(table, output_dir / 'stability.csv'),
        save_table(summary, output_dir / 'stability_summary.csv'),
    ])


HANDLERS = {
    'run': _run,
    't0': _t0,
    'verify': _verify,
    'sweep': _sweep,
    'convergence': _convergence,
    'stability': _stability,
}


def dispatch(inv: CliInvocation) -> int:
    """하위 명령 실행 후 종료 코드 반환 (예외는 종료 코드로 변환)"""
    try:
        return HANDLERS[inv.subcommand](inv)
    except ConfigParseError as e:
        logger.error(f"설정 파싱 중 오류 발생: {e}")
        return EXIT_CODES['parse']
    except AssumptionViolation as e:
        logger.error(f"가정 위반: {e}")
        return EXIT_CODES['assumption']
    except InvariantViolation as e:
        logger.error(f"불변 조건 위반: {e}")
        return EXIT_CODES['invariant']
    except (DamageSimError, OSError, ValueError) as e:
        logger.error(f"{inv.subcommand} 실행 중 오류 발생: {e}")
        return EXIT_CODES['runtime']
