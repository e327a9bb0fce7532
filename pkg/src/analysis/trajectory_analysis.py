"""
저장된 궤적 디렉터리의 불변 조건 검사와 리포트 작성 (verify 하위 명령)
"""

import logging
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

from src.data_processing.field_io import load_trajectory
from src.errors import InvariantViolation
from src.models.damage_model import LEDGER_COLUMNS

logger = logging.getLogger(__name__)

SLACK = 1e-12
ENERGY_SLACK = 1e-10
REPORT_FILE = 'verify_report.md'


class TrajectoryAnalyzer:
    """궤적 불변 조건 분석 클래스"""

    def __init__(self, data_dir: str):
        """
        Args:
            data_dir (str): run 하위 명령의 출력 디렉터리
        """
        self.data_dir = Path(data_dir)
        self.ledger = None
        self.events = {}
        self.snapshots = []

    def load_data(self):
        """장부, 이벤트, 스냅샷 로드"""
        try:
            self.ledger, self.events, self.snapshots = load_trajectory(self.data_dir)
            logger.info("궤적 로드 완료")
            logger.info(f"장부: {len(self.ledger)}행, 스냅샷: {len(self.snapshots)}개")
        except (FileNotFoundError, pd.errors.ParserError) as e:
            logger.error(f"궤적 파일을 읽을 수 없습니다: {e}")
            raise InvariantViolation(f"궤적 파일을 읽을 수 없습니다: {e}")

    def basic_statistics(self) -> Dict[str, object]:
        """기본 통계"""
        ledger = self.ledger
        return {
            '스텝_수': len(ledger) - 1,
            '최종_시각': float(ledger['t'].iloc[-1]),
            '초기_에너지': float(ledger['energy'].iloc[0]),
            '최종_에너지': float(ledger['energy'].iloc[-1]),
            '누적_소산': float(ledger['dissipation_cum'].iloc[-1]),
            '최대_균형_잔차': float(ledger['balance_residual'].max()),
            '최소_z': float(ledger['z_min'].min()),
            '최대_sqrt_y': float(ledger['sqrt_y'].max()),
            '퇴화_시각': self.events.get('t_deg'),
        }

    @property
    def irreversible(self) -> bool:
        """projected 궤적만 z ≤ z_prev, z ≤ 1을 정확히 지킨다 (yosida는 O(λ) 증가 허용)"""
        return self.events.get('backend', 'projected') == 'projected'

    def _check_ledger(self) -> List[str]:
        ledger = self.ledger
        problems = []
        if list(ledger.columns[:len(LEDGER_COLUMNS)]) != LEDGER_COLUMNS:
            return [f"장부 열 순서가 다릅니다: {list(ledger.columns)}"]
        balance = ledger['balance_residual'].to_numpy()
        if not np.all(np.isfinite(balance)):
            problems.append("균형 잔차에 유한하지 않은 값이 있습니다")
        energy = ledger['energy'].to_numpy()
        picard_iters = self.events.get('picard_iters')
        if picard_iters is not None and picard_iters >= 2:
            scale = ENERGY_SLACK * max(1.0, float(np.max(np.abs(energy))))
            if np.any(np.diff(energy) > scale):
                problems.append(f"에너지가 증가하는 스텝이 있습니다: 최대 {np.diff(energy).max():.3e}")
        if self.irreversible:
            if np.any(np.diff(ledger['z_min']) > SLACK):
                problems.append("z_min이 증가하는 스텝이 있습니다")
            if np.any(ledger['z_min'] > 1.0 + SLACK):
                problems.append(f"z_min > 1: 최대 {ledger['z_min'].max():.6g}")
        dissipation = ledger['dissipation_cum'].to_numpy()
        if np.any(dissipation < 0):
            problems.append(f"음의 누적 소산: 최소 {dissipation.min():.3e}")
        if np.any(np.diff(dissipation) < -SLACK):
            problems.append("누적 소산이 감소하는 스텝이 있습니다")
        if np.any(ledger['y'] < 0):
            problems.append("인증서 y가 음수인 스텝이 있습니다")
        if not np.allclose(ledger['sqrt_y'], np.sqrt(np.abs(ledger['y'])), rtol=1e-12, atol=0.0):
            problems.append("sqrt_y 열이 sqrt(y)와 다릅니다")
        if np.any(ledger['balance_residual'] < 0) or np.any(ledger['comp_residual'] < 0):
            problems.append("음의 잔차가 기록되어 있습니다")
        if np.any(np.diff(ledger['t']) <= 0):
            problems.append("시각이 증가하지 않습니다")
        return problems

    def _check_events(self) -> List[str]:
        ledger = self.ledger
        problems = []
        delta = self.events.get('delta')
        if delta is None:
            return problems
        threshold = 3.0 * float(delta)
        active = ledger['truncation_active'].astype(str).str.lower() == 'true'
        if np.any(active != (ledger['z_min'] < threshold)):
            problems.append("truncation_active가 z_min < 3δ와 일치하지 않습니다")
        crossed = ledger.loc[ledger['z_min'] < threshold, 't']
        expected = float(crossed.iloc[0]) if len(crossed) else None
        recorded = self.events.get('t_deg')
        if (expected is None) != (recorded is None) or (
                expected is not None and not np.isclose(expected, recorded, rtol=1e-12, atol=0.0)):
            problems.append(f"t_deg 이벤트 {recorded}가 장부의 첫 퇴화 시각 {expected}와 다릅니다")
        certified = ledger['sqrt_y'] <= 1.0 - threshold
        if np.any(ledger.loc[certified, 'z_min'] < threshold):
            problems.append("sqrt(y) ≤ 1-3δ 인데 z < 3δ인 시각이 있습니다")
        return problems

    def _check_snapshots(self) -> List[str]:
        problems = []
        irreversible = self.irreversible
        previous = None
        for t, fields in self.snapshots:
            z, xi = fields['z'].values, fields['xi'].values
            if irreversible and np.any(z > 1.0 + SLACK):
                problems.append(f"t = {t:.6g}에서 z > 1")
            if np.any(xi < -SLACK):
                problems.append(f"t = {t:.6g}에서 ξ < 0")
            if irreversible and previous is not None and np.any(z > previous + SLACK):
                problems.append(f"t = {t:.6g}에서 비가역성 위반 (z 증가)")
            previous = z
        return problems

    def check_invariants(self) -> List[str]:
        """위반 목록 (비어 있으면 통과)"""
        if self.ledger is None:
            self.load_data()
        return self._check_ledger() + self._check_events() + self._check_snapshots()

    def generate_report(self, output_dir: str = None) -> Path:
        """검사 리포트 생성"""
        output_path = Path(output_dir) if output_dir else self.data_dir
        output_path.mkdir(parents=True, exist_ok=True)
        violations = self.check_invariants()
        stats = self.basic_statistics() if self.ledger is not None and len(self.ledger) else {}
        stats_lines = '\n'.join(f"- {key}: {value}" for key, value in stats.items())
        violation_lines = '\n'.join(f"- {v}" for v in violations) or '- 없음'
        report = f"""# 손상 궤적 검사 리포트

## 1. 기본 현황
{stats_lines}

## 2. 이벤트
{chr(10).join(f"- {k} = {v}" for k, v in self.events.items())}

## 3. 불변 조건 위반
{violation_lines}

## 4. 판정
{'통과' if not violations else '실패'}
"""
        path = output_path / REPORT_FILE
        path.write_text(report, encoding='utf-8')
        logger.info(f"검사 리포트 저장 완료: {path}")
        return path


def verify(data_dir: str) -> List[str]:
    """검사 후 리포트를 쓰고 위반이 있으면 InvariantViolation"""
    analyzer = TrajectoryAnalyzer(data_dir)
    analyzer.load_data()
    analyzer.generate_report()
    violations = analyzer.check_invariants()
    if violations:
        raise InvariantViolation(f"불변 조건 위반 {len(violations)}건: {violations[0]}")
    return violations
