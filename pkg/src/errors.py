"""
시뮬레이션 전반에서 사용하는 예외 클래스
"""


class DamageSimError(Exception):
    """손상 시뮬레이터 예외의 기본 클래스"""


class GridMismatchError(DamageSimError, ValueError):
    """격자가 다르거나 격자/필드 값이 잘못된 경우"""


class AssumptionViolation(DamageSimError, ValueError):
    """가정 (A1)-(A3) 또는 δ 범위 조건 위반"""


class ConfigParseError(DamageSimError, ValueError):
    """설정 파일 또는 오버라이드 파싱 실패"""


class SolverConvergenceError(DamageSimError, RuntimeError):
    """반복 솔버가 제한 횟수 안에 수렴하지 못한 경우"""


class NewtonStagnationError(SolverConvergenceError):
    """준매끄러운 뉴턴 반복의 정체"""


class SimulationAborted(DamageSimError, RuntimeError):
    """시간 간격을 최소값까지 줄여도 스텝이 실패한 경우"""


class ResourceCapExceeded(DamageSimError, RuntimeError):
    """수렴 연구의 계산량이 상한을 넘는 경우"""


class InvariantViolation(DamageSimError):
    """저장된 궤적이 불변 조건을 위반한 경우"""
