"""
절단 함수 T_δ, 배치 퍼텐셜 ψ, 역수 φ_δ, 장벽 함수 B_δ, 국소 존재 시간 T₀
모든 함수는 스칼라와 numpy 배열을 모두 받는다
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import brentq

from src.errors import AssumptionViolation

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

DELTA_MAX = 1.0 / 12.0
QUAD_TOLERANCE = 1e-13
INVERSE_MAX_ITER = 200
TRUNCATION_KINDS = ('c11', 'identity')
POTENTIAL_FAMILIES = ('quadratic', 'cubic_core')


@dataclass(frozen=True)
class TruncationParams:
    """절단 매개변수

    Args:
        delta (float): δ ∈ (0, 1/12]
        kind (str): 'c11' (C^{1,1} 접합) 또는 'identity' (2δ 하한만 둔 항등 함수)
    """

    delta: float = DELTA_MAX
    kind: str = 'c11'

    def __post_init__(self):
        delta = float(self.delta)
        if not 0.0 < delta <= DELTA_MAX:
            raise AssumptionViolation(f"δ ∈ (0,1/12] 조건 위반: delta = {delta:g}")
        if self.kind not in TRUNCATION_KINDS:
            raise AssumptionViolation(f"알 수 없는 절단 종류: {self.kind}")
        object.__setattr__(self, 'delta', delta)


@dataclass(frozen=True)
class PotentialSpec:
    """배치 퍼텐셜 ψ

    quadratic: ψ(r) = r² - w·r
    cubic_core: |r| ≤ 2에서 r² - w·r + a3·r³, 바깥은 r = ±2에서의 2차 테일러 전개 (C² 접합)

    Args:
        threshold (float): 손상 임계값 w ≥ 0
        family (str): 'quadratic' 또는 'cubic_core'
        cubic (float): cubic_core의 3차 계수 a3, |a3| < 1/12 (확장부 강압성)
    """

    threshold: float = 0.0
    family: str = 'quadratic'
    cubic: float = 0.0

    def __post_init__(self):
        if self.family not in POTENTIAL_FAMILIES:
            raise AssumptionViolation(f"A1: 알 수 없는 퍼텐셜 종류 {self.family}")
        if not np.isfinite(self.threshold) or self.threshold < 0:
            raise AssumptionViolation(f"A1: 임계값 w는 유한한 음이 아닌 값이어야 합니다: w = {self.threshold}")
        if self.family == 'cubic_core' and not abs(self.cubic) < 1.0 / 12.0:
            raise AssumptionViolation(f"coerc:f: |a3| < 1/12 조건 위반: a3 = {self.cubic}")
        object.__setattr__(self, 'threshold', float(self.threshold))
        object.__setattr__(self, 'cubic', float(self.cubic))

    def _core(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        w, a3 = self.threshold, self.cubic
        return r ** 2 - w * r + a3 * r ** 3, 2.0 * r - w + 3.0 * a3 * r ** 2, 2.0 + 6.0 * a3 * r

    def _evaluate(self, r: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        if self.family == 'quadratic':
            return r ** 2 - self.threshold * r, 2.0 * r - self.threshold, np.full_like(r, 2.0)
        value, first, second = self._core(r)
        for edge in (-2.0, 2.0):
            outside = r > edge if edge > 0 else r < edge
            v0, d1, d2 = (float(x) for x in self._core(np.asarray(edge)))
            s = r - edge
            value = np.where(outside, v0 + d1 * s + 0.5 * d2 * s ** 2, value)
            first = np.where(outside, d1 + d2 * s, first)
            second = np.where(outside, d2, second)
        return value, first, second

    def psi(self, r: ArrayLike) -> ArrayLike:
        return _as_output(self._evaluate(r)[0], r)

    def psi_prime(self, r: ArrayLike) -> ArrayLike:
        return _as_output(self._evaluate(r)[1], r)

    def psi_second(self, r: ArrayLike) -> ArrayLike:
        return _as_output(self._evaluate(r)[2], r)

    def second_derivative_bound(self) -> float:
        """sup |ψ″| (A1 이후 사용하는 ψ″ ∈ L^∞)"""
        if self.family == 'quadratic':
            return 2.0
        return 2.0 + 12.0 * abs(self.cubic)

    def coercivity_constant(self) -> float:
        """ψ(r) ≥ r²/2 - c 를 만족하는 가장 작은 c"""
        if self.family == 'quadratic':
            return 0.5 * self.threshold ** 2
        r = np.linspace(-50.0, 50.0, 200001)
        return float(max(0.0, -np.min(self.psi(r) - 0.5 * r ** 2)))


def _as_output(value: np.ndarray, reference: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(reference) == 0 else value


def psi(r: ArrayLike, spec: PotentialSpec) -> ArrayLike:
    return spec.psi(r)


def psi_prime(r: ArrayLike, spec: PotentialSpec) -> ArrayLike:
    return spec.psi_prime(r)


def psi_second(r: ArrayLike, spec: PotentialSpec) -> ArrayLike:
    return spec.psi_second(r)


def t_delta(r: ArrayLike, p: TruncationParams) -> ArrayLike:
    """C^{1,1} 절단: r ≥ 3δ이면 r, r ≤ δ이면 2δ, 사이에서는 2δ + (r-δ)²/(4δ)"""
    delta = p.delta
    x = np.asarray(r, dtype=float)
    if p.kind == 'identity':
        return _as_output(np.maximum(x, 2.0 * delta), r)
    value = np.where(
        x >= 3.0 * delta, x,
        np.where(x <= delta, 2.0 * delta, 2.0 * delta + (x - delta) ** 2 / (4.0 * delta)),
    )
    return _as_output(value, r)


def t_delta_prime(r: ArrayLike, p: TruncationParams) -> ArrayLike:
    """T_δ′ ∈ [0, 1]"""
    delta = p.delta
    x = np.asarray(r, dtype=float)
    if p.kind == 'identity':
        return _as_output(np.where(x > 2.0 * delta, 1.0, 0.0), r)
    value = np.where(
        x >= 3.0 * delta, 1.0,
        np.where(x <= delta, 0.0, (x - delta) / (2.0 * delta)),
    )
    return _as_output(value, r)


def phi_delta(r: ArrayLike, p: TruncationParams) -> ArrayLike:
    """φ_δ(r) = 1/T_δ(1-r); r ≤ 1-3δ이면 1/(1-r)"""
    x = np.asarray(r, dtype=float)
    return _as_output(1.0 / np.asarray(t_delta(1.0 - x, p)), r)


def b_integrand(r: ArrayLike, p: TruncationParams) -> ArrayLike:
    """B_δ의 피적분 함수 1/((1+r⁵)(1+φ_δ⁴(√r)))"""
    x = np.asarray(r, dtype=float)
    if np.any(x < 0):
        raise AssumptionViolation(f"B_δ 피적분 함수의 인자는 음이 아니어야 합니다: r = {np.min(x)}")
    phi = np.asarray(phi_delta(np.sqrt(x), p))
    return _as_output(1.0 / ((1.0 + x ** 5) * (1.0 + phi ** 4)), r)


@dataclass(frozen=True)
class BarrierEval:
    """B_δ(s) 계산 결과"""

    s: float
    value: float
    quadrature_error_bound: float


def _kinks(s: float, p: TruncationParams) -> Tuple[float, ...]:
    # √r = 1-3δ, 1-δ 에서 φ_δ의 분기가 바뀐다
    points = ((1.0 - 3.0 * p.delta) ** 2, (1.0 - p.delta) ** 2)
    return tuple(x for x in points if 0.0 < x < s)


@lru_cache(maxsize=4096)
def _b_delta_cached(s: float, p: TruncationParams) -> Tuple[float, float]:
    if s == 0.0:
        return 0.0, 0.0
    kinks = _kinks(s, p)
    value, error = quad(
        b_integrand, 0.0, s, args=(p,),
        epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=500,
        points=kinks or None,
    )
    return float(value), float(error)


def b_delta(s: float, p: TruncationParams) -> BarrierEval:
    """장벽 함수 B_δ(s) = ∫₀^s dr / ((1+r⁵)[1+φ_δ⁴(r^{1/2})]) (적응 구적)"""
    s = float(s)
    if s < 0 or not np.isfinite(s):
        raise AssumptionViolation(f"B_δ의 인자는 유한한 음이 아닌 값이어야 합니다: s = {s}")
    value, error = _b_delta_cached(s, p)
    return BarrierEval(s=s, value=value, quadrature_error_bound=error)


def b_sandwich(s: float, p: TruncationParams) -> Tuple[float, float]:
    """s ∈ [0,1]에서 B_δ를 감싸는 하한/상한 (½∫ 1/(1+φ⁴), ∫ 1/(1+φ⁴))"""
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise AssumptionViolation(f"샌드위치 부등식은 s ∈ [0,1]에서만 성립합니다: s = {s}")
    if s == 0.0:
        return 0.0, 0.0

    def reduced(r):
        return 1.0 / (1.0 + phi_delta(np.sqrt(r), p) ** 4)

    upper, _ = quad(reduced, 0.0, s, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE,
                    limit=500, points=_kinks(s, p) or None)
    return 0.5 * upper, upper


def b_inverse(y: float, p: TruncationParams, s_max: float = 1.0) -> float:
    """B_δ⁻¹(y), [0, s_max]에서 구간 축소 근 찾기"""
    y = float(y)
    upper = b_delta(s_max, p).value
    if y < 0 or y > upper:
        raise AssumptionViolation(f"y = {y:.6e}는 B_δ의 범위 [0, {upper:.6e}] 밖입니다")
    if y == 0.0:
        return 0.0
    if y == upper:
        return float(s_max)
    return float(brentq(lambda s: b_delta(s, p).value - y, 0.0, s_max,
                        xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=INVERSE_MAX_ITER))


def t0_formula(eps: float, p: TruncationParams, c3: float = 1.0, horizon: float = np.inf) -> float:
    """국소 존재 시간 T₀ = ((B((1-3δ)²) - B(ε²)) δ¹⁰ / c₃)³ ∧ T

    Args:
        eps (float): ε = c_Ω‖1 - z₀‖_W ≤ 1/2 (A3)
        p (TruncationParams): 절단 매개변수
        c3 (float): 포락선 상수 c₃ > 0
        horizon (float): 최종 시간 T > 0
    """
    if not 0.0 <= eps <= 0.5:
        raise AssumptionViolation(f"A3: eps = {eps:.4g} > 1/2")
    if not c3 > 0:
        raise AssumptionViolation(f"c3는 양수여야 합니다: c3 = {c3}")
    if not horizon > 0:
        raise AssumptionViolation(f"최종 시간은 양수여야 합니다: T = {horizon}")
    gap = b_delta((1.0 - 3.0 * p.delta) ** 2, p).value - b_delta(eps ** 2, p).value
    return float(min(horizon, (gap * p.delta ** 10 / c3) ** 3))


def barrier_table(p: TruncationParams, s_max: float = 1.0, points: int = 101):
    """(s, B(s)) 표 (t0 하위 명령의 CSV 출력용)"""
    s_values = np.linspace(0.0, s_max, points)
    return pd.DataFrame({'s': s_values, 'B(s)': [b_delta(s, p).value for s in s_values]})
