"""
손상 포함식 α(z_t) + z_t - Δz + ψ′(z) ∋ ℓ 의 음해법 한 스텝
α = ∂I_{(-∞,0]} (비가역성 z_t ≤ 0)

두 가지 백엔드:
- projected: 상보성 조건 min(ξ, (z_prev - z)/τ) = 0 에 대한 준매끄러운 뉴턴
- yosida: α를 요시다 근사 α_λ(r) = r₊/λ 로 바꾼 방정식의 준매끄러운 뉴턴
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from src.errors import NewtonStagnationError
from src.numerics.grid import (Field, check_same_grid, face_gradient_sq, gradient_sq,
                               neumann_laplacian_matrix)
from src.numerics.potentials import PotentialSpec, TruncationParams, t_delta_prime

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 100
LINE_SEARCH_MAX_HALVINGS = 30
DEFAULT_TOLERANCE = 1e-9
# 잔차 항 크기 대비 반올림 한계 (max|F| ≤ ROUNDOFF_FACTOR·ε_mach·크기 이면 수렴)
ROUNDOFF_FACTOR = 1e3
LOAD_STENCILS = ('centered', 'face')


@dataclass(frozen=True)
class StepInput:
    """한 스텝의 입력

    Args:
        z_prev (Field): 이전 손상 변수
        load (Field): ℓ = -½T_δ′(z)|∇u|² (호출자가 조립)
        tau (float): 시간 간격 τ > 0
    """

    z_prev: Field
    load: Field
    tau: float

    def __post_init__(self):
        check_same_grid(self.z_prev, self.load)
        if not self.tau > 0:
            raise ValueError(f"시간 간격은 양수여야 합니다: tau = {self.tau}")


@dataclass(frozen=True)
class StepResult:
    """한 스텝의 결과 (xi는 α(z_t)의 이산 선택)"""

    z_new: Field
    xi: Field
    newton_iterations: int
    comp_residual: float
    max_violation: float


def assemble_load(u: Field, z: Field, p: TruncationParams, stencil: str = 'centered') -> Field:
    """ℓ = -½·T_δ′(z)·|∇u|² (항상 0 이하)

    stencil='face'는 이산 탄성 에너지의 z 미분과 정확히 일치하는 |∇u|²를 쓴다.
    """
    check_same_grid(u, z)
    if stencil == 'centered':
        squared = gradient_sq(u)
    elif stencil == 'face':
        squared = face_gradient_sq(u)
    else:
        raise ValueError(f"알 수 없는 하중 스텐실: {stencil}")
    return z.with_values(-0.5 * np.asarray(t_delta_prime(z.values, p)) * squared.values)


def _newton(residual: Callable[[np.ndarray], np.ndarray],
            jacobian: Callable[[np.ndarray], sp.spmatrix],
            x0: np.ndarray, tol: float, label: str,
            magnitude: Optional[Callable[[np.ndarray], float]] = None) -> Tuple[np.ndarray, int]:
    """잔차 반감 선탐색을 쓰는 준매끄러운 뉴턴 반복

    magnitude(x)는 잔차를 이루는 항들의 크기이고, 수렴 판정은
    max(tol, ROUNDOFF_FACTOR·ε_mach·magnitude(x)) 기준이다.
    """
    eps_mach = np.finfo(float).eps
    x = x0.copy()
    F = residual(x)
    for iteration in range(NEWTON_MAX_ITER + 1):
        floor = ROUNDOFF_FACTOR * eps_mach * magnitude(x) if magnitude is not None else 0.0
        if np.max(np.abs(F)) <= max(tol, floor):
            return x, iteration
        if iteration == NEWTON_MAX_ITER:
            break
        direction = spsolve(sp.csc_matrix(jacobian(x)), -F)
        merit = np.linalg.norm(F)
        step = 1.0
        for _ in range(LINE_SEARCH_MAX_HALVINGS):
            candidate = x + step * direction
            F_candidate = residual(candidate)
            if np.linalg.norm(F_candidate) < (1.0 - 1e-4 * step) * merit:
                break
            step *= 0.5
        else:
            raise NewtonStagnationError(
                f"{label}: 선탐색 실패 (반복 {iteration}, 잔차 {np.max(np.abs(F)):.3e})")
        x, F = candidate, F_candidate
    raise NewtonStagnationError(
        f"{label}: {NEWTON_MAX_ITER}회 안에 수렴하지 않았습니다 (잔차 {np.max(np.abs(F)):.3e})")


def step_projected(step_input: StepInput, spec: PotentialSpec,
                   tol: float = DEFAULT_TOLERANCE) -> StepResult:
    """상보성 형식의 음해법 스텝

    z ≤ z_prev, ξ ≥ 0, ξ·(z_prev - z) = 0,
    (z - z_prev)/τ - Δ_N z + ψ′(z) + ξ = ℓ
    """
    z_prev = step_input.z_prev.flat
    load = step_input.load.flat
    tau = step_input.tau
    n = z_prev.size
    laplacian = neumann_laplacian_matrix(step_input.z_prev.grid)
    identity = sp.identity(n, format='csr')

    def split(x):
        return x[:n], x[n:]

    def residual(x):
        z, xi = split(x)
        stationarity = (z - z_prev) / tau - laplacian @ z + spec.psi_prime(z) + xi - load
        return np.concatenate([stationarity, np.minimum(xi, (z_prev - z) / tau)])

    def jacobian(x):
        z, xi = split(x)
        multiplier_branch = xi <= (z_prev - z) / tau
        j11 = identity / tau - laplacian + sp.diags(spec.psi_second(z))
        j21 = sp.diags(np.where(multiplier_branch, 0.0, -1.0 / tau))
        j22 = sp.diags(np.where(multiplier_branch, 1.0, 0.0))
        return sp.bmat([[j11, identity], [j21, j22]])

    # 전부 활성이라고 가정했을 때의 승수로 시작
    xi0 = np.maximum(0.0, load + laplacian @ z_prev - spec.psi_prime(z_prev))
    x, iterations = _newton(residual, jacobian, np.concatenate([z_prev, xi0]), tol, 'projected step')
    z, xi = split(x)
    comp_residual = float(np.max(np.abs(np.minimum(xi, (z_prev - z) / tau))))
    max_violation = float(max(0.0, np.max(z - z_prev)))
    grid = step_input.z_prev.grid
    logger.debug(f"투영 스텝: 뉴턴 {iterations}회, 상보성 잔차 {comp_residual:.2e}")
    return StepResult(
        z_new=Field(grid, np.minimum(z, z_prev)),
        xi=Field(grid, np.maximum(xi, 0.0)),
        newton_iterations=iterations,
        comp_residual=comp_residual,
        max_violation=max_violation,
    )


def step_yosida(step_input: StepInput, spec: PotentialSpec, lam: float,
                tol: float = DEFAULT_TOLERANCE) -> StepResult:
    """요시다 정칙화 스텝

    (z - z_prev)/τ + (1/λ)·max((z - z_prev)/τ, 0) - Δ_N z + ψ′(z) = ℓ
    xi는 α_λ(z_t)를 보고하고 comp_residual은 O(λ)인 정칙화 간극이다.
    """
    if not lam > 0:
        raise ValueError(f"요시다 매개변수는 양수여야 합니다: lambda = {lam}")
    z_prev = step_input.z_prev.flat
    load = step_input.load.flat
    tau = step_input.tau
    laplacian = neumann_laplacian_matrix(step_input.z_prev.grid)

    def residual(z):
        rate = (z - z_prev) / tau
        return rate + np.maximum(rate, 0.0) / lam - laplacian @ z + spec.psi_prime(z) - load

    def jacobian(z):
        growing = (z - z_prev) > 0
        diagonal = 1.0 / tau + np.where(growing, 1.0 / (lam * tau), 0.0) + spec.psi_second(z)
        return sp.diags(diagonal) - laplacian

    def magnitude(z):
        # 증가 노드의 (1/λ)·(z - z_prev)/τ 항이 지배
        return (1.0 + 1.0 / lam) * np.max(np.abs(z)) / tau

    z, iterations = _newton(residual, jacobian, z_prev.copy(), tol, 'yosida step', magnitude)
    rate = (z - z_prev) / tau
    xi = np.maximum(rate, 0.0) / lam
    grid = step_input.z_prev.grid
    logger.debug(f"요시다 스텝 (λ = {lam:g}): 뉴턴 {iterations}회")
    return StepResult(
        z_new=Field(grid, z),
        xi=Field(grid, xi),
        newton_iterations=iterations,
        comp_residual=float(np.max(np.abs(np.minimum(xi, -rate)))),
        max_violation=float(max(0.0, np.max(z - z_prev))),
    )


def advance(step_input: StepInput, spec: PotentialSpec, backend: str = 'projected',
            lam: float = 1e-4, tol: float = DEFAULT_TOLERANCE) -> StepResult:
    """설정된 백엔드로 한 스텝 진행"""
    if backend == 'projected':
        return step_projected(step_input, spec, tol)
    if backend == 'yosida':
        return step_yosida(step_input, spec, lam, tol)
    raise ValueError(f"알 수 없는 백엔드: {backend}")
