"""
변위 방정식 -div(T_δ(z)∇u) = g 와 쌍조화 정칙화 εΔ²u - div(T_δ(z)∇u) = g 의 풀이
u는 동차 디리클레, 정칙화 문제에서는 u = Δu = 0 (나비에 조건)
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from src.errors import SolverConvergenceError
from src.numerics.grid import (Field, Grid, check_same_grid, dirichlet_laplacian_matrix,
                               div_coeff_grad_matrix, inner)
from src.numerics.potentials import TruncationParams, t_delta

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class EllipticSolveReport:
    """변위 풀이 결과

    v는 정칙화 문제의 보조 변수 -Δu (ε = 0이면 None)
    """

    u: Field
    iterations: int
    residual_l2: float
    coeff_min: float
    v: Optional[Field] = None


def iteration_cap(grid: Grid) -> int:
    """CG 반복 상한 50·N^{1/dim}"""
    return 50 * int(round(grid.size ** (1.0 / grid.dim)))


def _relative_residual(matrix: sp.spmatrix, x: np.ndarray, rhs: np.ndarray) -> float:
    return float(np.linalg.norm(rhs - matrix @ x) / np.linalg.norm(rhs))


def _solve_spd(matrix: sp.csr_matrix, rhs: np.ndarray, tol: float, cap: int) -> Tuple[np.ndarray, int, float]:
    """대각 전처리 CG, 실제 잔차가 허용치를 넘으면 한 번 더 이어서 푼다"""
    if not np.any(rhs):
        return np.zeros_like(rhs), 0, 0.0
    preconditioner = sp.diags(1.0 / matrix.diagonal())
    iterations = [0]

    def count(_):
        iterations[0] += 1

    x = None
    residual = np.inf
    for _ in range(2):
        x, info = cg(matrix, rhs, x0=x, rtol=tol, atol=0.0, maxiter=cap,
                     M=preconditioner, callback=count)
        residual = _relative_residual(matrix, x, rhs)
        if residual <= tol:
            break
        if info > 0:
            raise SolverConvergenceError(
                f"CG가 {cap}회 안에 수렴하지 않았습니다 (상대 잔차 {residual:.3e}, 허용치 {tol:.1e})")
    if residual > tol:
        raise SolverConvergenceError(f"CG 잔차 {residual:.3e}가 허용치 {tol:.1e}보다 큽니다")
    return x, iterations[0], residual


def _embed(grid: Grid, interior_values: np.ndarray) -> Field:
    values = np.zeros(grid.size)
    values[grid.interior_indices()] = interior_values
    return Field(grid, values)


def solve_elliptic(z: Field, g: Field, p: TruncationParams,
                   tol: float = DEFAULT_TOLERANCE) -> EllipticSolveReport:
    """-div(T_δ(z)∇u) = g 를 CG로 푼다

    Args:
        z (Field): 손상 변수
        g (Field): 외력
        p (TruncationParams): 절단 매개변수
        tol (float): 상대 잔차 허용치
    """
    grid = check_same_grid(z, g)
    if tol <= 0:
        raise ValueError(f"허용치는 양수여야 합니다: {tol}")
    coefficient = np.asarray(t_delta(z.values, p))
    matrix = div_coeff_grad_matrix(grid, coefficient)
    rhs = g.flat[grid.interior_indices()]
    x, iterations, residual = _solve_spd(matrix, rhs, tol, iteration_cap(grid))
    logger.debug(f"변위 풀이: CG {iterations}회, 잔차 {residual:.2e}")
    return EllipticSolveReport(u=_embed(grid, x), iterations=iterations,
                               residual_l2=residual, coeff_min=float(coefficient.min()))


def solve_elliptic_regularized(z: Field, g: Field, p: TruncationParams, epsilon: float,
                               tol: float = DEFAULT_TOLERANCE) -> EllipticSolveReport:
    """εΔ²u - div(T_δ(z)∇u) = g, u = Δu = 0

    혼합 형식 v = -Δu (u, v 모두 동차 디리클레)에서 v를 소거한
    대칭 양의 정부호 계 (εL² + A)u = g 를 푼다. ε = 0이면 solve_elliptic과 같다.
    """
    if epsilon < 0:
        raise ValueError(f"정칙화 매개변수는 음이 아니어야 합니다: epsilon = {epsilon}")
    if epsilon == 0:
        return solve_elliptic(z, g, p, tol)
    grid = check_same_grid(z, g)
    coefficient = np.asarray(t_delta(z.values, p))
    laplacian = dirichlet_laplacian_matrix(grid)
    matrix = sp.csr_matrix(epsilon * (laplacian @ laplacian) + div_coeff_grad_matrix(grid, coefficient))
    rhs = g.flat[grid.interior_indices()]
    x, iterations, residual = _solve_spd(matrix, rhs, tol, iteration_cap(grid))
    logger.debug(f"정칙화 변위 풀이 (ε = {epsilon:g}): CG {iterations}회, 잔차 {residual:.2e}")
    return EllipticSolveReport(u=_embed(grid, x), iterations=iterations, residual_l2=residual,
                               coeff_min=float(coefficient.min()), v=_embed(grid, laplacian @ x))


def energy_identity_check(z: Field, u: Field, g: Field, p: TruncationParams,
                          epsilon: float = 0.0) -> float:
    """|⟨T_δ(z)∇u, ∇u⟩ + ε‖Δu‖² - ⟨g, u⟩| / max(1, |⟨g, u⟩|)"""
    grid = check_same_grid(z, u, g)
    interior = grid.interior_indices()
    u_int = u.flat[interior]
    matrix = div_coeff_grad_matrix(grid, np.asarray(t_delta(z.values, p)))
    stiffness = grid.cell_volume * float(u_int @ (matrix @ u_int))
    if epsilon > 0:
        lap_u = dirichlet_laplacian_matrix(grid) @ u_int
        stiffness += epsilon * grid.cell_volume * float(lap_u @ lap_u)
    work = inner(g, u)
    return abs(stiffness - work) / max(1.0, abs(work))
