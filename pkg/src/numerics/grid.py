"""
균일 직사각 격자 위의 유한차분 연산자, 노름, 수치 적분
1차원 구간과 2차원 직사각형 영역을 지원한다
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Tuple

import numpy as np
import scipy.sparse as sp

from src.errors import GridMismatchError

logger = logging.getLogger(__name__)

MIN_NODES_PER_AXIS = 4


@dataclass(frozen=True)
class Grid:
    """균일 직사각 격자

    Args:
        extents (tuple): 축별 영역 길이 (0, L_k)
        nodes (tuple): 축별 노드 수 (경계 노드 포함)
    """

    extents: Tuple[float, ...]
    nodes: Tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in np.atleast_1d(self.extents))
        nodes = tuple(int(n) for n in np.atleast_1d(self.nodes))
        if len(extents) != len(nodes) or len(nodes) not in (1, 2):
            raise GridMismatchError(f"1차원 또는 2차원 격자만 지원합니다: extents={extents}, nodes={nodes}")
        for length, count in zip(extents, nodes):
            if not np.isfinite(length) or length <= 0:
                raise GridMismatchError(f"영역 길이는 양수여야 합니다: {length}")
            if count < MIN_NODES_PER_AXIS:
                raise GridMismatchError(f"축별 노드 수는 {MIN_NODES_PER_AXIS} 이상이어야 합니다: {count}")
        object.__setattr__(self, 'extents', extents)
        object.__setattr__(self, 'nodes', nodes)

    @classmethod
    def uniform(cls, dim: int, extent: float = 1.0, nodes: int = 65) -> 'Grid':
        """모든 축이 같은 길이와 노드 수를 갖는 격자"""
        return cls(extents=(extent,) * dim, nodes=(nodes,) * dim)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(length / (count - 1) for length, count in zip(self.extents, self.nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def axis_coordinates(self) -> List[np.ndarray]:
        return [np.linspace(0.0, length, count) for length, count in zip(self.extents, self.nodes)]

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axis_coordinates(), indexing='ij'))

    def evaluate(self, func: Callable[..., np.ndarray]) -> 'Field':
        """좌표 배열을 받는 함수를 노드에서 계산해 필드로 반환"""
        values = np.broadcast_to(func(*self.coordinates()), self.shape)
        return Field(self, values)

    def zeros(self) -> 'Field':
        return Field(self, np.zeros(self.shape))

    def constant(self, value: float) -> 'Field':
        return Field(self, np.full(self.shape, float(value)))

    def quadrature_weights(self) -> np.ndarray:
        return _trapezoid_weights(self)

    def interior_indices(self) -> np.ndarray:
        return _interior_indices(self)


@dataclass(frozen=True, eq=False)
class Field:
    """격자 노드 위의 스칼라 값 (u, z, ξ, g, 하중 등)"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise GridMismatchError(
                    f"필드 크기 {values.size}가 격자 노드 수 {self.grid.size}와 다릅니다")
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise GridMismatchError("필드 값에 유한하지 않은 값이 있습니다")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def with_values(self, values: np.ndarray) -> 'Field':
        return Field(self.grid, values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class NormReport:
    """필드의 노름 모음 (w² = l2² + ‖Δv‖²)"""

    l2: float
    h1: float
    linf: float
    w: float
    grad_l2: float
    laplacian_l2: float


def check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatchError(f"격자가 일치하지 않습니다: {grid} vs {other.grid}")
    return grid


@lru_cache(maxsize=64)
def _trapezoid_weights(grid: Grid) -> np.ndarray:
    weights = np.ones(())
    for h, count in zip(grid.spacing, grid.nodes):
        axis_weights = np.full(count, h)
        axis_weights[[0, -1]] = h / 2
        weights = np.multiply.outer(weights, axis_weights)
    weights.setflags(write=False)
    return weights


@lru_cache(maxsize=64)
def _interior_indices(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in range(grid.dim))] = True
    indices = np.flatnonzero(mask)
    indices.setflags(write=False)
    return indices


def _kron_sum(blocks: List[sp.spmatrix], nodes: Tuple[int, ...]) -> sp.csr_matrix:
    if len(blocks) == 1:
        return sp.csr_matrix(blocks[0])
    eye0, eye1 = sp.identity(nodes[0]), sp.identity(nodes[1])
    return sp.csr_matrix(sp.kron(blocks[0], eye1) + sp.kron(eye0, blocks[1]))


def _neumann_second_difference(count: int, h: float) -> sp.spmatrix:
    # 경계에서 고스트 노드를 대칭으로 두면 첫/끝 행이 [-2, 2]가 된다
    lower = np.ones(count - 1)
    upper = np.ones(count - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, -2.0 * np.ones(count), upper], [-1, 0, 1]) / h ** 2


@lru_cache(maxsize=64)
def neumann_laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """동차 노이만 조건의 라플라시안 (모든 노드에 작용)"""
    blocks = [_neumann_second_difference(n, h) for n, h in zip(grid.nodes, grid.spacing)]
    return _kron_sum(blocks, grid.nodes)


@lru_cache(maxsize=64)
def _interior_face_differences(grid: Grid) -> Tuple[sp.csr_matrix, ...]:
    """축별 면 차분 행렬, 열은 내부 노드로 제한 (경계 u = 0 소거)"""
    interior = _interior_indices(grid)
    operators = []
    for axis, count in enumerate(grid.nodes):
        diff = sp.diags([-np.ones(count - 1), np.ones(count - 1)], [0, 1], shape=(count - 1, count))
        if grid.dim == 2:
            other = sp.identity(grid.nodes[1 - axis])
            diff = sp.kron(diff, other) if axis == 0 else sp.kron(other, diff)
        operators.append(sp.csr_matrix(diff)[:, interior])
    return tuple(operators)


def face_average(a: np.ndarray, axis: int) -> np.ndarray:
    """인접 노드 계수의 산술 평균"""
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def div_coeff_grad_matrix(grid: Grid, coefficient: np.ndarray) -> sp.csr_matrix:
    """내부 노드 위의 -div(a∇·) 행렬 (대칭, a ≥ 0이면 양의 준정부호)"""
    coefficient = np.asarray(coefficient, dtype=float).reshape(grid.shape)
    matrix = None
    for axis, (diff, h) in enumerate(zip(_interior_face_differences(grid), grid.spacing)):
        weights = face_average(coefficient, axis).ravel() / h ** 2
        term = diff.T @ sp.diags(weights) @ diff
        matrix = term if matrix is None else matrix + term
    return sp.csr_matrix(matrix)


@lru_cache(maxsize=64)
def dirichlet_laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """내부 노드 위의 -Δ (동차 디리클레)"""
    return div_coeff_grad_matrix(grid, np.ones(grid.shape))


def laplacian_neumann(v: Field) -> Field:
    """고스트 노드 대칭으로 ∂_n v = 0을 부여한 2차 중심 차분 라플라시안"""
    matrix = neumann_laplacian_matrix(v.grid)
    return v.with_values(matrix @ v.flat)


def laplacian_dirichlet(v: Field) -> Field:
    """경계값 0으로 해석한 라플라시안, 경계 노드에서는 0"""
    grid = v.grid
    interior = grid.interior_indices()
    out = np.zeros(grid.size)
    out[interior] = -(dirichlet_laplacian_matrix(grid) @ v.flat[interior])
    return Field(grid, out)


def apply_div_coeff_grad(a: Field, u: Field) -> Field:
    """-div(a∇u)를 내부 노드에서 계산 (면 계수는 인접 노드의 산술 평균)

    Args:
        a (Field): 음이 아닌 노드 계수
        u (Field): 경계값이 0으로 해석되는 필드
    """
    grid = check_same_grid(a, u)
    if np.any(a.values < 0):
        raise ValueError(f"계수에 음수가 있습니다: min = {a.min():.3e}")
    interior = grid.interior_indices()
    out = np.zeros(grid.size)
    out[interior] = div_coeff_grad_matrix(grid, a.values) @ u.flat[interior]
    return Field(grid, out)


def _axis_gradients(u: Field) -> List[np.ndarray]:
    grid = u.grid
    grads = np.gradient(u.values, *grid.spacing, edge_order=2)
    return [grads] if grid.dim == 1 else list(grads)


def gradient_sq(u: Field) -> Field:
    """노드별 |∇u|² (내부는 중심 차분, 경계는 2차 한쪽 차분)"""
    return u.with_values(sum(g ** 2 for g in _axis_gradients(u)))


def face_gradient_sq(u: Field) -> Field:
    """이산 탄성 에너지와 일치하는 노드별 |∇u|²

    각 면의 (Δu/h)²를 양 끝 노드에 절반씩 나누고 사다리꼴 가중치로 나눈다.
    내부 노드에서는 양쪽 한쪽 차분 제곱의 평균이 된다.
    """
    grid = u.grid
    accumulated = np.zeros(grid.shape)
    for axis, h in enumerate(grid.spacing):
        half = 0.5 * (np.diff(u.values, axis=axis) / h) ** 2
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        accumulated[tuple(lo)] += half
        accumulated[tuple(hi)] += half
    return u.with_values(accumulated * grid.cell_volume / grid.quadrature_weights())


def integrate(v: Field) -> float:
    """사다리꼴 공식 (2차원은 텐서곱)"""
    return float(np.sum(v.grid.quadrature_weights() * v.values))


def inner(v: Field, w: Field) -> float:
    check_same_grid(v, w)
    return float(np.sum(v.grid.quadrature_weights() * v.values * w.values))


def lp_norm(v: Field, p: float) -> float:
    return float(integrate(v.with_values(np.abs(v.values) ** p)) ** (1.0 / p))


def dirichlet_energy(u: Field, a: Field = None) -> float:
    """½∫ a|∇u|², -div(a∇·) 행렬과 일치하는 이산 형태 (a 생략 시 1)"""
    grid = u.grid if a is None else check_same_grid(a, u)
    coefficient = np.ones(grid.shape) if a is None else a.values
    interior = grid.interior_indices()
    matrix = div_coeff_grad_matrix(grid, coefficient)
    u_int = u.flat[interior]
    return 0.5 * grid.cell_volume * float(u_int @ (matrix @ u_int))


def neumann_energy(z: Field) -> float:
    """½∫|∇z|², 노이만 라플라시안과 일치하는 이산 형태"""
    return -0.5 * inner(laplacian_neumann(z), z)


def norms(v: Field, boundary_mode: str = 'neumann') -> NormReport:
    """L², H¹(= l2 + ‖∇v‖), L^∞, W 노름"""
    if boundary_mode == 'neumann':
        laplacian = laplacian_neumann(v)
    elif boundary_mode == 'dirichlet':
        laplacian = laplacian_dirichlet(v)
    else:
        raise ValueError(f"알 수 없는 경계 조건: {boundary_mode}")
    l2 = np.sqrt(integrate(v.with_values(v.values ** 2)))
    grad = np.sqrt(integrate(gradient_sq(v)))
    lap = np.sqrt(integrate(laplacian.with_values(laplacian.values ** 2)))
    return NormReport(
        l2=float(l2),
        h1=float(l2 + grad),
        linf=float(np.max(np.abs(v.values))),
        w=float(np.hypot(l2, lap)),
        grad_l2=float(grad),
        laplacian_l2=float(lap),
    )


def smallest_dirichlet_eigenvalue(grid: Grid) -> float:
    """이산 디리클레 라플라시안의 최소 고유값 (이산 푸앵카레 상수 = 1/√λ)"""
    return float(sum(
        4.0 / h ** 2 * np.sin(np.pi * h / (2.0 * length)) ** 2
        for h, length in zip(grid.spacing, grid.extents)
    ))
