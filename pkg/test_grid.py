"""
격자 연산자, 노름, 수치 적분 테스트
"""

import numpy as np
import pytest

from src.errors import GridMismatchError
from src.numerics.grid import (Field, Grid, apply_div_coeff_grad, check_same_grid,
                               dirichlet_energy, face_gradient_sq, gradient_sq, inner,
                               integrate, laplacian_neumann, norms,
                               smallest_dirichlet_eigenvalue)


def _interior_random(grid, rng):
    values = rng.standard_normal(grid.shape)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in range(grid.dim))] = True
    return Field(grid, np.where(mask, values, 0.0))


def test_grid_validation():
    """노드 수와 길이 검증"""
    with pytest.raises(GridMismatchError):
        Grid.uniform(1, 1.0, 3)
    with pytest.raises(GridMismatchError):
        Grid.uniform(1, -1.0, 10)
    grid = Grid((1.0, 2.0), (5, 9))
    assert grid.size == 45
    assert grid.spacing == pytest.approx((0.25, 0.25))


def test_field_rejects_bad_values():
    grid = Grid.uniform(1, 1.0, 5)
    with pytest.raises(GridMismatchError):
        Field(grid, np.array([0.0, 1.0, np.nan, 0.0, 0.0]))
    with pytest.raises(GridMismatchError):
        Field(grid, np.zeros(4))
    with pytest.raises(GridMismatchError):
        check_same_grid(grid.zeros(), Grid.uniform(1, 1.0, 6).zeros())


def test_neumann_laplacian_kills_constants():
    for grid in (Grid.uniform(1, 1.0, 33), Grid.uniform(2, 1.0, 17)):
        out = laplacian_neumann(grid.constant(3.7))
        assert np.max(np.abs(out.values)) < 1e-9


def test_neumann_laplacian_second_order():
    """cos(πx)의 라플라시안 -π²cos(πx), h를 반으로 줄이면 오차 1/4"""
    errors = []
    for nodes in (33, 65, 129):
        grid = Grid.uniform(1, 1.0, nodes)
        v = grid.evaluate(lambda x: np.cos(np.pi * x))
        exact = -np.pi ** 2 * v.values
        errors.append(np.max(np.abs(laplacian_neumann(v).values - exact)))
    for coarse, fine in zip(errors[:-1], errors[1:]):
        assert 3.2 <= coarse / fine <= 4.8


@pytest.mark.parametrize('dim,nodes', [(1, 41), (2, 13)])
def test_neumann_laplacian_integrates_to_zero(dim, nodes):
    grid = Grid.uniform(dim, 1.0, nodes)
    spike = np.zeros(grid.size)
    spike[grid.size // 2 + 1] = 1.0
    out = laplacian_neumann(Field(grid, spike))
    assert abs(integrate(out)) <= 1e-10 * np.max(np.abs(out.values)) * grid.volume

    rng = np.random.default_rng(3)
    out = laplacian_neumann(Field(grid, rng.standard_normal(grid.shape)))
    assert abs(integrate(out)) <= 1e-10 * np.sum(np.abs(out.values) * grid.quadrature_weights())


def test_div_coeff_grad_reduces_to_laplacian():
    grid = Grid.uniform(1, 1.0, 129)
    u = grid.evaluate(lambda x: np.sin(np.pi * x))
    out = apply_div_coeff_grad(grid.constant(1.0), u)
    interior = slice(1, -1)
    assert np.max(np.abs(out.values[interior] - np.pi ** 2 * u.values[interior])) < 1e-3
    assert out.values[0] == 0.0 and out.values[-1] == 0.0


def test_div_coeff_grad_linear_in_coefficient():
    grid = Grid.uniform(1, 1.0, 65)
    rng = np.random.default_rng(0)
    u = _interior_random(grid, rng)
    base = apply_div_coeff_grad(grid.constant(1.0), u).values
    scaled = apply_div_coeff_grad(grid.constant(2.5), u).values
    np.testing.assert_allclose(scaled, 2.5 * base, rtol=1e-14, atol=1e-12)
    assert np.all(apply_div_coeff_grad(grid.constant(1.0), grid.zeros()).values == 0.0)


def test_div_coeff_grad_rejects_negative_coefficient():
    grid = Grid.uniform(1, 1.0, 9)
    a = grid.constant(1.0).with_values(np.r_[1.0, -0.1, np.ones(7)])
    with pytest.raises(ValueError):
        apply_div_coeff_grad(a, grid.zeros())


@pytest.mark.parametrize('dim,nodes', [(1, 65), (2, 17)])
def test_div_coeff_grad_symmetric_positive_definite(dim, nodes):
    grid = Grid.uniform(dim, 1.0, nodes)
    rng = np.random.default_rng(7)
    a0 = 0.2
    a = Field(grid, a0 + rng.random(grid.shape))
    v, w = _interior_random(grid, rng), _interior_random(grid, rng)
    av, aw = apply_div_coeff_grad(a, v), apply_div_coeff_grad(a, w)
    assert inner(av, w) == pytest.approx(inner(v, aw), rel=1e-12)
    lower = a0 * smallest_dirichlet_eigenvalue(grid) * inner(v, v)
    assert inner(av, v) >= lower * (1 - 1e-12) > 0


def test_gradient_sq_exact_on_quadratic():
    grid = Grid.uniform(1, 1.0, 33)
    u = grid.evaluate(lambda x: x * (1 - x))
    x = grid.axis_coordinates()[0]
    np.testing.assert_allclose(gradient_sq(u).values, (1 - 2 * x) ** 2, atol=1e-12)
    assert np.all(gradient_sq(grid.zeros()).values == 0.0)


def test_gradient_sq_nonnegative():
    grid = Grid.uniform(2, 1.0, 11)
    u = Field(grid, np.random.default_rng(1).standard_normal(grid.shape))
    assert gradient_sq(u).min() >= 0.0
    assert face_gradient_sq(u).min() >= 0.0


@pytest.mark.parametrize('dim,nodes', [(1, 33), (2, 9)])
def test_face_gradient_matches_elastic_energy(dim, nodes):
    """면 스텐실의 적분은 이산 디리클레 에너지의 두 배"""
    grid = Grid.uniform(dim, 1.0, nodes)
    u = _interior_random(grid, np.random.default_rng(5))
    assert integrate(face_gradient_sq(u)) == pytest.approx(2.0 * dirichlet_energy(u), rel=1e-12)


def test_norms_of_constant_and_cosine():
    grid = Grid.uniform(1, 1.0, 129)
    report = norms(grid.constant(-2.0), 'neumann')
    assert report.l2 == pytest.approx(2.0, rel=1e-14)
    assert report.w == pytest.approx(2.0, rel=1e-12)
    assert report.linf == 2.0

    report = norms(grid.evaluate(lambda x: np.cos(np.pi * x)), 'neumann')
    assert report.l2 ** 2 == pytest.approx(0.5, abs=1e-4)
    assert report.laplacian_l2 ** 2 == pytest.approx(np.pi ** 4 / 2, rel=1e-3)
    assert report.w == pytest.approx(np.sqrt((1 + np.pi ** 4) / 2), abs=1e-2)


@pytest.mark.parametrize('mode', ['neumann', 'dirichlet'])
def test_norm_ordering(mode):
    grid = Grid.uniform(1, 1.0, 40)
    rng = np.random.default_rng(11)
    for _ in range(5):
        report = norms(Field(grid, rng.standard_normal(grid.shape)), mode)
        assert report.w >= report.l2
        assert report.h1 >= report.l2
    with pytest.raises(ValueError):
        norms(grid.zeros(), 'periodic')


def test_integrate():
    grid = Grid.uniform(1, 1.0, 101)
    assert integrate(grid.constant(1.0)) == pytest.approx(1.0, abs=1e-15)
    assert integrate(grid.evaluate(lambda x: x)) == pytest.approx(0.5, abs=1e-15)
    assert integrate(grid.evaluate(lambda x: x ** 2)) == pytest.approx(1.0 / 3.0, abs=1e-4)
    grid2 = Grid((1.0, 2.0), (11, 21))
    assert integrate(grid2.constant(1.0)) == pytest.approx(2.0, rel=1e-14)
