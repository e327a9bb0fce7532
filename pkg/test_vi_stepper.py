"""
손상 포함식 한 스텝 (projected / yosida 백엔드) 테스트
"""

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from src.numerics.grid import (Grid, dirichlet_energy, inner, integrate, neumann_energy,
                               neumann_laplacian_matrix)
from src.numerics.potentials import PotentialSpec, TruncationParams
from src.solvers.vi_stepper import StepInput, advance, assemble_load, step_projected, step_yosida

SPEC = PotentialSpec(threshold=3.0)
P = TruncationParams(1.0 / 12.0)


def projected_gauss_seidel(grid, z_prev, load, tau, threshold, sweeps=20000, tol=1e-14):
    """ψ(r) = r² - w·r 에 대한 상한 장애물 문제의 투영 가우스-자이델 풀이"""
    laplacian = neumann_laplacian_matrix(grid).toarray()
    n = grid.size
    M = np.eye(n) / tau - laplacian + 2.0 * np.eye(n)
    b = load + z_prev / tau + threshold
    z = z_prev.copy()
    for _ in range(sweeps):
        change = 0.0
        for i in range(n):
            off_diagonal = M[i] @ z - M[i, i] * z[i]
            updated = min(z_prev[i], (b[i] - off_diagonal) / M[i, i])
            change = max(change, abs(updated - z[i]))
            z[i] = updated
        if change < tol:
            break
    return z, b - M @ z


def test_constant_state_stays_with_unit_multiplier():
    """z_prev ≡ 1, ℓ ≡ 0, ψ′(1) = -1 이면 z = 1, ξ ≡ 1"""
    grid = Grid.uniform(1, 1.0, 33)
    result = step_projected(StepInput(grid.constant(1.0), grid.zeros(), 1e-2), SPEC)
    np.testing.assert_allclose(result.z_new.values, 1.0, atol=1e-12)
    np.testing.assert_allclose(result.xi.values, 1.0, atol=1e-9)
    assert result.max_violation <= 1e-12
    assert result.comp_residual <= 1e-9


@pytest.mark.parametrize('spec', [SPEC, PotentialSpec(3.0, 'cubic_core', 0.05)])
def test_inactive_constant_step_matches_scalar_root(spec):
    """충분히 음인 하중이면 제약이 비활성이고 스칼라 방정식의 근과 같다"""
    tau, load = 1e-2, -5.0
    grid = Grid.uniform(2, 1.0, 9)
    result = step_projected(StepInput(grid.constant(1.0), grid.constant(load), tau), spec)
    expected = brentq(lambda z: (z - 1.0) / tau + spec.psi_prime(z) - load, -10.0, 1.0, xtol=1e-15)
    np.testing.assert_allclose(result.z_new.values, expected, atol=1e-10)
    assert np.all(result.xi.values == 0.0)
    assert expected == pytest.approx((1 / tau - 2) / (1 / tau + 2), abs=0.02)


def test_boundary_case_needs_no_iterations():
    """ℓ = ψ′(z_prev) 이면 z = z_prev, ξ = 0 이 곧바로 해"""
    grid = Grid.uniform(1, 1.0, 17)
    result = step_projected(StepInput(grid.constant(1.0), grid.constant(-1.0), 1e-2), SPEC)
    assert result.newton_iterations == 0
    np.testing.assert_array_equal(result.z_new.values, 1.0)
    np.testing.assert_array_equal(result.xi.values, 0.0)


@pytest.mark.parametrize('seed', range(10))
def test_projected_step_matches_gauss_seidel(seed):
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(1, 1.0, 65)
    tau = 1e-2
    z_prev = 0.3 + 0.7 * rng.random(grid.size)
    load = -3.0 * rng.random(grid.size)
    result = step_projected(StepInput(grid.zeros().with_values(z_prev), grid.zeros().with_values(load), tau), SPEC)
    z_oracle, xi_oracle = projected_gauss_seidel(grid, z_prev, load, tau, SPEC.threshold)
    np.testing.assert_allclose(result.z_new.flat, z_oracle, atol=1e-8)
    np.testing.assert_allclose(result.xi.flat, np.maximum(xi_oracle, 0.0), atol=1e-6)
    assert np.all(result.z_new.flat <= z_prev)
    assert result.comp_residual <= 1e-9
    assert result.newton_iterations <= 100


@pytest.mark.parametrize('seed', range(10))
def test_yosida_path_approaches_projected_solution(seed):
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(1, 1.0, 65)
    z_prev = 0.3 + 0.7 * rng.random(grid.size)
    load = -3.0 * rng.random(grid.size)
    step_input = StepInput(grid.zeros().with_values(z_prev), grid.zeros().with_values(load), 1e-2)
    reference = step_projected(step_input, SPEC).z_new.flat
    gaps = [np.max(np.abs(step_yosida(step_input, SPEC, lam).z_new.flat - reference))
            for lam in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(later <= earlier for earlier, later in zip(gaps[:-1], gaps[1:]))
    assert gaps[-1] <= 1e-3


def test_yosida_step_with_small_lambda():
    """λτ = 1e-7 에서도 반올림 한계 안에서 수렴"""
    grid = Grid.uniform(1, 1.0, 129)
    z_prev = grid.evaluate(lambda x: 1.0 - 0.01 * np.cos(np.pi * x))
    step_input = StepInput(z_prev, grid.zeros(), 1e-2)
    result = step_yosida(step_input, SPEC, 1e-5)
    reference = step_projected(step_input, SPEC)
    assert np.all(reference.z_new.values == z_prev.values)
    assert 0.0 < result.max_violation <= 1e-6
    np.testing.assert_allclose(result.z_new.values, z_prev.values, atol=1e-6)
    np.testing.assert_allclose(result.xi.values, reference.xi.values, atol=1e-3)


def test_unconstrained_step_is_linear_solve():
    """모든 노드에서 z가 감소하면 두 백엔드 모두 선형계 해와 같다"""
    grid = Grid.uniform(1, 1.0, 65)
    tau = 1e-2
    z_prev = grid.evaluate(lambda x: 0.9 + 0.1 * np.cos(np.pi * x))
    load = grid.constant(-50.0)
    n = grid.size
    matrix = sp.identity(n) / tau - neumann_laplacian_matrix(grid) + 2.0 * sp.identity(n)
    expected = spsolve(sp.csc_matrix(matrix), load.flat + z_prev.flat / tau + SPEC.threshold)
    step_input = StepInput(z_prev, load, tau)
    for result in (step_projected(step_input, SPEC), step_yosida(step_input, SPEC, 1e-4)):
        np.testing.assert_allclose(result.z_new.flat, expected, atol=1e-9)
        assert np.all(result.xi.values == 0.0)
        assert result.max_violation == 0.0


def test_yosida_violation_closed_form():
    """z_prev ≡ 1, ℓ ≡ 0: z - z_prev = τλ/(1 + λ(1 + 2τ))"""
    grid = Grid.uniform(1, 1.0, 17)
    tau = 1e-2
    violations = []
    for lam in (1e-2, 5e-3):
        result = step_yosida(StepInput(grid.constant(1.0), grid.zeros(), tau), SPEC, lam)
        expected = tau * lam / (1 + lam * (1 + 2 * tau))
        np.testing.assert_allclose(result.z_new.values - 1.0, expected, rtol=1e-8)
        assert result.max_violation == pytest.approx(expected, rel=1e-8)
        np.testing.assert_allclose(result.xi.values, 1.0 / (1 + lam * (1 + 2 * tau)), rtol=1e-8)
        violations.append(result.max_violation)
    assert violations[1] / violations[0] == pytest.approx(0.5, rel=0.02)


def test_assemble_load():
    grid = Grid.uniform(1, 1.0, 33)
    u = grid.evaluate(lambda x: x * (1 - x))
    x = grid.axis_coordinates()[0]
    intact = assemble_load(u, grid.constant(1.0), P)
    np.testing.assert_allclose(intact.values, -0.5 * (1 - 2 * x) ** 2, atol=1e-12)
    broken = assemble_load(u, grid.constant(0.05), P)
    assert np.all(broken.values == 0.0)
    mixed = assemble_load(u, grid.evaluate(lambda x: x), P)
    assert mixed.max() <= 0.0
    assert np.all(mixed.values >= intact.values - 1e-15)
    with pytest.raises(ValueError):
        assemble_load(u, grid.constant(1.0), P, stencil='upwind')


@pytest.mark.parametrize('dim,nodes', [(1, 33), (2, 9)])
def test_face_load_integrates_to_elastic_energy(dim, nodes):
    grid = Grid.uniform(dim, 1.0, nodes)
    rng = np.random.default_rng(9)
    values = rng.standard_normal(grid.shape)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in range(dim))] = True
    u = grid.zeros().with_values(np.where(mask, values, 0.0))
    load = assemble_load(u, grid.constant(1.0), P, stencil='face')
    assert integrate(load) == pytest.approx(-dirichlet_energy(u), rel=1e-12)


@pytest.mark.parametrize('seed', range(10))
def test_step_decreases_incremental_energy(seed):
    """E(z) + τ‖(z - z_prev)/τ‖² ≤ E(z_prev), E(z) = ½∫|∇z|² + ∫ψ(z) - ∫ℓz"""
    grid = Grid.uniform(1, 1.0, 65)
    rng = np.random.default_rng(seed)
    tau = 5e-3
    z_prev = grid.zeros().with_values(0.4 + 0.6 * rng.random(grid.size))
    load = grid.zeros().with_values(-4.0 * rng.random(grid.size))

    def energy(z):
        return neumann_energy(z) + integrate(z.with_values(SPEC.psi(z.values))) - inner(load, z)

    z_new = step_projected(StepInput(z_prev, load, tau), SPEC).z_new
    increment = z_new.with_values(z_new.values - z_prev.values)
    assert energy(z_new) + inner(increment, increment) / tau <= energy(z_prev) + 1e-10


def test_projected_step_is_irreversible_for_positive_pull():
    """ℓ ≡ 0에서도 ψ′ < 0이면 z가 커지려 하지만 z ≤ z_prev 유지"""
    grid = Grid.uniform(2, 1.0, 11)
    z_prev = grid.evaluate(lambda x, y: 0.6 + 0.3 * np.cos(np.pi * x) * np.cos(np.pi * y))
    result = advance(StepInput(z_prev, grid.zeros(), 1e-2), SPEC)
    assert np.all(result.z_new.values <= z_prev.values)
    assert result.xi.min() >= 0.0
    assert result.max_violation <= 1e-9


def test_invalid_step_arguments():
    grid = Grid.uniform(1, 1.0, 9)
    with pytest.raises(ValueError):
        StepInput(grid.constant(1.0), grid.zeros(), 0.0)
    step_input = StepInput(grid.constant(1.0), grid.zeros(), 1e-2)
    with pytest.raises(ValueError):
        step_yosida(step_input, SPEC, 0.0)
    with pytest.raises(ValueError):
        advance(step_input, SPEC, backend='penalty')
