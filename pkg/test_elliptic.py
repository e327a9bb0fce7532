"""
변위 방정식 풀이 테스트
"""

import numpy as np
import pytest

from src.numerics.grid import (Grid, dirichlet_energy, inner, lp_norm,
                               smallest_dirichlet_eigenvalue)
from src.numerics.potentials import TruncationParams, t_delta
from src.solvers.elliptic import (energy_identity_check, iteration_cap, solve_elliptic,
                                  solve_elliptic_regularized)

P = TruncationParams(1.0 / 12.0)


def sine_problem(nodes):
    grid = Grid.uniform(1, 1.0, nodes)
    exact = grid.evaluate(lambda x: np.sin(np.pi * x))
    g = exact.with_values(np.pi ** 2 * exact.values)
    return grid, exact, g


def test_manufactured_solution_second_order():
    """z ≡ 1, g = π² sin(πx) 이면 u = sin(πx)"""
    errors = []
    for nodes in (33, 65, 129):
        grid, exact, g = sine_problem(nodes)
        report = solve_elliptic(grid.constant(1.0), g, P)
        errors.append(np.max(np.abs(report.u.values - exact.values)))
        assert report.residual_l2 <= 1e-10
        assert report.iterations <= iteration_cap(grid)
    assert errors[-1] <= 1e-3
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((orders >= 1.8) & (orders <= 2.2))


def test_zero_load_gives_zero_displacement():
    grid = Grid.uniform(2, 1.0, 9)
    report = solve_elliptic(grid.constant(0.3), grid.zeros(), P)
    assert np.all(report.u.values == 0.0)
    assert report.iterations == 0


def test_constant_damage_scales_solution():
    grid, _, g = sine_problem(65)
    full = solve_elliptic(grid.constant(1.0), g, P).u
    half = solve_elliptic(grid.constant(0.5), g, P).u
    np.testing.assert_allclose(half.values, 2.0 * full.values, rtol=1e-8, atol=1e-12)


def test_truncation_floor_on_degenerate_damage():
    grid, _, g = sine_problem(33)
    z = grid.evaluate(lambda x: 1.0 - 2.5 * np.sin(np.pi * x))
    report = solve_elliptic(z, g, P)
    assert report.coeff_min >= 2 * P.delta
    assert report.coeff_min == pytest.approx(float(np.min(t_delta(z.values, P))))
    assert np.all(report.u.values[[0, -1]] == 0.0)


def test_nonnegative_load_gives_nonnegative_displacement():
    grid = Grid.uniform(2, 1.0, 17)
    rng = np.random.default_rng(2)
    z = grid.evaluate(lambda x, y: 0.5 + 0.5 * np.cos(3 * x) * np.sin(2 * y))
    g = grid.zeros().with_values(rng.random(grid.shape))
    report = solve_elliptic(z, g, P)
    assert report.u.min() >= -1e-12


def test_gradient_bound_from_coercivity():
    """2δ‖∇u‖² ≤ ⟨g, u⟩ ≤ ‖g‖‖∇u‖/√λ₁"""
    grid = Grid.uniform(1, 1.0, 65)
    z = grid.evaluate(lambda x: np.cos(4 * np.pi * x))
    g = grid.evaluate(lambda x: 3.0 * np.exp(x))
    u = solve_elliptic(z, g, P).u
    grad_sq = 2.0 * dirichlet_energy(u)
    bound = lp_norm(g, 2) / (2 * P.delta * np.sqrt(smallest_dirichlet_eigenvalue(grid)))
    assert np.sqrt(grad_sq) <= bound * (1 + 1e-8)
    assert 2 * P.delta * grad_sq <= inner(g, u) * (1 + 1e-8)


def test_regularized_reduces_exactly_at_zero_epsilon():
    grid, _, g = sine_problem(33)
    z = grid.evaluate(lambda x: 1.0 - 0.3 * x)
    plain = solve_elliptic(z, g, P)
    regularized = solve_elliptic_regularized(z, g, P, 0.0)
    np.testing.assert_array_equal(plain.u.values, regularized.u.values)
    assert regularized.v is None


def test_regularized_matches_sine_mode():
    """εΔ²u - Δu = π² sin(πx) 이면 u = sin(πx)/(1 + επ²)"""
    epsilon = 1e-3
    grid, exact, g = sine_problem(65)
    report = solve_elliptic_regularized(grid.constant(1.0), g, P, epsilon)
    expected = exact.values / (1 + epsilon * np.pi ** 2)
    assert np.max(np.abs(report.u.values - expected)) <= 1e-3
    # v = -Δu ≈ π² u
    np.testing.assert_allclose(report.v.values[1:-1], np.pi ** 2 * report.u.values[1:-1], rtol=1e-3)


def test_regularization_shrinks_displacement():
    grid, _, g = sine_problem(33)
    z = grid.constant(1.0)
    sizes = [lp_norm(solve_elliptic_regularized(z, g, P, eps).u, 2) for eps in (0.0, 1e-3, 1e-2, 1e-1)]
    assert all(later < earlier for earlier, later in zip(sizes[:-1], sizes[1:]))
    with pytest.raises(ValueError):
        solve_elliptic_regularized(z, g, P, -1.0)


@pytest.mark.parametrize('epsilon', [0.0, 1e-3])
def test_energy_identity(epsilon):
    grid = Grid.uniform(2, 1.0, 17)
    z = grid.evaluate(lambda x, y: 1.0 - 0.4 * np.sin(np.pi * x) * np.sin(np.pi * y))
    g = grid.evaluate(lambda x, y: 5.0 + x - y)
    tol = 1e-10
    u = solve_elliptic_regularized(z, g, P, epsilon, tol=tol).u
    assert energy_identity_check(z, u, g, P, epsilon) <= 10 * tol
    corrupted = u.with_values(1.01 * u.values)
    assert energy_identity_check(z, corrupted, g, P, epsilon) > 1e-4
    spiked = u.values.copy()
    spiked[8, 8] += 1.0
    assert energy_identity_check(z, u.with_values(spiked), g, P, epsilon) > 0.1


def test_invalid_tolerance():
    grid, _, g = sine_problem(9)
    with pytest.raises(ValueError):
        solve_elliptic(grid.constant(1.0), g, P, tol=0.0)
