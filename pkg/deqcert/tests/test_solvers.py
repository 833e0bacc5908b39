import numpy as np
import pytest

from deqcert import deqcore, solvers
from deqcert.exceptions import ArgumentError, NumericalError
from deqcert.solvers import SolverConfig


AFFINE_A = np.array([[0.5, 0.2], [-0.1, 0.3]])


def affine_cell():
    return deqcore.make_cell(AFFINE_A, np.eye(2), np.zeros(2), activation='identity')


def test_config_validation():
    with pytest.raises(ArgumentError):
        SolverConfig(method='newton')
    with pytest.raises(ArgumentError):
        SolverConfig(tol=0)
    with pytest.raises(ArgumentError):
        SolverConfig(max_iters=0)
    with pytest.raises(ArgumentError):
        SolverConfig(anderson_memory=0)
    with pytest.raises(ArgumentError):
        SolverConfig(anderson_damping=1.5)

    assert SolverConfig(max_iters=30).with_max_iters(3).max_iters == 3


def test_relative_residual_at_fixed_point():
    z = np.array([[1.0, 2.0]])
    assert solvers.relative_residual(z, z)[0] == 0.0


def test_anderson_is_exact_on_affine_maps():
    x = np.array([1.0, -1.0])
    cfg = SolverConfig(method='anderson', tol=1e-10, max_iters=3, anderson_memory=3, anderson_ridge=0.0)
    result = solvers.solve(affine_cell(), x, np.zeros(2), cfg)

    expected = np.linalg.solve(np.eye(2) - AFFINE_A, x)
    assert result.converged
    assert result.iters <= 3
    assert np.allclose(result.z, expected, rtol=0, atol=1e-9)


def test_anderson_with_memory_one_is_naive(toy_model):
    X = np.random.default_rng(3).standard_normal((20, 2))
    Z0 = np.zeros((20, 4))
    naive = solvers.solve_batch(toy_model.cell, X, Z0, SolverConfig(method='naive', tol=1e-9, max_iters=40))
    anderson = solvers.solve_batch(toy_model.cell, X, Z0,
                                   SolverConfig(method='anderson', tol=1e-9, max_iters=40, anderson_memory=1))

    assert np.array_equal(naive.z, anderson.z)
    assert np.array_equal(naive.iters, anderson.iters)


def test_step_anderson_single_pair_is_naive_step():
    z, fz = np.array([0.0, 1.0]), np.array([0.5, 0.5])
    assert np.array_equal(solvers.step_anderson([(z, fz)], SolverConfig()), fz)


def test_step_anderson_falls_back_on_degenerate_history():
    z, fz = np.array([0.2, -0.4]), np.array([0.1, 0.3])
    assert np.array_equal(solvers.step_anderson([(z, fz), (z, fz)], SolverConfig()), fz)

    with pytest.raises(ArgumentError):
        solvers.step_anderson([], SolverConfig())


def test_anderson_needs_no_more_iterations_than_naive(toy_model):
    X = np.random.default_rng(8).standard_normal((100, 2))
    Z0 = np.zeros((100, 4))
    naive = solvers.solve_batch(toy_model.cell, X, Z0, SolverConfig(method='naive', tol=1e-6, max_iters=100))
    anderson = solvers.solve_batch(toy_model.cell, X, Z0, SolverConfig(method='anderson', tol=1e-6, max_iters=100))

    assert naive.all_converged and anderson.all_converged
    assert np.mean(anderson.iters <= naive.iters) >= 0.8


def test_broyden_scalar_root():
    cfg = SolverConfig(method='broyden', tol=1e-10, max_iters=3)
    result = solvers.fixed_point(lambda Z: 1.5 * Z - 1.0, np.zeros((1, 1)), cfg)
    assert result.iters[0] <= 3
    assert abs(result.z[0, 0] - 2.0) <= 1e-12


def test_step_broyden_first_step_is_naive():
    state = solvers.BroydenState.initial(3)
    z = np.array([0.0, 1.0, 2.0])
    g = np.array([0.5, -0.5, 0.1])
    assert np.allclose(solvers.step_broyden(state, z, g), z + g, rtol=0, atol=1e-15)


def test_step_broyden_stays_at_root():
    state = solvers.BroydenState.initial(2)
    z = np.array([0.4, -0.3])
    assert np.array_equal(solvers.step_broyden(state, z, np.zeros(2)), z)


@pytest.mark.parametrize('method', solvers.METHODS)
def test_methods_agree(toy_model, method):
    x = np.array([0.4, -1.2])
    reference = solvers.solve(toy_model.cell, x, np.zeros(4), SolverConfig(method='naive', tol=1e-12, max_iters=200))
    result = solvers.solve(toy_model.cell, x, np.zeros(4), SolverConfig(method=method, tol=1e-8, max_iters=200))
    assert result.converged
    assert np.linalg.norm(result.z - reference.z) <= 1e-6


@pytest.mark.parametrize('method', solvers.METHODS)
def test_methods_agree_on_random_contractions(method):
    rng = np.random.default_rng(33)
    reference_cfg = SolverConfig(method='naive', tol=1e-13, max_iters=5000)
    cfg = SolverConfig(method=method, tol=1e-9, max_iters=500)
    for cell_index in range(100):
        input_dim, hidden_dim = int(rng.integers(1, 5)), int(rng.integers(2, 9))
        model = deqcore.init_model(input_dim, hidden_dim, 2, gamma=float(rng.uniform(0.2, 0.8)), seed=cell_index)
        x = rng.uniform(-2.0, 2.0, input_dim)

        reference = solvers.solve(model.cell, x, np.zeros(hidden_dim), reference_cfg)
        result = solvers.solve(model.cell, x, np.zeros(hidden_dim), cfg)
        assert result.converged, cell_index
        assert np.linalg.norm(result.z - reference.z) <= 1e-6 * (1 + np.linalg.norm(reference.z)), cell_index


def test_naive_residual_trace_decreases(toy_model):
    result = solvers.solve(toy_model.cell, np.array([0.6, -0.8]), np.zeros(4),
                           SolverConfig(method='naive', tol=1e-10, max_iters=60))
    trace = [value for value in result.residual_trace if value > 1e-12]
    assert len(trace) > 3
    assert all(later < earlier for earlier, later in zip(trace, trace[1:]))


@pytest.mark.parametrize('method', solvers.METHODS)
def test_best_iterate_never_worse_than_start(toy_model, method):
    rng = np.random.default_rng(21)
    X = rng.standard_normal((30, 2)) * 2
    Z0 = rng.standard_normal((30, 4))
    start = solvers.relative_residual(Z0, deqcore.cell_forward(toy_model.cell, Z0, X))

    result = solvers.solve_batch(toy_model.cell, X, Z0, SolverConfig(method=method, tol=1e-9, max_iters=2))
    assert np.all(result.residual <= start)
    assert np.all(result.iters <= 2)


def test_converged_lanes_are_frozen(toy_model):
    x = np.array([[0.5, 0.5], [0.5, 0.5]])
    z_star = solvers.solve(toy_model.cell, x[0], np.zeros(4), SolverConfig(method='naive', tol=1e-12, max_iters=200)).z
    Z0 = np.vstack([z_star, np.zeros(4)])

    result = solvers.solve_batch(toy_model.cell, x, Z0, SolverConfig(method='naive', tol=1e-6, max_iters=100))
    assert result.iters[0] == 0
    assert result.iters[1] > 0
    assert np.array_equal(result.z[0], z_star)
    assert result.lane(0).residual_trace == ()


def test_iteration_budget_is_respected(toy_model):
    result = solvers.solve(toy_model.cell, np.array([1.0, 1.0]), np.zeros(4),
                           SolverConfig(method='naive', tol=1e-14, max_iters=3))
    assert result.iters == 3
    assert len(result.residual_trace) == 3
    assert not result.converged


def test_non_finite_values_name_iteration_and_lane():
    def fn(Z):
        out = Z * 0.5
        out[1, 0] = np.inf
        return out

    with pytest.raises(NumericalError) as error:
        solvers.fixed_point(fn, np.ones((3, 2)), SolverConfig(method='naive'))
    assert error.value.iteration == 0
    assert error.value.lane == 1


def test_non_finite_start_is_rejected(toy_model):
    with pytest.raises(NumericalError):
        solvers.solve(toy_model.cell, np.zeros(2), np.array([0.0, np.nan, 0.0, 0.0]), SolverConfig())
