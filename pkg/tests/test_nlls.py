import numpy as np
import pytest
from scipy.optimize import least_squares

from adaptire.fitting.nlls import FitProblem, FitStage, forward_jacobian, nlls_solve
from adaptire.exceptions import FitError


def _curve(obs, theta):
    x, y = obs[:, 0], obs[:, 1]
    return theta[0] * np.exp(-x / theta[1]) + theta[2] - y


@pytest.fixture
def decay_data():
    x = np.linspace(0.0, 10.0, 40)
    y = 3.0 * np.exp(-x / 2.5) + 0.4
    return np.column_stack([x, y])


def test_exact_recovery(decay_data):
    res = nlls_solve(FitProblem(decay_data, [1.0, 1.0, 0.0]), _curve)
    assert res.converged
    np.testing.assert_allclose(res.coefficients, [3.0, 2.5, 0.4], rtol=1e-9)
    assert res.residual_rms < 1e-9


def test_agrees_with_independent_solver(decay_data, rng):
    noisy = decay_data.copy()
    noisy[:, 1] += 0.05 * rng.standard_normal(len(noisy))
    ours = nlls_solve(FitProblem(noisy, [1.0, 1.0, 0.0]), _curve)
    ref = least_squares(lambda th: _curve(noisy, th), [1.0, 1.0, 0.0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    np.testing.assert_allclose(ours.coefficients, ref.x, rtol=1e-6)


def test_cost_never_increases(decay_data):
    res = nlls_solve(FitProblem(decay_data, [0.5, 5.0, 1.0]), _curve)
    assert all(b <= a for a, b in zip(res.cost_history, res.cost_history[1:]))


def test_bounds_respected(decay_data):
    problem = FitProblem(decay_data, [1.0, 1.0, 0.0], upper=np.array([2.0, np.inf, np.inf]))
    res = nlls_solve(problem, _curve)
    assert res.coefficients[0] <= 2.0


def test_too_few_observations():
    with pytest.raises(FitError, match="at least 6"):
        FitProblem(np.zeros((5, 2)), [1.0, 1.0, 0.0])


def test_non_finite_initial_residual_names_observation(decay_data):
    bad = decay_data.copy()
    bad[7, 1] = np.nan
    with pytest.raises(FitError, match="observation 7"):
        nlls_solve(FitProblem(bad, [1.0, 1.0, 0.0]), _curve)


def test_rank_deficient_start():
    x = np.linspace(0, 1, 20)
    obs = np.column_stack([x, 2 * x])

    def dependent(o, th):
        return (th[0] + th[1]) * o[:, 0] - o[:, 1]

    with pytest.raises(FitError, match="singular"):
        nlls_solve(FitProblem(obs, [1.0, 1.0], stage=FitStage.PRESSURE_TREE), dependent)


def test_insensitive_coefficient_named():
    x = np.linspace(0, 1, 20)
    obs = np.column_stack([x, 2 * x])
    with pytest.raises(FitError, match="gain"):
        nlls_solve(FitProblem(obs, [1.0, 1.0], names=["slope", "gain"]), lambda o, th: th[0] * o[:, 0] - o[:, 1])


def test_forward_jacobian_linear_is_exact():
    a = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.25]])
    theta = np.array([0.3, -0.7])
    r0 = a @ theta
    jac = forward_jacobian(lambda th: a @ th, theta, r0, np.ones(2))
    np.testing.assert_allclose(jac, a, rtol=1e-7)


def test_failed_trial_steps_are_rejected(decay_data):
    calls = {"n": 0}

    def fragile(obs, th):
        calls["n"] += 1
        if th[1] <= 0:
            raise ValueError("time constant must be positive")
        return _curve(obs, th)

    res = nlls_solve(FitProblem(decay_data, [10.0, 0.05, 0.0]), fragile)
    assert np.all(np.isfinite(res.coefficients))
    assert res.coefficients[1] > 0
