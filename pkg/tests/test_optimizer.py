from itertools import product

import numpy as np
import pytest

from latticeskin.optimizer import NlpProblem, OptimizeOptions, OptimizerError, minimize

METHODS = ["slsqp", "sqp-diag", "projected-gradient"]


def quad(x):
    return float((x[0] - 2.0) ** 2), np.array([2 * (x[0] - 2.0)])


@pytest.mark.parametrize("method", METHODS)
def test_bound_active_optimum(method):
    res = minimize(NlpProblem(quad, [0.5], [0.0], [1.0]), OptimizeOptions(method=method, curvature=2.0))
    assert res.x[0] == pytest.approx(1.0, abs=1e-8)
    assert res.status == "converged"


def vertex_oracle(c, v):
    # LP optimum sits at a vertex of {0<=x<=1, sum x >= v}: enumerate 0/1 points and one fractional entry
    n = len(c)
    best = np.inf
    for bits in product([0.0, 1.0], repeat=n):
        x = np.array(bits)
        if x.sum() >= v - 1e-12:
            best = min(best, c @ x)
        for i in range(n):
            y = x.copy()
            y[i] = v - (x.sum() - x[i])
            if 0 <= y[i] <= 1:
                best = min(best, c @ y)
    return best


@pytest.mark.parametrize("n", [2, 4, 6])
def test_linear_program_matches_vertex_enumeration(rng, n):
    for _ in range(3):
        c = rng.uniform(0.1, 2.0, n)
        v = rng.uniform(0.5, n - 0.5)
        prob = NlpProblem(lambda x: (float(c @ x), c.copy()), np.ones(n), np.zeros(n), np.ones(n),
                          [lambda x: (float(v - x.sum()), -np.ones(n))])
        res = minimize(prob, OptimizeOptions(method="slsqp", max_iter=200, rtol=1e-12))
        assert res.fun == pytest.approx(vertex_oracle(c, v), rel=1e-6)
        assert np.all(res.x >= 0) and np.all(res.x <= 1)
        assert v - res.x.sum() <= 1e-6 * v


def rosenbrock(x):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return float(f), g


def test_rosenbrock():
    prob = NlpProblem(rosenbrock, [-1.2, 1.0], [-np.inf, -np.inf], [np.inf, np.inf])
    res = minimize(prob, OptimizeOptions(method="slsqp", max_iter=500, rtol=1e-14, window=5))
    assert np.linalg.norm(res.x - 1.0) < 1e-4


def compliance_like(x):
    # sum 1/x_i^3 weighted: a separable stand-in for a truss compliance
    w = np.array([1.0, 2.0, 3.0, 0.5])
    return float(np.sum(w / x ** 3)), -3 * w / x ** 4


@pytest.mark.parametrize("method", ["sqp-diag", "projected-gradient"])
def test_diagonal_methods_respect_constraint(method):
    n = 4
    prob = NlpProblem(compliance_like, np.full(n, 0.5), np.full(n, 1e-3), np.ones(n),
                      [lambda x: (float(x.sum() - 2.0), np.ones(n))])
    res = minimize(prob, OptimizeOptions(method=method, max_iter=300, move=0.1, curvature=4.0))
    assert res.x.sum() <= 2.0 * (1 + 1e-6)
    # stationarity: w_i / x_i^4 equal across components
    w = np.array([1.0, 2.0, 3.0, 0.5])
    x_star = 2.0 * w ** 0.25 / np.sum(w ** 0.25)
    assert np.allclose(res.x, x_star, rtol=2e-2)


def test_history_and_determinism():
    prob = lambda: NlpProblem(compliance_like, np.full(4, 0.5), np.full(4, 1e-3), np.ones(4),
                              [lambda x: (float(x.sum() - 2.0), np.ones(4))])
    a = minimize(prob(), OptimizeOptions(max_iter=40, curvature=4.0))
    b = minimize(prob(), OptimizeOptions(max_iter=40, curvature=4.0))
    assert [h["f"] for h in a.history] == [h["f"] for h in b.history]
    assert np.array_equal(a.x, b.x)
    assert a.status in {"converged", "max-iter", "stalled"}


def test_nan_aborts_with_iterate():
    prob = NlpProblem(lambda x: (float("nan"), np.zeros(1)), [0.5], [0.0], [1.0])
    with pytest.raises(OptimizerError) as err:
        minimize(prob)
    assert err.value.x is not None


def test_bad_inputs():
    with pytest.raises(ValueError):
        NlpProblem(quad, [2.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        NlpProblem(quad, [0.5], [1.0], [0.0])
    with pytest.raises(ValueError):
        minimize(NlpProblem(quad, [0.5], [0.0], [1.0]), OptimizeOptions(method="nope"))
