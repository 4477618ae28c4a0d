import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from afsched.solver.simplex import INFEASIBLE, OPTIMAL, simplex

INF = np.inf


def dual_bound(c, A, lo, hi, lb, ub, duals):
    """Objective of the dual point built from row multipliers ``duals``;
    an upper bound on every feasible primal objective."""
    d = c - A.T @ duals
    total = 0.0
    for y, a, b in zip(duals, lo, hi):
        if y > 0:
            total += y * b
        elif y < 0:
            total += y * a
    for dj, a, b in zip(d, lb, ub):
        total += dj * (b if dj > 0 else a)
    return total


def test_single_bounded_variable():
    sol = simplex([1.0], np.zeros((0, 1)), [], [], [0.0], [1.0])
    assert sol.status == OPTIMAL
    assert sol.values[0] == pytest.approx(1.0, abs=1e-9)
    assert sol.objective == pytest.approx(1.0, abs=1e-9)


def test_degenerate_optimum():
    sol = simplex([1.0, 1.0], [[1.0, 1.0]], [-INF], [1.0], [0, 0], [1, 1])
    assert sol.objective == pytest.approx(1.0, abs=1e-9)


def test_two_variable_example():
    # corners of x+y<=4, x+3y<=6: (0,0)=0, (4,0)=12, (3,1)=11, (0,2)=4
    sol = simplex([3.0, 2.0], [[1.0, 1.0], [1.0, 3.0]], [-INF, -INF], [4.0, 6.0],
                  [0, 0], [100, 100])
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(12.0, abs=1e-9)
    assert np.allclose(sol.values, [4.0, 0.0], atol=1e-9)
    # dual: y1=3 on the first row, the second row is slack
    assert np.allclose(sol.duals, [3.0, 0.0], atol=1e-9)


def test_equality_and_ranged_rows():
    # max x + 2y, x + y = 3, 1 <= x - y <= 2, bounds [0, 5]
    # y = 3 - x, x - y = 2x - 3 in [1, 2] -> x in [2, 2.5]; obj = 6 - x -> x = 2
    sol = simplex([1.0, 2.0], [[1.0, 1.0], [1.0, -1.0]], [3.0, 1.0], [3.0, 2.0],
                  [0, 0], [5, 5])
    assert sol.objective == pytest.approx(4.0, abs=1e-9)
    assert np.allclose(sol.values, [2.0, 1.0], atol=1e-9)


def test_greater_equal_rows_need_phase_one():
    # min x + y (as max -x-y) with x + 2y >= 4, 3x + y >= 6 -> (1.6, 1.2), cost 2.8
    sol = simplex([-1.0, -1.0], [[1.0, 2.0], [3.0, 1.0]], [4.0, 6.0], [INF, INF],
                  [0, 0], [10, 10])
    assert sol.objective == pytest.approx(-2.8, abs=1e-9)
    assert np.allclose(sol.values, [1.6, 1.2], atol=1e-9)


def test_infeasible_status():
    sol = simplex([1.0], [[1.0]], [2.0], [INF], [0.0], [1.0])
    assert sol.status == INFEASIBLE
    assert sol.values is None


def test_negative_lower_bounds():
    # max -x with x in [-3, 2] and x >= -1.5 via a row
    sol = simplex([-1.0], [[1.0]], [-1.5], [INF], [-3.0], [2.0])
    assert sol.values[0] == pytest.approx(-1.5, abs=1e-9)


def test_sparse_input_accepted():
    A = sp.csr_matrix([[1.0, 1.0], [1.0, 3.0]])
    sol = simplex([3.0, 2.0], A, [-INF, -INF], [4.0, 6.0], [0, 0], [100, 100])
    assert sol.objective == pytest.approx(12.0, abs=1e-9)


def test_infinite_bounds_rejected():
    with pytest.raises(ValueError):
        simplex([1.0], [[1.0]], [-INF], [1.0], [0.0], [INF])


def test_deterministic_pivots():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 20))
    args = (rng.normal(size=20), A, np.full(12, -INF), np.abs(A).sum(axis=1), np.zeros(20),
            np.ones(20))
    a, b = simplex(*args), simplex(*args)
    assert a.iterations == b.iterations
    assert np.array_equal(a.values, b.values)


def random_lp(rng):
    m, n = rng.integers(1, 15), rng.integers(1, 15)
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.6)
    lb = rng.uniform(-5, 0, n)
    ub = lb + rng.uniform(0.5, 6, n)
    x0 = rng.uniform(lb, ub)
    ax = A @ x0
    lo = np.where(rng.random(m) < 0.5, ax - rng.uniform(0, 3, m), -INF)
    hi = np.where(rng.random(m) < 0.7, ax + rng.uniform(0, 3, m), INF)
    eq = rng.random(m) < 0.1
    lo[eq], hi[eq] = ax[eq], ax[eq]
    return rng.normal(size=n), A, lo, hi, lb, ub, x0


def test_weak_duality_and_agreement_on_random_lps():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        c, A, lo, hi, lb, ub, x0 = random_lp(rng)
        sol = simplex(c, A, lo, hi, lb, ub)
        assert sol.status == OPTIMAL
        bound = dual_bound(c, A, lo, hi, lb, ub, sol.duals)
        # any feasible point, and the optimum itself, stay below the dual bound
        assert c @ x0 <= bound + 1e-7
        assert sol.objective <= bound + 1e-7
        assert sol.objective == pytest.approx(bound, abs=1e-7)
        # primal feasibility
        ax = A @ sol.values
        assert np.all(ax >= lo - 1e-7) and np.all(ax <= hi + 1e-7)
        assert np.all(sol.values >= lb - 1e-9) and np.all(sol.values <= ub + 1e-9)
        # independent reference
        A_ub = np.vstack([A[np.isfinite(hi)], -A[np.isfinite(lo)]])
        b_ub = np.concatenate([hi[np.isfinite(hi)], -lo[np.isfinite(lo)]])
        ref = linprog(-c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                      bounds=list(zip(lb, ub)), method="highs")
        assert -ref.fun == pytest.approx(sol.objective, abs=1e-7)
