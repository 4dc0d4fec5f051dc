"""Exact rational simplex: optima, duals, infeasibility/unboundedness."""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import combinations

import pytest

from fairkep.simplexlp import LpInfeasible, LpUnbounded, lp_solve_exact

F = Fraction


class TestSmall:
    def test_basic_maximize(self):
        # max x + y s.t. x + 2y <= 4, 3x + y <= 6
        res = lp_solve_exact([1, 1], A_ub=[[1, 2], [3, 1]], b_ub=[4, 6])
        assert res.objective == F(14, 5)
        assert res.x == [F(8, 5), F(6, 5)]

    def test_equality_and_free_variable(self):
        # max y s.t. x + y = 1, y - x <= 0, x free
        res = lp_solve_exact(
            [0, 1], A_ub=[[-1, 1]], b_ub=[0], A_eq=[[1, 1]], b_eq=[1], free_vars=[0]
        )
        assert res.objective == F(1, 2)

    def test_infeasible(self):
        with pytest.raises(LpInfeasible):
            lp_solve_exact([1], A_ub=[[1], [-1]], b_ub=[F(-1), F(-1)])

    def test_unbounded(self):
        with pytest.raises(LpUnbounded):
            lp_solve_exact([1], A_ub=[[-1]], b_ub=[0])

    def test_degenerate_ties_terminate(self):
        # many redundant constraints through the same vertex (Bland's rule must
        # not cycle)
        A = [[1, 1], [2, 2], [3, 3], [1, 0], [0, 1]]
        b = [2, 4, 6, 1, 1]
        res = lp_solve_exact([1, 1], A_ub=A, b_ub=b)
        assert res.objective == 2

    def test_duals_certify_optimum(self):
        res = lp_solve_exact([1, 1], A_ub=[[1, 2], [3, 1]], b_ub=[4, 6])
        y = res.duals_ub
        # weak duality holds with equality at the optimum
        assert y[0] * 4 + y[1] * 6 == res.objective
        # dual feasibility: y^T A >= c
        assert y[0] * 1 + y[1] * 3 >= 1
        assert y[0] * 2 + y[1] * 1 >= 1
        assert all(v >= 0 for v in y)


def brute_vertex_optimum(c, A_ub, b_ub):
    """Enumerate basic feasible points of {Ax <= b, x >= 0} (exact)."""
    n = len(c)
    rows = [list(r) for r in A_ub] + [[F(1 if j == i else 0) for j in range(n)] for i in range(n)]
    rhs = list(b_ub) + [F(0)] * n
    best = None
    for combo in combinations(range(len(rows)), n):
        M = [[F(rows[i][j]) for j in range(n)] for i in combo]
        v = [F(rhs[i]) for i in combo]
        x = _solve_square(M, v)
        if x is None or any(xi < 0 for xi in x):
            continue
        if any(sum(F(A_ub[i][j]) * x[j] for j in range(n)) > b_ub[i] for i in range(len(A_ub))):
            continue
        val = sum(F(c[j]) * x[j] for j in range(n))
        if best is None or val > best:
            best = val
    return best


def _solve_square(M, v):
    n = len(v)
    M = [row[:] + [v[i]] for i, row in enumerate(M)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [a * inv for a in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return [M[i][n] for i in range(n)]


class TestRandomAgainstVertexEnumeration:
    def test_random_lps(self):
        rng = random.Random(3)
        tested = 0
        for _ in range(60):
            n = rng.randint(2, 4)
            m = rng.randint(2, 5)
            c = [F(rng.randint(-3, 5)) for _ in range(n)]
            A = [[F(rng.randint(-2, 4)) for _ in range(n)] for _ in range(m)]
            b = [F(rng.randint(0, 6)) for _ in range(m)]
            # keep the region bounded
            A.append([F(1)] * n)
            b.append(F(10))
            expected = brute_vertex_optimum(c, A, b)
            res = lp_solve_exact(c, A_ub=A, b_ub=b)
            assert res.objective == expected
            # primal feasibility of the returned point
            assert all(x >= 0 for x in res.x)
            for row, rhs in zip(A, b):
                assert sum(a * x for a, x in zip(row, res.x)) <= rhs
            # strong duality
            assert sum(y * rhs for y, rhs in zip(res.duals_ub, b)) == res.objective
            tested += 1
        assert tested == 60
