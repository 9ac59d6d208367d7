"""QP solver tests: exhaustive active-set enumeration oracle, KKT residuals,
warm starting, determinism, and infeasibility detection."""

import itertools

import numpy as np
import pytest

from bimanual.qp import QpProblem, QpSolution, QpSolver


def random_problem(rng, d=None, m_in=None, m_eq=None):
    """Random strictly feasible PD problem (a known interior point exists)."""
    d = d if d is not None else int(rng.integers(2, 9))
    m_in = m_in if m_in is not None else int(rng.integers(0, 11))
    m_eq = m_eq if m_eq is not None else int(rng.integers(0, min(3, d)))
    B = rng.normal(size=(d, d))
    H = B @ B.T + 0.1 * np.eye(d)
    g = rng.normal(size=d)
    x0 = rng.normal(size=d)
    A_in = rng.normal(size=(m_in, d))
    b_in = -(A_in @ x0) + rng.uniform(0.05, 1.0, size=m_in)
    A_eq = rng.normal(size=(m_eq, d))
    b_eq = -(A_eq @ x0)
    return QpProblem(H=H, g=g, A_eq=A_eq, b_eq=b_eq,
                     A_ineq=A_in, b_ineq=b_in)


def enumeration_oracle(problem):
    """Global optimum by enumerating every inequality active set and solving
    the equality-constrained subproblem; returns (x, objective)."""
    d = problem.dim
    m_in = problem.A_ineq.shape[0]
    best = None
    for r in range(m_in + 1):
        for act in itertools.combinations(range(m_in), r):
            A = np.vstack([problem.A_eq, problem.A_ineq[list(act)]])
            b = np.concatenate([problem.b_eq, problem.b_ineq[list(act)]])
            m = A.shape[0]
            if m > d:
                continue
            K = np.zeros((d + m, d + m))
            K[:d, :d] = problem.H
            K[:d, d:] = A.T
            K[d:, :d] = A
            try:
                sol = np.linalg.solve(K, np.concatenate([-problem.g, -b]))
            except np.linalg.LinAlgError:
                continue
            x = sol[:d]
            if m_in and np.min(problem.A_ineq @ x + problem.b_ineq) < -1e-9:
                continue
            if problem.b_eq.size and \
                    np.max(np.abs(problem.A_eq @ x + problem.b_eq)) > 1e-9:
                continue
            obj = 0.5 * x @ problem.H @ x + problem.g @ x
            if best is None or obj < best[1]:
                best = (x, obj)
    return best


class TestBasics:
    def test_unconstrained(self):
        sol = QpSolver().solve(QpProblem(H=np.eye(2), g=[-1.0, -1.0]))
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-6)

    def test_single_active_constraint(self):
        # min ||x||^2 s.t. x0 >= 1
        prob = QpProblem(H=2 * np.eye(2), g=np.zeros(2),
                         A_ineq=[[1.0, 0.0]], b_ineq=[-1.0])
        sol = QpSolver().solve(prob)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-8)

    def test_equality_only(self):
        prob = QpProblem(H=np.eye(3), g=np.zeros(3),
                         A_eq=[[1.0, 1.0, 1.0]], b_eq=[-3.0])
        sol = QpSolver().solve(prob)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, [1.0, 1.0, 1.0], atol=1e-8)

    def test_problem_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            QpProblem(H=[[1.0, 0.5], [0.0, 1.0]], g=[0.0, 0.0])
        with pytest.raises(ValueError):
            QpProblem(H=np.eye(3), g=np.zeros(2))


class TestOracleEquivalence:
    def test_200_random_problems(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(200):
            prob = random_problem(rng)
            oracle = enumeration_oracle(prob)
            assert oracle is not None, "generated problem should be feasible"
            sol = QpSolver(max_iterations=4000).solve(prob)
            assert sol.status == "optimal"
            assert abs(sol.objective(prob) - oracle[1]) <= 1e-6
            # KKT residuals at optimal status
            assert sol.primal_residual <= 1e-8
            assert sol.dual_residual <= 1e-8
            checked += 1
        assert checked == 200

    def test_complementary_slackness(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            prob = random_problem(rng)
            sol = QpSolver(max_iterations=4000).solve(prob)
            assert sol.status == "optimal"
            m_eq = prob.A_eq.shape[0]
            slack = prob.A_ineq @ sol.x + prob.b_ineq
            mult = sol.multipliers[m_eq:]
            assert np.max(np.abs(mult * slack), initial=0.0) <= 1e-6


class TestWarmStart:
    def test_sequential_hot_start(self):
        # a drifting problem sequence: warm-started solves stay optimal and
        # match cold solves
        rng = np.random.default_rng(3)
        base = random_problem(rng, d=8, m_in=10, m_eq=2)
        solver = QpSolver(max_iterations=4000)
        prev = None
        for k in range(20):
            g = base.g + 0.01 * k
            prob = QpProblem(H=base.H, g=g, A_eq=base.A_eq, b_eq=base.b_eq,
                             A_ineq=base.A_ineq, b_ineq=base.b_ineq)
            sol = solver.solve(prob, warm_start=prev)
            cold = QpSolver(max_iterations=4000).solve(
                QpProblem(H=base.H, g=g, A_eq=base.A_eq, b_eq=base.b_eq,
                          A_ineq=base.A_ineq, b_ineq=base.b_ineq))
            assert sol.status == "optimal"
            np.testing.assert_allclose(sol.x, cold.x, atol=1e-6)
            prev = sol.x

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        prob_spec = random_problem(rng, d=6, m_in=8, m_eq=1)

        def solve_once():
            p = QpProblem(H=prob_spec.H.copy(), g=prob_spec.g.copy(),
                          A_eq=prob_spec.A_eq.copy(), b_eq=prob_spec.b_eq.copy(),
                          A_ineq=prob_spec.A_ineq.copy(),
                          b_ineq=prob_spec.b_ineq.copy())
            return QpSolver().solve(p)

        a, b = solve_once(), solve_once()
        assert np.array_equal(a.x, b.x)
        assert a.status == b.status
        assert a.iterations == b.iterations


class TestInfeasible:
    def test_contradictory_rows(self):
        # x >= 1 and -x >= 1 cannot both hold
        prob = QpProblem(H=np.eye(1), g=np.zeros(1),
                         A_ineq=[[1.0], [-1.0]], b_ineq=[-1.0, -1.0])
        sol = QpSolver().solve(prob)
        assert sol.status == "infeasible"

    def test_best_iterate_returned(self):
        prob = QpProblem(H=np.eye(2), g=[1.0, 1.0],
                         A_eq=[[1.0, 0.0], [1.0, 0.0]], b_eq=[-1.0, -2.0])
        sol = QpSolver().solve(prob)
        assert sol.status == "infeasible"
        assert np.all(np.isfinite(sol.x))
