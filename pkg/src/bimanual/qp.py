"""Dense convex QP solver: operator-splitting iterations with an active-set
polishing step, built for warm-started sequential problems at control rate.

Problem form:

    min  1/2 x^T H x + g^T x
    s.t. A_eq x + b_eq = 0
         A_ineq x + b_ineq >= 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        d = self.g.size
        if self.H.shape != (d, d):
            raise ValueError(f"H must be {d}x{d}, got {self.H.shape}")
        if np.max(np.abs(self.H - self.H.T)) > 1e-10:
            raise ValueError("H must be symmetric")
        for name in ("A_eq", "A_ineq"):
            A = getattr(self, name)
            b = getattr(self, "b" + name[1:])
            if A is None:
                setattr(self, name, np.zeros((0, d)))
                setattr(self, "b" + name[1:], np.zeros(0))
            else:
                A = np.asarray(A, dtype=float).reshape(-1, d)
                b = np.asarray(b, dtype=float).reshape(A.shape[0])
                setattr(self, name, A)
                setattr(self, "b" + name[1:], b)

    @property
    def dim(self) -> int:
        return self.g.size


@dataclass
class QpSolution:
    x: np.ndarray
    status: str                      # optimal | max_iterations | infeasible
    iterations: int
    primal_residual: float
    dual_residual: float
    # Multipliers of the stacked [A_eq; A_ineq] rows, for slackness checks.
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def objective(self, problem: QpProblem) -> float:
        return 0.5 * self.x @ problem.H @ self.x + problem.g @ self.x


class QpSolver:
    """One instance per control loop; holds mutable iteration workspace."""

    def __init__(self, max_iterations: int = 200, eps: float = 1e-8,
                 rho: float = 0.1, sigma: float = 1e-6, alpha: float = 1.6):
        self.max_iterations = max_iterations
        self.eps = eps
        self.rho0 = rho
        self.sigma = sigma
        self.alpha = alpha
        self._y = None  # dual warm start carried between solves

    # -- internals ---------------------------------------------------------

    @staticmethod
    def _residuals(problem: QpProblem, x, y):
        r_eq = problem.A_eq @ x + problem.b_eq
        slack = problem.A_ineq @ x + problem.b_ineq
        r_prim = 0.0
        if r_eq.size:
            r_prim = max(r_prim, float(np.max(np.abs(r_eq))))
        if slack.size:
            r_prim = max(r_prim, float(max(0.0, -np.min(slack))))
        r_dual = float(np.max(np.abs(
            problem.H @ x + problem.g
            + problem.A_eq.T @ y[:problem.A_eq.shape[0]]
            + problem.A_ineq.T @ y[problem.A_eq.shape[0]:])))
        return r_prim, r_dual

    def _polish(self, problem: QpProblem, x, y, dual_seed: bool = False):
        """Equality-solve on the detected active set, then repair it: drop rows
        whose multiplier comes out sign-violating, add rows the candidate
        violates. Returns (x, y) or None.

        dual_seed starts from the strictly dual-active rows only — the right
        seed when y comes from the previous solve of a sequential problem;
        the default slack-based seed suits approximate splitting iterates.
        """
        m_eq = problem.A_eq.shape[0]
        m_in = problem.A_ineq.shape[0]
        scale = 1.0 + np.abs(problem.b_ineq)
        if dual_seed:
            active = set(np.where(y[m_eq:] < -1e-6)[0])
        else:
            slack = problem.A_ineq @ x + problem.b_ineq
            active = set(np.where((slack < 1e-4 * scale) | (y[m_eq:] < -1e-6))[0])
        for _ in range(40):
            act = sorted(active)
            A_act = np.vstack([problem.A_eq, problem.A_ineq[act]])
            b_act = np.concatenate([problem.b_eq, problem.b_ineq[act]])
            d, m = problem.dim, A_act.shape[0]
            if m > d:
                return None
            K = np.zeros((d + m, d + m))
            K[:d, :d] = problem.H
            K[:d, d:] = A_act.T
            K[d:, :d] = A_act
            dk = np.einsum("ii->i", K)
            dk[:d] += 1e-12
            dk[d:] -= 1e-12
            rhs = np.concatenate([-problem.g, -b_act])
            try:
                lu = scipy.linalg.lu_factor(K, check_finite=False)
            except scipy.linalg.LinAlgError:
                return None
            sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            # One step of iterative refinement tightens the KKT residual.
            sol += scipy.linalg.lu_solve(lu, rhs - K @ sol, check_finite=False)
            x_p = sol[:d]
            mult = sol[d + m_eq:]
            # Lower-bound rows: duals must be <= 0 in our stationarity convention.
            bad = [act[i] for i in range(len(act)) if mult[i] > 1e-7]
            slack_p = problem.A_ineq @ x_p + problem.b_ineq if m_in else np.zeros(0)
            rel = slack_p / scale if m_in else np.zeros(0)
            violated = [i for i in np.where(rel < -1e-9)[0] if i not in active]
            if not bad and not violated:
                y_p = np.zeros(m_eq + m_in)
                y_p[:m_eq] = sol[d:d + m_eq]
                y_p[m_eq + np.array(act, dtype=int)] = np.minimum(mult, 0.0) if act else 0.0
                return x_p, y_p
            # Single-row repair: wholesale swaps cycle on the degenerate sets
            # that arise when many velocity rows saturate together.
            if violated:
                active.add(min(violated, key=lambda i: rel[i]))
            else:
                active.remove(max(bad, key=lambda i: mult[act.index(i)]))
        return None

    # -- public API --------------------------------------------------------

    def solve(self, problem: QpProblem, warm_start: Optional[np.ndarray] = None) -> QpSolution:
        d = problem.dim
        m_eq = problem.A_eq.shape[0]
        m_in = problem.A_ineq.shape[0]
        m = m_eq + m_in

        if m == 0:
            x = np.linalg.solve(problem.H, -problem.g)
            x -= np.linalg.solve(problem.H, problem.H @ x + problem.g)
            r_dual = float(np.max(np.abs(problem.H @ x + problem.g)))
            return QpSolution(x, "optimal", 0, 0.0, r_dual, np.zeros(0))

        # Hot start: sequential problems usually keep their active set, so a
        # single KKT solve seeded by the previous duals often lands on the
        # optimum before any splitting setup is paid for.
        if warm_start is not None and self._y is not None and self._y.size == m:
            polished = self._polish(
                problem, np.asarray(warm_start, dtype=float), self._y,
                dual_seed=True)
            if polished is not None:
                x_p, y_p = polished
                rp, rd = self._residuals(problem, x_p, y_p)
                if rp <= self.eps and rd <= self.eps:
                    self._y = y_p.copy()
                    return QpSolution(x_p, "optimal", 0, rp, rd, y_p)

        A_raw = np.vstack([problem.A_eq, problem.A_ineq])
        b_raw = np.concatenate([problem.b_eq, problem.b_ineq])
        # Row equilibration: unit-norm constraint rows keep the splitting
        # well-conditioned when row magnitudes span orders of magnitude. The
        # solution is unchanged; scaled duals are mapped back for residuals.
        row_scale = 1.0 / np.maximum(np.linalg.norm(A_raw, axis=1), 1e-10)
        A = row_scale[:, None] * A_raw
        b_s = row_scale * b_raw
        lo = -b_s.copy()
        hi = np.concatenate([-b_s[:m_eq], np.full(m_in, np.inf)])

        rho = np.full(m, self.rho0)
        rho[:m_eq] *= 1e3
        rho_inv = 1.0 / rho

        # Condensed splitting system: M x_t = sigma x - g + A^T (rho z - y),
        # then z_t = A x_t. Algebraically identical to the full KKT solve but
        # factors a d x d positive-definite matrix instead.
        H_sig = problem.H + self.sigma * np.eye(d)
        M = H_sig + A.T @ (rho[:, None] * A)
        cho = scipy.linalg.cho_factor(M, check_finite=False)

        x = np.zeros(d) if warm_start is None else np.asarray(warm_start, dtype=float).copy()
        z = np.clip(A @ x, lo, hi)
        if self._y is not None and self._y.size == m and warm_start is not None:
            # Stored duals are in original units; the iteration runs scaled.
            y = self._y / row_scale
        else:
            y = np.zeros(m)

        best = None
        it = 0
        stall_prim = np.inf
        last_polish = np.inf
        while it < self.max_iterations:
            # Small inner block: warm-started solves often converge within a
            # few iterations, so check residuals frequently at first.
            for _ in range(3 if it < 30 else 10):
                it += 1
                rhs = self.sigma * x - problem.g + A.T @ (rho * z - y)
                x_t = scipy.linalg.cho_solve(cho, rhs, check_finite=False)
                z_t = A @ x_t
                x = self.alpha * x_t + (1.0 - self.alpha) * x
                z_new = np.clip(self.alpha * z_t + (1.0 - self.alpha) * z + rho_inv * y, lo, hi)
                y = y + rho * (self.alpha * z_t + (1.0 - self.alpha) * z - z_new)
                z = z_new
            # Our stationarity convention: H x + g + A_eq^T y_eq + A_ineq^T y_in = 0
            # with y_in <= 0; the splitting produces y with the matching sign.
            y_u = row_scale * y
            r_prim, r_dual = self._residuals(problem, x, y_u)
            if best is None or r_prim + r_dual < best[2] + best[3]:
                best = (x.copy(), y_u.copy(), r_prim, r_dual)
            if r_prim <= self.eps and r_dual <= self.eps:
                self._y = y_u.copy()
                return QpSolution(x.copy(), "optimal", it, r_prim, r_dual, y_u.copy())
            # Attempt a polish only after meaningful progress since the last
            # one, so a hard solve is not swamped by failed polish passes.
            if r_prim <= 1e-3 and r_dual <= 1e-2 and r_prim + r_dual < 0.5 * last_polish:
                last_polish = r_prim + r_dual
                polished = self._polish(problem, x, y_u)
                if polished is not None:
                    x_p, y_p = polished
                    rp, rd = self._residuals(problem, x_p, y_p)
                    if rp <= self.eps and rd <= self.eps:
                        self._y = y_p.copy()
                        return QpSolution(x_p, "optimal", it, rp, rd, y_p)
            if it % 100 == 0:
                # Adaptive penalty: rebalance rho toward the lagging residual.
                ratio = r_prim / max(r_dual, 1e-14)
                if ratio > 10.0 or ratio < 0.1:
                    rho = np.clip(rho * np.sqrt(max(ratio, 1e-6)), 1e-6, 1e6)
                    rho_inv = 1.0 / rho
                    M = H_sig + A.T @ (rho[:, None] * A)
                    cho = scipy.linalg.cho_factor(M, check_finite=False)
                    stall_prim = np.inf
                # Stagnation above tolerance signals contradictory constraints.
                elif r_prim > 1e-6 and r_prim > 0.98 * stall_prim:
                    self._y = y_u.copy()
                    return QpSolution(x.copy(), "infeasible", it, r_prim, r_dual, y_u.copy())
                else:
                    stall_prim = r_prim

        x_b, y_b, rp, rd = best
        polished = self._polish(problem, x_b, y_b)
        if polished is not None:
            x_p, y_p = polished
            rpp, rdp = self._residuals(problem, x_p, y_p)
            if rpp <= self.eps and rdp <= self.eps:
                self._y = y_p.copy()
                return QpSolution(x_p, "optimal", self.max_iterations, rpp, rdp, y_p)
        self._y = y_b.copy()
        status = "infeasible" if rp > 1e-4 else "max_iterations"
        return QpSolution(x_b, status, self.max_iterations, rp, rd, y_b)


def dump_problem(problem: QpProblem, path) -> None:
    """Write a QpProblem to a plain matrix text file for offline inspection.

    Format: one section per matrix, '# name rows cols' header then one row of
    whitespace-separated values per line.
    """
    with open(path, "w") as fh:
        for name, M in (("H", problem.H), ("g", problem.g[None, :]),
                        ("A_eq", problem.A_eq), ("b_eq", problem.b_eq[None, :]),
                        ("A_ineq", problem.A_ineq), ("b_ineq", problem.b_ineq[None, :])):
            fh.write(f"# {name} {M.shape[0]} {M.shape[1]}\n")
            for row in M:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
