import numpy as np

from trading_bench.configurations import LP_MAX_PIVOTS
from trading_bench.core.errors import NumericalFailureError, UnsupportedProblemError


class SimplexSolver:
    r"""
    Dense tableau simplex for :math:`\max c^T x` subject to :math:`A x \leq b`, :math:`x \geq 0`, with
    :math:`b \geq 0` so that the slack basis is feasible.

    Pivoting follows Bland's rule (lowest-index entering column, lowest-index basic variable among tied
    ratios), which cannot cycle on degenerate problems.

    Parameters
    ----------
    c : array_like
        Objective coefficients, length n.
    A : array_like
        Constraint matrix, m x n.
    b : array_like
        Nonnegative right-hand side, length m.
    tol : `float`, default=1e-12
        Threshold below which reduced costs and pivot entries count as zero.
    max_pivots : `int`, optional
    """

    def __init__(self, c, A, b, tol=1e-12, max_pivots=LP_MAX_PIVOTS):
        A = np.asarray(A, dtype=float)
        self.m, self.n = A.shape
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if self.b.shape != (self.m,) or self.c.shape != (self.n,):
            raise ValueError(f"Simplex dimensions disagree: A is {A.shape}, b has shape {self.b.shape}, "
                             f"c has shape {self.c.shape}")
        if np.any(self.b < 0):
            raise UnsupportedProblemError("The tableau solver starts from the slack basis and so needs b >= 0; "
                                          f"the smallest entry of b is {self.b.min()}")
        self.tol = tol
        self.max_pivots = max_pivots
        self.tableau = self._build_tableau(A)
        self.basic_vars = list(range(self.n, self.n + self.m))
        self.pivots = 0

    def _build_tableau(self, A):
        tableau = np.zeros((self.m + 1, self.n + self.m + 1))
        tableau[:-1, :self.n] = A
        tableau[:-1, self.n:-1] = np.eye(self.m)
        tableau[:-1, -1] = self.b
        tableau[-1, :self.n] = -self.c  # maximization: reduced costs are negated
        return tableau

    def _pivot(self, row, col):
        pivot_row = self.tableau[row] / self.tableau[row, col]
        self.tableau -= np.outer(self.tableau[:, col], pivot_row)
        self.tableau[row] = pivot_row
        self.basic_vars[row] = col
        self.pivots += 1

    def _entering(self):
        candidates = np.nonzero(self.tableau[-1, :-1] < -self.tol)[0]
        return int(candidates[0]) if candidates.size else None

    def _leaving(self, col):
        column = self.tableau[:-1, col]
        rows = np.nonzero(column > self.tol)[0]
        if rows.size == 0:
            return None
        ratios = self.tableau[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + self.tol * max(1., abs(best))]
        return int(min(tied, key=lambda row: self.basic_vars[row]))

    def solve(self):
        """
        Runs the simplex method to optimality.

        Returns
        -------
        `tuple`
            (optimal primal vector of length n, optimal objective value).

        Raises
        ------
        `trading_bench.core.errors.NumericalFailureError`
            If the pivot budget runs out or the problem looks unbounded (impossible for bounded problems, so it
            signals numerical trouble).
        """
        while True:
            col = self._entering()
            if col is None:
                break
            row = self._leaving(col)
            if row is None:
                raise NumericalFailureError(f"Column {col} is unbounded after {self.pivots} pivots",
                                            {"rows": self.m, "columns": self.n})
            if self.pivots >= self.max_pivots:
                raise NumericalFailureError(f"Simplex did not converge within {self.max_pivots} pivots",
                                            {"rows": self.m, "columns": self.n})
            self._pivot(row, col)
        return self._get_solution()

    def _get_solution(self):
        x = np.zeros(self.n + self.m)
        for row, var in enumerate(self.basic_vars):
            x[var] = self.tableau[row, -1]
        return x[:self.n], float(self.tableau[-1, -1])
