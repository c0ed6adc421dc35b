"""
Augmented offline benchmark: the fractional trading LP solved by dense simplex, and an exhaustive integral
optimum for tiny instances.
"""

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from trading_bench.analysis.simplex import SimplexSolver
from trading_bench.configurations import (AUGMENT_MODES, BRUTE_FORCE_MAX_BUNDLES, BRUTE_FORCE_MAX_STATES,
                                          BRUTE_FORCE_MAX_STEPS, LP_MAX_PIVOTS, LP_PERTURBATION, LP_SIZE_CAP)
from trading_bench.core.errors import NumericalFailureError, SizeCapError, UnsupportedProblemError
from trading_bench.core.types import EventKind

FEASIBILITY_TOLERANCE = 1e-7


@dataclass(frozen=True)
class LPProblem:
    r"""
    Dense materialization of the trading LP, all rows of the form :math:`A z \leq b`.

    Columns are the allocation variables (one per menu entry, in event order) followed by the inventory
    variables :math:`\bar{r}_i^t` for t = 0..T (index `offset + t n + i`). Rows are the inventory balance
    rows (n per step), the one-bundle rows (one per step) and the cap rows :math:`\bar{r}^t \leq w`
    (n per step, t = 1..T).
    """
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    senses: tuple
    offset: int
    n: int
    T: int  # noqa
    augment: str

    @property
    def num_rows(self):
        return self.A.shape[0]

    @property
    def num_columns(self):
        return self.A.shape[1]

    def inventory_column(self, t, i):
        return self.offset + t * self.n + i


@dataclass(frozen=True)
class OfflineResult:
    """Optimal augmented profit, with the primal allocation when the LP solver produced it."""
    value: float
    method: str
    allocation: Optional[np.ndarray] = None

    def to_json(self):
        return {"value": self.value, "method": self.method}


def _objective_values(inst, event, augment):
    values = event.values.astype(float)
    if event.kind is EventKind.CUSTOMER:
        return values / (1 + inst.eps) if augment == "customers" else values
    return -(1 + inst.eps) * values if augment == "suppliers" else -values


def _check_augment(augment):
    if augment not in AUGMENT_MODES:
        raise ValueError(f"Invalid augmentation {augment!r}; acceptable are {AUGMENT_MODES}")


def build_lp(inst, augment="suppliers", size_cap=LP_SIZE_CAP):
    """
    Materializes the offline trading LP of an instance.

    Parameters
    ----------
    inst : `trading_bench.core.types.Instance`
    augment : {"suppliers", "customers"}, default="suppliers"
        Where the (1+eps) handicap goes.
            - "suppliers" inflates supplier values by (1+eps).
            - "customers" divides customer values by (1+eps).
    size_cap : `int`, default=2000
        Largest admissible number of columns.

    Returns
    -------
    `LPProblem`
        Initial inventory is pinned by lower = upper = w on the t = 0 inventory columns.

    Raises
    ------
    `trading_bench.core.errors.SizeCapError`
        If the LP would have more than `size_cap` columns.
    """
    _check_augment(augment)
    n, T = inst.n, inst.T  # noqa
    offset = sum(len(event.menu) for event in inst.events)
    num_columns = offset + n * (T + 1)
    if num_columns > size_cap:
        raise SizeCapError(f"The offline LP of this instance has {num_columns} columns, above the cap of "
                           f"{size_cap}; shorten the instance or raise the cap")
    num_rows = 2 * n * T + T
    A = np.zeros((num_rows, num_columns))
    b = np.zeros(num_rows)
    c = np.zeros(num_columns)
    w = np.array(inst.catalog.w, dtype=float)

    column = 0
    cap_row = n * T + T
    for t, event in enumerate(inst.events):
        menu_columns = np.arange(column, column + len(event.menu))
        c[menu_columns] = _objective_values(inst, event, augment)
        rows = np.arange(n * t, n * (t + 1))
        sign = 1. if event.kind is EventKind.CUSTOMER else -1.
        A[np.ix_(rows, menu_columns)] = sign * event.counts.T
        before = offset + t * n + np.arange(n)
        after = before + n
        A[rows, after] = 1.
        A[rows, before] = -1.
        A[n * T + t, menu_columns] = 1.
        b[n * T + t] = 1.
        A[cap_row + n * t + np.arange(n), after] = 1.
        b[cap_row + n * t:cap_row + n * (t + 1)] = w
        column += len(event.menu)

    lower = np.zeros(num_columns)
    upper = np.full(num_columns, np.inf)
    lower[offset:offset + n] = w
    upper[offset:offset + n] = w
    return LPProblem(A=A, b=b, c=c, lower=lower, upper=upper, senses=("<=",) * num_rows, offset=offset, n=n,
                     T=T, augment=augment)


def _solve_reduced(A, b, c, max_pivots):
    z, value = SimplexSolver(c, A, b, max_pivots=max_pivots).solve()
    residual = A @ z - b
    scale = max(1., float(np.max(np.abs(b), initial=0.)))
    if np.any(residual > FEASIBILITY_TOLERANCE * scale) or np.any(z < -FEASIBILITY_TOLERANCE):
        raise NumericalFailureError("Simplex returned an infeasible point",
                                    {"max_residual": float(np.max(residual, initial=0.))})
    return z, value


def solve_lp(lp, max_pivots=LP_MAX_PIVOTS):
    """
    Solves an `LPProblem` to optimality.

    Fixed columns are substituted into the right-hand side; the remaining problem starts from the slack basis.
    On numerical trouble the right-hand side is perturbed deterministically and the solve is retried once.

    Returns
    -------
    `OfflineResult`
        `allocation` holds all columns, fixed ones included.

    Raises
    ------
    `trading_bench.core.errors.UnsupportedProblemError`
        If substitution leaves a negative right-hand side (not the case for LPs built by `build_lp`).
    `trading_bench.core.errors.NumericalFailureError`
        If the retry fails too; diagnostics include the condition number of the constraint matrix.
    """
    fixed = lp.lower == lp.upper
    free = ~fixed
    b = lp.b - lp.A[:, fixed] @ lp.lower[fixed]
    if np.any(b < 0):
        raise UnsupportedProblemError(f"Substituting the fixed columns leaves b with minimum {b.min()}; only "
                                      f"problems whose origin is feasible are supported")
    A = lp.A[:, free]
    c = lp.c[free]
    constant = float(lp.c[fixed] @ lp.lower[fixed])
    if A.shape[1] == 0:
        return OfflineResult(value=max(0., constant), method="simplex", allocation=lp.lower.copy())

    try:
        z, value = _solve_reduced(A, b, c, max_pivots)
    except NumericalFailureError as error:
        warnings.warn(f"Simplex failed ({error}); retrying with a perturbed right-hand side")
        perturbation = LP_PERTURBATION * (1 + np.arange(len(b)) / max(1, len(b)))
        try:
            z, value = _solve_reduced(A, b + perturbation, c, max_pivots)
        except NumericalFailureError as retry_error:
            diagnostics = dict(retry_error.diagnostics)
            diagnostics["condition_number"] = float(np.linalg.cond(A))
            raise NumericalFailureError("Simplex failed twice on the offline LP", diagnostics) from retry_error

    allocation = lp.lower.copy()
    allocation[free] = z
    value += constant
    assert value > -FEASIBILITY_TOLERANCE * max(1., float(np.sum(np.abs(lp.c)))), \
        f"the all-zero allocation is feasible, yet the LP optimum is {value}"
    return OfflineResult(value=max(0., value), method="simplex", allocation=allocation)


def brute_force_opt(inst, augment="suppliers", max_steps=BRUTE_FORCE_MAX_STEPS,
                    max_bundles=BRUTE_FORCE_MAX_BUNDLES, max_states=BRUTE_FORCE_MAX_STATES):
    """
    Exact optimum over integral policies by exhaustive search.

    Each event is skipped or trades exactly one menu entry; customers can only buy bundles in stock and
    supplier purchases are clamped at the caps. Search is memoized on (step, inventory).

    Raises
    ------
    `trading_bench.core.errors.SizeCapError`
        If T, the total menu length or the number of inventory states exceed their caps.
    """
    _check_augment(augment)
    num_bundles = sum(len(event.menu) for event in inst.events)
    num_states = int(np.prod([cap + 1 for cap in inst.catalog.w]))
    if inst.T > max_steps or num_bundles > max_bundles or num_states > max_states:
        raise SizeCapError(f"Brute force is limited to T <= {max_steps}, {max_bundles} bundles and {max_states} "
                           f"inventory states, but the instance has T = {inst.T}, {num_bundles} bundles and "
                           f"{num_states} states")
    caps = inst.catalog.caps
    events = [(event, _objective_values(inst, event, augment)) for event in inst.events]

    @lru_cache(maxsize=None)
    def best(t, r):
        if t == len(events):
            return 0.
        event, values = events[t]
        inventory = np.array(r, dtype=np.int64)
        result = best(t + 1, r)
        for counts, value in zip(event.counts, values):
            if event.kind is EventKind.CUSTOMER:
                if np.all(inventory >= counts):
                    result = max(result, value + best(t + 1, tuple(int(k) for k in inventory - counts)))
            else:
                after = np.minimum(inventory + counts, caps)
                result = max(result, value + best(t + 1, tuple(int(k) for k in after)))
        return result

    return OfflineResult(value=float(best(0, tuple(inst.catalog.w))), method="brute-force")
