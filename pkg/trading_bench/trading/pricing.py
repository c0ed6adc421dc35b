"""
Known-valuation trading engine: exponential inventory-based prices, a demand step for each arriving
customer or supplier, and the fold over an instance that produces a `Trace`.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from trading_bench.configurations import OVERFLOW_EXPONENT, TAU
from trading_bench.core.errors import AssumptionError, InventoryBreachError, NumericalFailureError
from trading_bench.core.types import EventKind, Trace, TraceStep, Violation, signed_profit
from trading_bench.core.validation import validate_instance

MODES = ("strict", "warn")
LARGE_INVENTORY_TAG = "large-inventory-violated"


@dataclass
class EngineState:
    """Mutable engine state: integral inventory `r`, step counter `t`; prices are derived from `r`."""
    catalog: object
    params: object
    r: np.ndarray
    t: int = 0

    @classmethod
    def full(cls, catalog, params):
        """Initial state: every inventory coordinate at its cap."""
        return cls(catalog=catalog, params=params, r=np.array(catalog.w, dtype=np.int64))


def prices(state):
    r"""
    Returns the price per unit of every item type at the current inventory.

    Parameters
    ----------
    state : `EngineState`

    Returns
    -------
    `numpy.ndarray`
        :math:`x_i = \frac{1}{d\mu}\left(\exp\left((1 - r_i/w_i)\,\eta\right) - 1\right)`, evaluated with
        `numpy.expm1`. Nonnegative since :math:`r_i \leq w_i`.

    Raises
    ------
    `trading_bench.core.errors.NumericalFailureError`
        If some exponent exceeds the overflow guard (700), which only happens for very large eta.
    """
    params = state.params
    exponent = (1 - state.r / state.catalog.caps) * params.eta
    largest = float(np.max(exponent)) if exponent.size else 0.
    if largest > OVERFLOW_EXPONENT:
        raise NumericalFailureError(f"Price exponent {largest:.6g} exceeds the double-precision guard "
                                    f"{OVERFLOW_EXPONENT}; reduce v, d or eta for this run",
                                    {"eta": params.eta, "mu": params.mu, "d": params.d})
    return np.expm1(exponent) / (params.d * params.mu)


def price(state, i):
    """Price per unit of item type `i`."""
    return float(prices(state)[i])


def bundle_price(state, bundle):
    """Sum of the bundle's counts times the current unit prices."""
    if len(bundle.counts) != state.catalog.n:
        raise ValueError(f"Bundle has {len(bundle.counts)} counts but the catalog has {state.catalog.n} item types")
    return float(np.dot(np.array(bundle.counts, dtype=float), prices(state)))


def check_large_inventory(inst, params):
    r"""
    Lists every (t, s, i) where the inventory cap is too small for the bundle.

    The large-inventory assumption requires :math:`w_i \geq (8\eta/\varepsilon) \cdot a_{s,i}` for every
    bundle of every event (customers and suppliers).

    Returns
    -------
    `list` of `trading_bench.core.types.Violation`
        Empty if and only if the assumption holds.
    """
    factor = 8 * params.eta / params.eps
    caps = np.array(inst.catalog.w, dtype=float)
    violations = []
    for t, event in enumerate(inst.events):
        shortfall = caps[None, :] - factor * event.counts
        for s, i in zip(*np.nonzero(shortfall < 0)):
            violations.append(Violation("large inventory",
                                        f"w[{i}] = {inst.catalog.w[i]} < (8 eta / eps) * a = "
                                        f"{factor * event.counts[s, i]:.6g} at step {t}, bundle {s}",
                                        t=t, s=int(s), i=int(i), slack=float(shortfall[s, i])))
    return violations


def choose_customer_bundle(event, x, params):
    """
    Customer demand step at prices `x`: returns (s*, P, threshold, utility) for the chosen bundle.

    The threshold is max{1, P} under the floored rule and P under the standard rule; ties go to the
    lowest menu index.
    """
    bundle_prices = event.counts @ x
    thresholds = np.maximum(1., bundle_prices) if params.customer_rule == "floored" else bundle_prices
    utilities = event.values - thresholds
    s = int(np.argmax(utilities))
    return s, float(bundle_prices[s]), float(thresholds[s]), float(utilities[s])


def choose_supplier_bundle(event, x, params):
    """Supplier demand step at prices `x`: returns (s*, P, utility) with utility P/(1+eps) - v."""
    bundle_prices = event.counts @ x
    utilities = bundle_prices / (1 + params.eps) - event.values
    s = int(np.argmax(utilities))
    return s, float(bundle_prices[s]), float(utilities[s])


def remove_inventory(state, counts):
    """Decrement inventory by a bundle; never clamps below zero."""
    short = np.nonzero(state.r < counts)[0]
    if short.size:
        i = int(short[0])
        raise InventoryBreachError(state.t, i, int(state.r[i]), int(counts[i]))
    state.r = state.r - counts


def add_inventory(state, counts):
    """Increment inventory by a bundle, discarding units above the caps (free disposal)."""
    state.r = np.minimum(state.r + counts, state.catalog.caps)


def record_step(state, kind, chosen, traded, inventory_sold, P, paid, value, r_before, x_before):
    return TraceStep(t=state.t, kind=kind, chosen=chosen, traded=traded, inventory_sold=inventory_sold,
                     P=P, price=paid, value=value, r_before=r_before, r_after=state.r,
                     x_before=x_before, x_after=prices(state))


def step_customer(state, event, tau=TAU):
    """
    Processes one customer.

    Chooses the bundle maximizing value minus max{1, bundle price} (lowest index on ties) and sells it at its
    stated value if that utility is at least -`tau`. `P` is recorded for the chosen bundle even without a sale.

    Parameters
    ----------
    state : `EngineState`
        Mutated in place.
    event : `trading_bench.core.types.Event`
    tau : `float`

    Returns
    -------
    `trading_bench.core.types.TraceStep`

    Raises
    ------
    `trading_bench.core.errors.InventoryBreachError`
        If the sale would make some inventory coordinate negative.
    """
    x_before = prices(state)
    r_before = state.r.copy()
    s, P, threshold, utility = choose_customer_bundle(event, x_before, state.params)
    traded = utility >= -tau
    value = float(event.values[s])
    if traded:
        remove_inventory(state, event.counts[s])
    step = record_step(state, EventKind.CUSTOMER, s, traded, traded, P, value if traded else 0., value,
                         r_before, x_before)
    state.t += 1
    return step


def step_supplier(state, event, tau=TAU):
    """
    Processes one supplier: buys the bundle maximizing P/(1+eps) - v if that is at least -`tau`,
    pays its stated value, and adds it to inventory with the min-clamp at the caps.
    """
    x_before = prices(state)
    r_before = state.r.copy()
    s, P, utility = choose_supplier_bundle(event, x_before, state.params)
    traded = utility >= -tau
    value = float(event.values[s])
    if traded:
        add_inventory(state, event.counts[s])
    step = record_step(state, EventKind.SUPPLIER, s, traded, False, P, value if traded else 0., value,
                         r_before, x_before)
    state.t += 1
    return step


def prepare_run(inst, params, mode):
    """
    Validates an instance against engine parameters before a run and returns the trace tags.

    Raises
    ------
    `ValueError`
        For an invalid instance, an unknown mode, or parameters that do not match the instance.
    `trading_bench.core.errors.AssumptionError`
        In 'strict' mode when the large-inventory assumption fails.
    """
    if mode not in MODES:
        raise ValueError(f"Invalid assumption mode {mode!r}; acceptable are {MODES}")
    violations = validate_instance(inst)
    if violations:
        raise ValueError(f"Instance is invalid ({len(violations)} violation(s)); first: {violations[0].message}")
    if params.eps != inst.eps:
        raise ValueError(f"Engine eps = {params.eps} does not match the instance's eps = {inst.eps}")
    if params.v < inst.declared_v or params.d < inst.declared_d:
        raise ValueError(f"Engine bounds (v = {params.v}, d = {params.d}) are below the instance's declared "
                         f"bounds (v = {inst.declared_v}, d = {inst.declared_d})")

    assumption_violations = check_large_inventory(inst, params)
    if assumption_violations and mode == "strict":
        raise AssumptionError(assumption_violations)
    if assumption_violations:
        warnings.warn(f"Large-inventory assumption violated at {len(assumption_violations)} (step, bundle, item) "
                      f"entries; running anyway and tagging the trace")
        return (LARGE_INVENTORY_TAG,)
    return ()


def run(inst, params, mode="strict", tau=TAU):
    """
    Runs the known-valuation engine over an instance from full inventory.

    Parameters
    ----------
    inst : `trading_bench.core.types.Instance`
    params : `trading_bench.trading.configurations.EngineParams`
    mode : {"strict", "warn"}, default="strict"
        What to do when the large-inventory assumption fails.
            - "strict" raises `AssumptionError` before any event is processed.
            - "warn" issues a warning, runs anyway and tags the trace.
    tau : `float`, default=1e-9
        Tolerance for the "utility >= 0" trade tests.

    Returns
    -------
    `trading_bench.core.types.Trace`
        Every step, with profit = sum of values sold - sum of values bought.

    Raises
    ------
    `trading_bench.core.errors.InventoryBreachError`
        Propagated with the step index; cannot occur when the assumption holds.
    """
    tags = prepare_run(inst, params, mode)
    state = EngineState.full(inst.catalog, params)
    steps = []
    for event in inst.events:
        if event.kind is EventKind.CUSTOMER:
            steps.append(step_customer(state, event, tau))
        else:
            steps.append(step_supplier(state, event, tau))
    return Trace(instance=inst, params=params, steps=steps, profit=signed_profit(steps), algorithm="trade",
                 tags=tags)
