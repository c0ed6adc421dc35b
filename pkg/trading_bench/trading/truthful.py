"""
Incentive-compatible posted-price mechanism with a bidding phase.

The mechanism shares its inventory and price dynamics with `trading_bench.trading.pricing`; what changes is
the money: customers pay a posted price shifted by a random rho drawn once per run, and suppliers are paid
the discounted bundle price instead of their stated value.
"""

import math

import numpy as np

from trading_bench.configurations import TAU
from trading_bench.core.helper import tolerance
from trading_bench.core.types import Bundle, Event, EventKind, Trace, Violation, signed_profit
from trading_bench.trading.configurations import rho_distribution, truthful_params
from trading_bench.trading.pricing import (EngineState, add_inventory, choose_customer_bundle, choose_supplier_bundle,
                                           prepare_run, prices, record_step, remove_inventory)


def sample_rho(dist, seed):
    """
    Draws rho once from its finite distribution.

    Parameters
    ----------
    dist : `trading_bench.trading.configurations.RhoDistribution`
    seed : `int`
        Seed of the PCG64 generator; the same seed always gives the same draw.

    Returns
    -------
    `float`
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    index = rng.choice(len(dist.values), p=np.array(dist.probabilities))
    return dist.values[int(index)]


def step_customer_truthful(state, event, rho, tau=TAU):
    """
    Processes one customer under the posted-price mechanism.

    The bundle is chosen exactly as in the known-valuation engine. Inventory is decremented whenever
    v - max{1, P} >= 0 (the bidding phase), even if the customer then declines the posted price
    rho + max{1, P}; money changes hands only when v - (rho + max{1, P}) >= 0.

    Returns
    -------
    `trading_bench.core.types.TraceStep`
        With `inventory_sold` and `traded` set separately; `price` is the posted price when traded, else 0.
    """
    x_before = prices(state)
    r_before = state.r.copy()
    s, P, threshold, utility = choose_customer_bundle(event, x_before, state.params)
    value = float(event.values[s])
    inventory_sold = utility >= -tau
    posted = rho + threshold
    traded = inventory_sold and value - posted >= -tau
    if inventory_sold:
        remove_inventory(state, event.counts[s])
    step = record_step(state, EventKind.CUSTOMER, s, traded, inventory_sold, P, posted if traded else 0., value,
                         r_before, x_before)
    state.t += 1
    return step


def step_supplier_truthful(state, event, tau=TAU):
    """Processes one supplier: same choice and inventory update as the known-valuation engine, but pays P/(1+eps)."""
    x_before = prices(state)
    r_before = state.r.copy()
    s, P, utility = choose_supplier_bundle(event, x_before, state.params)
    traded = utility >= -tau
    value = float(event.values[s])
    if traded:
        add_inventory(state, event.counts[s])
    paid = P / (1 + state.params.eps) if traded else 0.
    step = record_step(state, EventKind.SUPPLIER, s, traded, False, P, paid, value, r_before, x_before)
    state.t += 1
    return step


def run_truthful(inst, seed, rho=None, mode="strict", tau=TAU, params=None, delta=None):
    r"""
    Runs the posted-price mechanism over an instance.

    Parameters
    ----------
    inst : `trading_bench.core.types.Instance`
    seed : `int`
        Seed for the rho draw; recorded in the trace.
    rho : `float`, optional
        Fixes rho instead of drawing it (used to enumerate the support).
    mode : {"strict", "warn"}, default="strict"
    tau : `float`, default=1e-9
    params : `trading_bench.trading.configurations.EngineParams`, optional
        Defaults to `truthful_params(declared_v, declared_d, eps)`.
    delta : `float`, optional
        Overrides :math:`\delta = \varepsilon/8` in the rho distribution.

    Returns
    -------
    `trading_bench.core.types.Trace`
        Profit is the sum of posted prices charged minus the sum of prices paid.
    """
    if params is None:
        params = truthful_params(inst.declared_v, inst.declared_d, inst.eps)
    dist = rho_distribution(params.v, params.eps, delta)
    if rho is None:
        rho = sample_rho(dist, seed)
    tags = prepare_run(inst, params, mode)

    state = EngineState.full(inst.catalog, params)
    steps = []
    for event in inst.events:
        if event.kind is EventKind.CUSTOMER:
            steps.append(step_customer_truthful(state, event, rho, tau))
        else:
            steps.append(step_supplier_truthful(state, event, tau))
    return Trace(instance=inst, params=params, steps=steps, profit=signed_profit(steps), algorithm="truthful",
                 delta=dist.delta, rho=float(rho), seed=seed, tags=tags)


def expected_buy_revenue(step, dist, tau=TAU):
    """
    Exact expectation, over the rho support, of the revenue collected at a customer step.

    For each rho the customer pays rho + max{1, P} if that does not exceed its value, and nothing otherwise.
    """
    threshold = max(1., step.P)
    expected = 0.
    for rho, probability in dist.support():
        if step.value - (rho + threshold) >= -tau:
            expected += probability * (rho + threshold)
    return expected


def revenue_lower_bound(step, dist, v):
    """Per-step lower bound (1 - 2 delta) max{1, P} + delta / (2 (1 + ln v)) * value on the expected revenue."""
    return (1 - 2 * dist.delta) * max(1., step.P) + dist.delta / (2 * (1 + math.log(v))) * step.value


def expected_profit_bound(trace, dist=None, tau=TAU):
    """
    Expected profit over rho and its lower bound, given the run's (rho-independent) inventory trajectory.

    Returns
    -------
    `tuple` of `float`
        (sum of expected revenues at inventory-sold steps - sum of supplier payments,
        sum of per-step revenue lower bounds - sum of supplier payments).
    """
    if dist is None:
        dist = rho_distribution(trace.params.v, trace.params.eps, trace.delta)
    expected = bound = 0.
    for step in trace.steps:
        if step.sold:
            expected += expected_buy_revenue(step, dist, tau)
            bound += revenue_lower_bound(step, dist, trace.params.v)
        elif step.bought:
            payment = step.P / (1 + trace.params.eps)
            expected -= payment
            bound -= payment
    return expected, bound


def check_posted_prices(trace, dist=None, tau=TAU):
    """
    Checks posted-price participation, supplier payment dominance and the per-step expected-revenue bound.

    Participation is judged with the engines' own rule, utility >= -`tau` with an absolute `tau`, so an agent
    within `tau` of indifference is expected to trade whatever the size of the prices.

    Returns
    -------
    `list` of `trading_bench.core.types.Violation`
    """
    if dist is None:
        dist = rho_distribution(trace.params.v, trace.params.eps, trace.delta)
    eps = trace.params.eps
    violations = []
    for step in trace.steps:
        if step.kind is EventKind.CUSTOMER:
            posted = trace.rho + max(1., step.P)
            tol = tolerance(tau, posted, step.value)
            if step.traded and step.value - posted < -tau:
                violations.append(Violation("participation", f"customer charged {posted} above its value "
                                            f"{step.value} at step {step.t}", t=step.t, s=step.chosen,
                                            slack=step.value - posted))
            if step.inventory_sold and not step.traded and step.value - posted >= -tau:
                violations.append(Violation("participation", f"customer with value {step.value} not served at "
                                            f"posted price {posted} at step {step.t}", t=step.t, s=step.chosen,
                                            slack=posted - step.value))
            if step.traded and abs(step.price - posted) > tol:
                violations.append(Violation("posted price", f"customer charged {step.price} instead of the posted "
                                            f"{posted} at step {step.t}", t=step.t, s=step.chosen,
                                            slack=-abs(step.price - posted)))
            if step.inventory_sold:
                expected = expected_buy_revenue(step, dist, tau)
                bound = revenue_lower_bound(step, dist, trace.params.v)
                if expected < bound - tolerance(tau, bound):
                    violations.append(Violation("expected revenue", f"expected revenue {expected} below the bound "
                                                f"{bound} at step {step.t}", t=step.t, s=step.chosen,
                                                slack=expected - bound))
        else:
            posted = step.P / (1 + eps)
            tol = tolerance(tau, posted, step.value)
            if step.traded and step.price < step.value - tol:
                violations.append(Violation("payment dominance", f"supplier paid {step.price} below its value "
                                            f"{step.value} at step {step.t}", t=step.t, s=step.chosen,
                                            slack=step.price - step.value))
            if step.traded != (posted - step.value >= -tau):
                violations.append(Violation("participation", f"supplier participation does not match posted price "
                                            f"{posted} and value {step.value} at step {step.t}", t=step.t,
                                            s=step.chosen, slack=posted - step.value))
    return violations


def state_before(inst, t, params, rho, tau=TAU):
    """Engine state just before event `t`, computed by a truthful run over the first `t` events."""
    state = EngineState.full(inst.catalog, params)
    for event in inst.events[:t]:
        if event.kind is EventKind.CUSTOMER:
            step_customer_truthful(state, event, rho, tau)
        else:
            step_supplier_truthful(state, event, tau)
    return state


def realized_utility(step, true_values):
    """Utility of the agent at `step`, measured with its true menu values."""
    if not step.traded:
        return 0.
    if step.kind is EventKind.CUSTOMER:
        return float(true_values[step.chosen]) - step.price
    return step.price - float(true_values[step.chosen])


def misreport_trial(state, event, reported_values, rho, tau=TAU):
    """
    Utilities of one agent reporting truthfully and reporting `reported_values`, from the same state.

    `state` is left untouched; both reports are processed on copies.

    Returns
    -------
    `tuple` of `float`
        (truthful utility, misreport utility), both measured with the event's true values.
    """
    reported = Event(event.kind, [Bundle(bundle.counts, value) for bundle, value in zip(event.menu, reported_values)])
    utilities = []
    for report in (event, reported):
        trial = EngineState(catalog=state.catalog, params=state.params, r=state.r.copy(), t=state.t)
        if event.kind is EventKind.CUSTOMER:
            step = step_customer_truthful(trial, report, rho, tau)
        else:
            step = step_supplier_truthful(trial, report, tau)
        utilities.append(realized_utility(step, event.values))
    return utilities[0], utilities[1]
