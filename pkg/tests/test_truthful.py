import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import customer, supplier
from trading_bench.core.types import EventKind, Instance, ItemCatalog, Trace, TraceStep
from trading_bench.trading.configurations import rho_distribution, truthful_params
from trading_bench.trading.pricing import run
from trading_bench.trading.truthful import (check_posted_prices, expected_buy_revenue, expected_profit_bound,
                                            misreport_trial, realized_utility, revenue_lower_bound, run_truthful,
                                            sample_rho, state_before)


def test_rho_distribution_support():
    dist = rho_distribution(8., 0.5)
    assert dist.delta == 1 / 16
    assert dist.J == 3
    assert dist.values == (0., 1., 2., 4., 8.)
    assert math.fsum(dist.probabilities) == pytest.approx(1.)
    assert dist.probabilities[0] == 1 - 1 / 16
    assert rho_distribution(9.9, 0.5).J == 3


def test_rho_distribution_rejects_bad_delta():
    with pytest.raises(ValueError, match="delta"):
        rho_distribution(8., 0.5, delta=1.5)


def test_sample_rho_is_seeded():
    dist = rho_distribution(64., 1.)
    draws = [sample_rho(dist, seed) for seed in range(200)]
    assert draws == [sample_rho(dist, seed) for seed in range(200)]
    assert set(draws) <= set(dist.values)
    assert len(set(draws)) > 1


def _draw_frequencies(dist, seeds):
    draws = np.array([sample_rho(dist, seed) for seed in range(seeds)])
    return np.array([np.mean(draws == value) for value in dist.values])


@pytest.mark.parametrize("delta, tol", [(None, 0.01), (0.5, 0.02)])
def test_sample_rho_matches_the_stated_probabilities(delta, tol):
    # eps = 1, v = 8: rho = 0 with probability 1 - delta, each of 1, 2, 4, 8 with delta / 4
    dist = rho_distribution(8., 1., delta)
    frequencies = _draw_frequencies(dist, 20_000)
    assert np.allclose(frequencies, dist.probabilities, rtol=0., atol=tol)


@pytest.mark.slow
def test_sample_rho_frequencies_over_many_seeds():
    dist = rho_distribution(8., 1.)
    assert dist.probabilities == (0.875,) + (1 / 32,) * 4
    frequencies = _draw_frequencies(dist, 100_000)
    assert np.allclose(frequencies, dist.probabilities, rtol=0., atol=0.005)


def _truthful_instance(random_instance, seed, **overrides):
    return random_instance(seed, params="truthful", **overrides)


def test_coupling_with_known_valuation_engine(random_instance):
    inst = _truthful_instance(random_instance, 3, T=60, d=2)
    params = truthful_params(inst.declared_v, inst.declared_d, inst.eps)
    reference = run(inst, params)
    for seed in range(4):
        trace = run_truthful(inst, seed)
        assert [step.r_after for step in trace.steps] == [step.r_after for step in reference.steps]
        assert [step.x_after for step in trace.steps] == [step.x_after for step in reference.steps]
        assert [step.chosen for step in trace.steps] == [step.chosen for step in reference.steps]


def test_without_shift_customers_pay_the_floored_price():
    events = [customer((1,), 3.), supplier((1,), 0.), customer((1,), 1.2)]
    params = truthful_params(4., 1, 0.5)
    cap = math.ceil(8 * params.eta / 0.5)
    inst = Instance(catalog=ItemCatalog((cap,)), eps=0.5, events=events, declared_v=4., declared_d=1)
    trace = run_truthful(inst, seed=0, rho=0.)
    first, second, third = trace.steps
    assert first.traded and first.price == 1.
    assert second.bought and second.price == pytest.approx(second.P / 1.5)
    assert second.price >= second.value
    assert third.traded and third.price == 1.


def test_shifted_price_above_value_keeps_the_bidding_phase():
    params = truthful_params(4., 1, 0.5)
    cap = math.ceil(8 * params.eta / 0.5)
    inst = Instance(catalog=ItemCatalog((cap,)), eps=0.5, events=[customer((1,), 1.5)], declared_v=4.,
                    declared_d=1)
    step = run_truthful(inst, seed=0, rho=4.).steps[0]
    assert step.inventory_sold and not step.traded
    assert step.price == 0. and step.r_after == (cap - 1,)


def test_truthful_run_records_draw(random_instance):
    inst = _truthful_instance(random_instance, 1, T=20)
    trace = run_truthful(inst, seed=11)
    dist = rho_distribution(inst.declared_v, inst.eps)
    assert trace.algorithm == "truthful"
    assert trace.seed == 11 and trace.rho == sample_rho(dist, 11)
    assert trace.delta == dist.delta
    assert trace.profit == trace.recompute_profit()


def test_expected_revenue_matches_enumeration(random_instance):
    inst = _truthful_instance(random_instance, 5, T=40)
    trace = run_truthful(inst, seed=0)
    dist = rho_distribution(trace.params.v, trace.params.eps)
    for step in trace.steps:
        if not step.sold:
            continue
        revenues = [run_truthful(inst, seed=0, rho=rho).steps[step.t].price for rho in dist.values]
        enumerated = sum(probability * revenue for revenue, probability in zip(revenues, dist.probabilities))
        assert expected_buy_revenue(step, dist) == pytest.approx(enumerated)
        assert expected_buy_revenue(step, dist) >= revenue_lower_bound(step, dist, trace.params.v) - 1e-9


def test_expected_profit_bound_and_posted_prices(random_instance):
    for seed in range(5):
        inst = _truthful_instance(random_instance, seed, T=50, d=2, v=16.)
        trace = run_truthful(inst, seed=seed)
        expected, bound = expected_profit_bound(trace)
        assert expected >= bound - 1e-9
        assert check_posted_prices(trace) == []


def test_posted_price_violations_are_reported(random_instance):
    inst = _truthful_instance(random_instance, 2, T=30)
    trace = run_truthful(inst, seed=0, rho=0.)
    sold = next(step for step in trace.steps if step.traded and step.kind is EventKind.CUSTOMER)
    steps = list(trace.steps)
    steps[sold.t] = replace(sold, price=sold.price + 0.5)
    forged = replace(trace, steps=steps)
    assert [violation.constraint for violation in check_posted_prices(forged)] == ["posted price"]


def _single_supplier_trace(value, traded):
    params = truthful_params(16., 1, 0.5)
    inst = Instance(catalog=ItemCatalog((100,)), eps=0.5, events=[supplier((1,), value)], declared_v=16.,
                    declared_d=1)
    # P / (1 + eps) = 15 / 1.5 = 10 exactly
    step = TraceStep(t=0, kind=EventKind.SUPPLIER, chosen=0, traded=traded, inventory_sold=False, P=15.,
                     price=10. if traded else 0., value=value, r_before=(100,), r_after=(100,), x_before=(1.,),
                     x_after=(1.,))
    return Trace(instance=inst, params=params, steps=[step], profit=-step.price, algorithm="truthful",
                 delta=1 / 16)


def test_supplier_participation_uses_the_absolute_tolerance():
    # utility -5e-9 is below -tau: declining is right even though 5e-9 is within tau * 10
    assert check_posted_prices(_single_supplier_trace(10. + 5e-9, traded=False)) == []
    # utility -5e-10 is within tau: the engine would have bought
    constraints = [violation.constraint for violation in
                   check_posted_prices(_single_supplier_trace(10. + 5e-10, traded=False))]
    assert constraints == ["participation"]
    assert check_posted_prices(_single_supplier_trace(10. + 5e-10, traded=True)) == []


def test_realized_utility(random_instance):
    inst = _truthful_instance(random_instance, 4, T=10)
    trace = run_truthful(inst, seed=0, rho=0.)
    for step, event in zip(trace.steps, inst.events):
        utility = realized_utility(step, event.values)
        assert utility >= -1e-9
        if not step.traded:
            assert utility == 0.


def test_misreports_never_help(random_instance):
    rng = np.random.Generator(np.random.PCG64(7))
    inst = _truthful_instance(random_instance, 9, T=12, v=8.)
    params = truthful_params(inst.declared_v, inst.declared_d, inst.eps)
    dist = rho_distribution(params.v, params.eps)
    for rho in dist.values:
        for t, event in enumerate(inst.events):
            state = state_before(inst, t, params, rho)
            low = 1. if event.kind is EventKind.CUSTOMER else 0.
            for _ in range(10):
                reported = rng.uniform(low, params.v, size=len(event.menu))
                truthful, misreport = misreport_trial(state, event, reported, rho)
                assert misreport <= truthful + 1e-9
