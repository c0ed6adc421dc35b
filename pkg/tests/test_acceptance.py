"""
End-to-end properties over seeded corpora. Default sizes keep the suite fast; the `slow` variants run the
full corpora.
"""

import numpy as np
import pytest

from trading_bench.adversary.configurations import small_inventory_cap
from trading_bench.adversary.constructions import (aggregate_ratios, attack_log_v, attack_small_inventory_d,
                                                   attack_small_inventory_v, trader_setup)
from trading_bench.adversary.traders import make_trader
from trading_bench.analysis.dual import fit_dual, verify_dual, verify_step_inequalities
from trading_bench.analysis.offline import brute_force_opt, build_lp, solve_lp
from trading_bench.configurations import BENCH_NORMALIZED_SPREAD, TAU, RandomFamilySpec
from trading_bench.core.types import EventKind
from trading_bench.experimental import bench_sweep, generate_instance
from trading_bench.trading.configurations import default_params, rho_distribution, truthful_params
from trading_bench.trading.pricing import run
from trading_bench.trading.truthful import (expected_buy_revenue, misreport_trial, revenue_lower_bound,
                                            run_truthful, state_before)


def _random_specs(count, seed, **fixed):
    """Family specs with n, T, v, d drawn from a seeded generator (n <= 5, T <= 200, v <= 64, d <= 4)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    specs = []
    for index in range(count):
        drawn = {"n": int(rng.integers(1, 6)), "T": int(rng.integers(1, 201)),
                 "v": float(2 ** rng.integers(0, 7)), "d": int(rng.integers(1, 5)),
                 "menu_size": int(rng.integers(1, 4)), "seed": seed * 100_000 + index}
        drawn.update(fixed)
        specs.append(RandomFamilySpec(**drawn))
    return specs


def _check_dual_corpus(count):
    for spec in _random_specs(count, seed=1):
        inst = generate_instance(spec)
        trace = run(inst, default_params(inst.declared_v, inst.declared_d, inst.eps))
        report = verify_dual(inst, trace, fit_dual(trace), TAU)
        assert report.ok, (spec, report.violations[:3])
        steps = verify_step_inequalities(trace, TAU)
        assert steps.ok, (spec, steps.violations[:3])


def test_dual_feasibility_and_step_inequalities():
    _check_dual_corpus(40)


@pytest.mark.slow
def test_dual_feasibility_and_step_inequalities_full():
    _check_dual_corpus(1000)


def _check_sandwich(count):
    for seed in range(count):
        inst = generate_instance(RandomFamilySpec(n=2, w=1, T=8, menu_size=2, v=2., d=1, seed=seed))
        exact = brute_force_opt(inst).value
        fractional = solve_lp(build_lp(inst)).value
        trace = run(inst, default_params(inst.declared_v, inst.declared_d, inst.eps))
        assert exact <= fractional + 1e-7
        assert fractional <= fit_dual(trace).objective + 1e-6


def test_weak_duality_sandwich():
    _check_sandwich(20)


@pytest.mark.slow
def test_weak_duality_sandwich_full():
    _check_sandwich(200)


def test_normalized_ratio_spread():
    dataset = bench_sweep(master_seed=0, progress=False)
    assert dataset.sizes["cell"] == 10
    assert dataset.attrs["normalized_spread"] <= BENCH_NORMALIZED_SPREAD
    assert not dataset["degenerate"].values.all()


def _truthful_corpus(count):
    return [generate_instance(spec) for spec in _random_specs(count, seed=2, params="truthful", T=40, v=16.,
                                                              d=2)]


def _check_coupling(count, seeds):
    for inst in _truthful_corpus(count):
        params = truthful_params(inst.declared_v, inst.declared_d, inst.eps)
        reference = run(inst, params)
        dist = rho_distribution(params.v, params.eps)
        for seed in range(seeds):
            trace = run_truthful(inst, seed)
            for step, known in zip(trace.steps, reference.steps):
                assert (step.r_after, step.x_after, step.chosen) == (known.r_after, known.x_after, known.chosen)
                if step.sold:
                    bound = revenue_lower_bound(step, dist, params.v)
                    assert expected_buy_revenue(step, dist) >= bound - TAU


def test_coupling_and_expected_revenue():
    _check_coupling(10, 3)


@pytest.mark.slow
def test_coupling_and_expected_revenue_full():
    _check_coupling(100, 10)


def test_value_attack_ratio():
    catalog, v, d = trader_setup("logv", 64, 1., v=256)
    records = attack_log_v(make_trader("trade", catalog, v, d, 1.), 64, 1., 256, phases=50)
    c = 3
    assert all(record.alg_profit <= 2 / c * record.adv_profit + TAU for record in records)
    assert aggregate_ratios(records)["amortized"] >= c / 2


def test_small_inventory_ratio_is_unbounded():
    w = small_inventory_cap(64., 0.5)
    catalog, v, d = trader_setup("smallv", w, 0.5, v=64)
    records = attack_small_inventory_v(make_trader("trade", catalog, v, d, 0.5), w, 0.5, 64., phases=20)
    assert all(record.adv_profit > 0 for record in records)
    assert all(record.alg_profit <= TAU for record in records)


def _check_divisibility(max_events):
    catalog, v, d = trader_setup("smalld", 2, 1., d=256)
    records = attack_small_inventory_d(make_trader("trade", catalog, v, d, 1.), 2, 1., 256, phases=max_events,
                                       max_events=max_events)
    assert sum(record.events for record in records) >= max_events


def test_divisibility_over_a_long_run():
    _check_divisibility(1000)


@pytest.mark.slow
def test_divisibility_over_a_long_run_full():
    _check_divisibility(10_000)


def _check_incentives(count, trials):
    rng = np.random.Generator(np.random.PCG64(3))
    for spec in _random_specs(count, seed=3, params="truthful", T=8, v=8., d=2):
        inst = generate_instance(spec)
        params = truthful_params(inst.declared_v, inst.declared_d, inst.eps)
        for rho in rho_distribution(params.v, params.eps).values:
            for t, event in enumerate(inst.events):
                state = state_before(inst, t, params, rho)
                low = 1. if event.kind is EventKind.CUSTOMER else 0.
                for _ in range(trials):
                    truthful, misreport = misreport_trial(state, event, rng.uniform(low, params.v, len(event.menu)),
                                                          rho)
                    assert misreport <= truthful + TAU


def test_misreports_never_help():
    _check_incentives(10, 5)


@pytest.mark.slow
def test_misreports_never_help_full():
    _check_incentives(100, 50)
