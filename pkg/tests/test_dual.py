import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import supplier
from trading_bench.analysis.dual import (CUSTOMER_COVER, PRICE_INCREASE, SUPPLIER_COVER, DualSolution, dual_gap,
                                         fit_dual, potential_chain_total, price_charge_slack, verify_dual,
                                         verify_step_inequalities)
from trading_bench.core.types import Instance, ItemCatalog
from trading_bench.trading.configurations import default_params
from trading_bench.trading.pricing import LARGE_INVENTORY_TAG, run
from trading_bench.trading.truthful import run_truthful


def test_fit_dual_on_fixture(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    dual = fit_dual(trace)
    assert dual.alpha.tolist() == [2., 1.5, 0., 2.]
    assert dual.beta[2] == pytest.approx(trace.steps[2].P - 1.5 * 0.01)
    assert dual.ell.shape == (4, 1)
    assert dual.ell[2, 0] == 0.
    assert dual.objective == pytest.approx(40 * dual.ell.sum() + 5.5 + dual.beta[2])
    assert verify_dual(single_item_instance, trace, dual).ok
    assert verify_step_inequalities(trace).ok


def test_random_traces_are_dual_feasible(random_instance):
    for seed in range(8):
        inst = random_instance(seed, n=3, T=60, d=2, v=16.)
        trace = run(inst, default_params(inst.declared_v, inst.declared_d, inst.eps))
        dual = fit_dual(trace)
        report = verify_dual(inst, trace, dual)
        assert report.ok, report.violations[:3]
        assert report.checked > 0
        steps = verify_step_inequalities(trace)
        assert steps.ok, steps.violations[:3]


def test_truthful_traces_pass_the_same_checks(random_instance):
    inst = random_instance(4, params="truthful", T=40)
    trace = run_truthful(inst, seed=4)
    assert verify_dual(inst, trace, fit_dual(trace)).ok
    assert verify_step_inequalities(trace).ok


def test_zero_dual_misses_every_customer_bundle(random_instance):
    inst = random_instance(2, T=30)
    trace = run(inst, default_params(inst.declared_v, inst.declared_d, inst.eps))
    T, n = len(inst.events), inst.n
    zero = DualSolution(x=np.zeros((T + 1, n)), ell=np.zeros((T, n)), alpha=np.zeros(T), beta=np.zeros(T),
                        w=np.array(inst.catalog.w, dtype=float), objective=0.)
    report = verify_dual(inst, trace, zero)
    customer_bundles = sum(len(event.menu) for event in inst.events if event.kind.value == "customer")
    assert {violation.constraint for violation in report.violations} == {CUSTOMER_COVER}
    assert len(report.violations) == customer_bundles
    assert all(violation.slack < 0 for violation in report.violations)


def test_negative_dual_entries_are_reported(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    dual = fit_dual(trace)
    alpha = dual.alpha.copy()
    alpha[0] = -1.
    broken = DualSolution(x=dual.x, ell=dual.ell, alpha=alpha, beta=dual.beta, w=dual.w, objective=dual.objective)
    constraints = [violation.constraint for violation in verify_dual(single_item_instance, trace, broken).violations]
    assert "nonnegativity" in constraints and CUSTOMER_COVER in constraints


def test_supplier_only_trace_is_degenerate():
    inst = Instance(catalog=ItemCatalog((40,)), eps=0.5, events=[supplier((1,), 0.5)] * 3, declared_v=2.,
                    declared_d=1)
    trace = run(inst, default_params(2., 1, 0.5))
    gap = dual_gap(trace, fit_dual(trace))
    assert trace.profit == 0.
    assert gap.degenerate
    assert gap.objective == 0.


def test_empty_trace_passes():
    inst = Instance(catalog=ItemCatalog((10, 10)), eps=0.5, events=[], declared_v=2., declared_d=1)
    trace = run(inst, default_params(2., 1, 0.5), mode="warn")
    dual = fit_dual(trace)
    assert dual.objective == 0. and dual.ell.shape == (0, 2)
    assert verify_dual(inst, trace, dual).ok
    assert verify_step_inequalities(trace).checked == 0


def test_dual_gap_normalizes_by_eta_over_eps(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    gap = dual_gap(trace, fit_dual(trace))
    assert not gap.degenerate
    assert gap.ratio == pytest.approx(gap.objective / trace.profit)
    assert gap.eta_over_eps == pytest.approx(single_item_params.eta / 0.5)
    assert gap.normalized == pytest.approx(gap.ratio / gap.eta_over_eps)
    # weak duality against the profit itself
    assert gap.objective >= trace.profit


def test_tampered_trace_breaks_the_price_identity(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    first = trace.steps[0]
    steps = list(trace.steps)
    steps[0] = replace(first, x_after=(first.x_after[0] * 2,))
    forged = replace(trace, steps=steps)
    constraints = {violation.constraint for violation in verify_step_inequalities(forged).violations}
    assert "price-inventory identity" in constraints


def test_potential_chain_total_on_fixture(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    eta, eps = single_item_params.eta, 0.5
    x39, x38 = math.expm1(eta / 40), math.expm1(eta / 20)
    sells = [(0., 2.), (x39, 1.5), (x39, 2.)]
    expected = sum((1 - eps / 4) * P + eps * value / eta + 1 for P, value in sells) - x38 / (1 + eps)
    assert potential_chain_total(trace) == pytest.approx(expected)


def _with_dual(dual, **changes):
    fields = {"x": dual.x, "ell": dual.ell, "alpha": dual.alpha, "beta": dual.beta, "w": dual.w,
              "objective": dual.objective}
    fields.update(changes)
    return DualSolution(**fields)


def test_zero_beta_breaks_the_supplier_cover(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    dual = fit_dual(trace)
    beta = dual.beta.copy()
    beta[2] = 0.
    violations = verify_dual(single_item_instance, trace, _with_dual(dual, beta=beta)).violations
    assert [(violation.constraint, violation.t, violation.s) for violation in violations] == [(SUPPLIER_COVER, 2, 0)]
    # a.x after the restock is x at r = 39, against (1 + eps) * 0.01
    x39 = math.expm1(single_item_params.eta / 40)
    assert violations[0].slack == pytest.approx(1.5 * 0.01 - x39)


def test_zero_ell_breaks_the_price_increase(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    dual = fit_dual(trace)
    ell = dual.ell.copy()
    ell[0] = 0.
    violations = verify_dual(single_item_instance, trace, _with_dual(dual, ell=ell)).violations
    assert [(violation.constraint, violation.t, violation.i) for violation in violations] == [(PRICE_INCREASE, 0, 0)]


def _tamper(trace, t, **changes):
    steps = list(trace.steps)
    steps[t] = replace(steps[t], **changes)
    return replace(trace, steps=steps)


@pytest.mark.parametrize("t, changes, expected", [
    (2, {"x_after": (1.,)}, {"monotone prices"}),
    (0, {"value": 0.5}, {"trade criterion"}),
    (0, {"P": -5.}, {"sell potential"}),
    (2, {"P": 100.}, {"buy potential", "potential balance"}),
])
def test_each_step_check_catches_its_own_tampering(single_item_instance, single_item_params, t, changes, expected):
    trace = run(single_item_instance, single_item_params)
    report = verify_step_inequalities(_tamper(trace, t, **changes))
    constraints = {violation.constraint for violation in report.violations}
    assert expected <= constraints
    located = expected - {"potential balance"}
    assert all(violation.t == t for violation in report.violations if violation.constraint in located)


def test_warn_mode_trace_is_verified_without_raising(single_item_instance, single_item_params):
    narrow = replace(single_item_instance, catalog=ItemCatalog((4,)))
    with pytest.warns(UserWarning, match="Large-inventory"):
        trace = run(narrow, single_item_params, mode="warn")
    assert LARGE_INVENTORY_TAG in trace.tags

    report = verify_step_inequalities(trace)
    assert report.checked > 0
    assert {violation.constraint for violation in report.violations} <= {"sell potential", "buy potential",
                                                                          "potential balance"}
    assert verify_dual(narrow, trace, fit_dual(trace)).ok


def test_price_charge_slack_is_the_kl_gap(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    slack = price_charge_slack(trace)
    a = single_item_params.eta / 40
    # first sale moves x-hat from 1 to e^a on w = 40
    assert slack[0] == pytest.approx(40 * (a * math.exp(a) - math.exp(a) + 1))
    assert slack[2] == 0.
    assert np.all(slack >= 0.)

    dual = fit_dual(trace)
    x_hat = trace.x_matrix() + 1 / (single_item_params.d * single_item_params.mu)
    for t in (0, 1, 3):
        potential = 40 * x_hat[t + 1, 0] * math.log(x_hat[t + 1, 0] / x_hat[t, 0])
        assert potential - 40 * dual.ell[t, 0] == pytest.approx(slack[t])
