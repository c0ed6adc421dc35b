import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import customer, supplier
from trading_bench.analysis.dual import fit_dual
from trading_bench.analysis.offline import brute_force_opt, build_lp, solve_lp
from trading_bench.analysis.simplex import SimplexSolver
from trading_bench.core.errors import NumericalFailureError, SizeCapError, TradingBenchError, UnsupportedProblemError
from trading_bench.core.types import Instance, ItemCatalog
from trading_bench.trading.configurations import default_params
from trading_bench.trading.pricing import run


def test_simplex_textbook_problem():
    x, value = SimplexSolver([3., 2.], [[1., 1.], [1., 3.], [1., 0.]], [4., 6., 3.]).solve()
    assert value == pytest.approx(11.)
    assert x == pytest.approx([3., 1.])


def test_simplex_degenerate_problem_terminates():
    _, value = SimplexSolver([1., 1.], [[1., 0.], [1., 1.], [2., 1.]], [1., 1., 2.]).solve()
    assert value == pytest.approx(1.)


def test_simplex_failures():
    with pytest.raises(NumericalFailureError, match="unbounded"):
        SimplexSolver([1., 0.], [[-1., 1.]], [1.]).solve()
    with pytest.raises(NotImplementedError, match="b >= 0"):
        SimplexSolver([1.], [[1.]], [-1.])
    with pytest.raises(ValueError, match="dimensions"):
        SimplexSolver([1., 1.], [[1.]], [1.])


def _three_step():
    events = [customer((1,), 3.), supplier((1,), 1.), customer((1,), 3.)]
    return Instance(catalog=ItemCatalog((1,)), eps=0.5, events=events, declared_v=4., declared_d=1)


def test_build_lp_shape():
    lp = build_lp(_three_step())
    assert lp.num_columns == 3 + 1 * 4
    assert lp.num_rows == 2 * 1 * 3 + 3
    assert lp.c[:3].tolist() == [3., -1.5, 3.]
    assert lp.lower[lp.inventory_column(0, 0)] == lp.upper[lp.inventory_column(0, 0)] == 1.
    assert build_lp(_three_step(), augment="customers").c[:3].tolist() == [2., -1., 2.]


def test_lp_and_brute_force_on_sell_restock_sell():
    inst = _three_step()
    result = solve_lp(build_lp(inst))
    assert result.value == pytest.approx(4.5)
    assert result.allocation[:3] == pytest.approx([1., 1., 1.])
    assert brute_force_opt(inst).value == pytest.approx(4.5)
    assert solve_lp(build_lp(inst, augment="customers")).value == pytest.approx(3.)
    assert brute_force_opt(inst, augment="customers").value == pytest.approx(3.)


def test_restock_beyond_cap_is_useless():
    inst = Instance(catalog=ItemCatalog((2,)), eps=0.5, events=[supplier((1,), 1.), customer((1,), 5.)],
                    declared_v=5., declared_d=1)
    assert solve_lp(build_lp(inst)).value == pytest.approx(5.)
    assert brute_force_opt(inst).value == pytest.approx(5.)


def test_size_caps():
    inst = _three_step()
    with pytest.raises(SizeCapError, match="columns"):
        build_lp(inst, size_cap=5)
    with pytest.raises(SizeCapError, match="Brute force"):
        brute_force_opt(inst, max_steps=2)
    with pytest.raises(ValueError, match="augmentation"):
        build_lp(inst, augment="both")


def test_weak_duality_sandwich(random_instance):
    for seed in range(6):
        inst = random_instance(seed, n=2, w=1, T=8, menu_size=2, v=2., d=1)
        exact = brute_force_opt(inst).value
        fractional = solve_lp(build_lp(inst)).value
        trace = run(inst, default_params(inst.declared_v, inst.declared_d, inst.eps))
        assert exact <= fractional + 1e-7
        assert fractional <= fit_dual(trace).objective + 1e-6


def test_empty_instance_has_zero_value():
    inst = Instance(catalog=ItemCatalog((3,)), eps=0.5, events=[], declared_v=2., declared_d=1)
    assert solve_lp(build_lp(inst)).value == 0.
    assert brute_force_opt(inst).value == 0.
    assert np.all(build_lp(inst).lower == 3.)


def _linprog_value(lp):
    bounds = [(low, None if np.isinf(high) else high) for low, high in zip(lp.lower, lp.upper)]
    result = linprog(-lp.c, A_ub=lp.A, b_ub=lp.b, bounds=bounds, method="highs")
    assert result.status == 0, result.message
    return -result.fun


def test_simplex_agrees_with_highs(random_instance):
    for seed in range(5):
        inst = random_instance(seed, n=2, T=6, menu_size=2, v=4., d=2)
        lp = build_lp(inst)
        assert solve_lp(lp).value == pytest.approx(_linprog_value(lp), abs=1e-7)
        customers = build_lp(inst, augment="customers")
        assert solve_lp(customers).value == pytest.approx(_linprog_value(customers), abs=1e-7)


def test_fractional_optimum_beats_integral_on_a_triangle():
    # every pair of the three items is wanted once: half of each bundle uses every unit exactly
    events = [customer((1, 1, 0), 2.), customer((0, 1, 1), 2.), customer((1, 0, 1), 2.)]
    inst = Instance(catalog=ItemCatalog((1, 1, 1)), eps=0.5, events=events, declared_v=2., declared_d=2)
    lp = build_lp(inst)
    assert solve_lp(lp).value == pytest.approx(3.)
    assert _linprog_value(lp) == pytest.approx(3.)
    assert brute_force_opt(inst).value == pytest.approx(2.)


def test_unsupported_problems_are_package_errors():
    with pytest.raises(UnsupportedProblemError) as error:
        SimplexSolver([1.], [[1.]], [-1.])
    assert isinstance(error.value, TradingBenchError)
    assert isinstance(error.value, NotImplementedError)
