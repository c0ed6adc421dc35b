"""
Command-line entry point: `python -m trading_bench <subcommand>`.

    gen      draw a random instance
    run      run the known-valuation engine or the truthful mechanism over an instance
    opt      solve the augmented offline benchmark of an instance
    verify   fit the dual of a trace and check every constraint and per-step inequality
    attack   drive a trader with one of the adaptive lower-bound adversaries
    bench    sweep the random family over a (v, d, eps) grid

Options may also come from a flat JSON file given with --config; flags win over the file.
"""

import argparse
import dataclasses
import math
import os
import sys

import numpy as np
import xarray as xr

from trading_bench.adversary.configurations import CONSTRUCTIONS
from trading_bench.adversary.constructions import aggregate_ratios, records_to_dataset, run_attack, trader_setup
from trading_bench.adversary.traders import TRADER_KINDS, make_trader
from trading_bench.analysis.dual import (dual_gap, fit_dual, potential_chain_total, price_charge_slack, verify_dual,
                                         verify_step_inequalities)
from trading_bench.analysis.offline import brute_force_opt, build_lp, solve_lp
from trading_bench.configurations import (ALGORITHMS, ASSUMPTION_MODES, AUGMENT_MODES, BENCH_D_GRID, BENCH_EPS_GRID,
                                          BENCH_NORMALIZED_SPREAD, BENCH_V_GRID, RandomFamilySpec,
                                          resolve_run_config)
from trading_bench.core.errors import TradingBenchError
from trading_bench.experimental import audit_bench, bench_sweep, generate_instance, read_bench_csv
from trading_bench.file_access import (read_instance, read_json, read_trace, write_dataset_csv, write_instance,
                                       write_json, write_trace)
from trading_bench.trading.configurations import CUSTOMER_RULES, EngineParams, truthful_params
from trading_bench.trading.pricing import run
from trading_bench.trading.truthful import check_posted_prices, run_truthful

PROG = "trading-bench"


def _load_config(args):
    config = read_json(args.config) if getattr(args, "config", None) else None
    return resolve_run_config(args.command, vars(args), config)


def engine_params(config, inst):
    """Engine parameters for `run`: the algorithm's defaults at the instance's (or overridden) bounds."""
    v = inst.declared_v if config.v is None else config.v
    d = inst.declared_d if config.d is None else config.d
    if config.algorithm == "truthful":
        base = truthful_params(v, d, inst.eps)
        mu = base.mu if config.mu is None else config.mu
        eta = base.eta if config.eta is None else config.eta
        return EngineParams(mu=mu, eta=eta, eps=inst.eps, v=v, d=d, customer_rule="floored")
    mu = 1. if config.mu is None else config.mu
    eta = 1 + math.log1p(v * d * mu) if config.eta is None else config.eta
    return EngineParams(mu=mu, eta=eta, eps=inst.eps, v=v, d=d, customer_rule=config.customer_rule)


def _gen_command(args):
    config = _load_config(args)
    print("\n===== Generating instance =====")
    spec = RandomFamilySpec(n=args.n, w=args.w, T=args.T, menu_size=args.menu_size,
                            v=8. if config.v is None else config.v, d=1 if config.d is None else config.d,
                            eps=0.5 if config.eps is None else config.eps,
                            customer_probability=args.customer_probability,
                            seed=0 if config.seed is None else config.seed,
                            ensure_assumption=args.ensure_assumption, params=args.params)
    inst = generate_instance(spec)
    write_instance(config.output, inst)
    print(f"Wrote {inst.T} events over {inst.n} item types (caps {inst.catalog.w[0]}) to {config.output}")
    return 0


def _run_command(args):
    config = _load_config(args)
    if config.instance is None:
        raise ValueError("run needs an instance file; pass --instance or set 'instance' in the config file")
    inst = read_instance(config.instance)
    if config.eps is not None:
        inst = dataclasses.replace(inst, eps=config.eps)
    params = engine_params(config, inst)

    print(f"\n===== Running {config.algorithm} =====")
    if config.algorithm == "truthful":
        trace = run_truthful(inst, config.seed, mode=config.mode, tau=config.tau, params=params)
        print(f"rho = {trace.rho} (delta = {trace.delta}, seed = {trace.seed})")
    else:
        trace = run(inst, params, mode=config.mode, tau=config.tau)
    print(f"Profit: {trace.profit!r}")
    if trace.tags:
        print(f"Trace tags: {', '.join(trace.tags)}")
    if config.output is not None:
        write_trace(config.output, trace)
        print(f"Trace written to {config.output}")
    return 0


def _opt_command(args):
    config = _load_config(args)
    if config.instance is None:
        raise ValueError("opt needs an instance file; pass --instance or set 'instance' in the config file")
    inst = read_instance(config.instance)
    print(f"\n===== Offline benchmark ({args.method}, augmenting {config.augment}) =====")
    if args.method == "brute-force":
        result = brute_force_opt(inst, config.augment)
    else:
        result = solve_lp(build_lp(inst, config.augment))
    print(f"Offline optimum: {result.value!r}")
    if config.output is not None:
        write_json(config.output, result.to_json())
    return 0


def _verify_command(args):
    config = _load_config(args)
    if config.trace is None:
        raise ValueError("verify needs a trace file; pass --trace or set 'trace' in the config file")
    trace = read_trace(config.trace)

    print("\n===== Dual fitting =====")
    dual = fit_dual(trace)
    dual_report = verify_dual(trace.instance, trace, dual, config.tau)
    print(f"{dual_report.checked} dual constraints checked, {len(dual_report.violations)} violated")

    print("\n===== Per-step inequalities =====")
    step_report = verify_step_inequalities(trace, config.tau)
    print(f"{step_report.checked} inequalities checked, {len(step_report.violations)} violated")

    gap = dual_gap(trace, dual, config.tau)
    result = {"dual": dual_report.to_json(), "steps": step_report.to_json(),
              "dual_objective": gap.objective, "profit": gap.profit, "ratio": gap.ratio,
              "eta_over_eps": gap.eta_over_eps, "ratio_normalized": gap.normalized, "degenerate": gap.degenerate,
              "potential_chain_total": potential_chain_total(trace),
              "price_charge_slack": float(price_charge_slack(trace).sum()), "tags": list(trace.tags)}
    failed = not (dual_report.ok and step_report.ok)
    print(f"Dual objective {gap.objective!r} against profit {gap.profit!r} (ratio {gap.ratio:.6g})")

    if trace.algorithm == "truthful":
        print("\n===== Posted prices =====")
        posted = check_posted_prices(trace, tau=config.tau)
        print(f"{len(posted)} posted-price violation(s)")
        result["posted_prices"] = [violation.to_dict() for violation in posted]
        failed = failed or bool(posted)

    if args.opt_result is not None:
        lp_value = float(read_json(args.opt_result)["value"])
        holds = lp_value <= gap.objective + max(config.tau, config.tau * abs(gap.objective))
        result["weak_duality"] = {"lp_value": lp_value, "dual_objective": gap.objective, "holds": holds}
        print(f"Weak duality: offline value {lp_value!r} {'<=' if holds else '>'} dual objective")
        failed = failed or not holds

    if config.output is not None:
        write_json(config.output, result)
    for violation in (dual_report.violations + step_report.violations)[:10]:
        print(f"\t{violation.constraint}: {violation.message}")
    return 1 if failed else 0


def _attack_command(args):
    config = _load_config(args)
    eps = 1. if config.eps is None else config.eps
    catalog, v, d = trader_setup(args.construction, args.w, eps, config.v, config.d)
    seeds = args.seeds or [config.seed]
    if args.trader == "truthful" and None in seeds:
        raise ValueError("A truthful trader draws rho from a seed; pass --seeds or set the seed")

    datasets = []
    for seed in seeds:
        print(f"\n===== {args.construction} attack on a {args.trader} trader"
              f"{'' if seed is None else f' (seed {seed})'} =====")
        trader = make_trader(args.trader, catalog, v, d, eps, seed=seed, command=args.trader_command,
                             customer_rule=config.customer_rule)
        try:
            records = run_attack(args.construction, trader, args.w, eps, args.phases, v=config.v, d=config.d,
                                 tau=config.tau, progress=True, max_events=args.max_events)
        finally:
            trader.close()
        ratios = aggregate_ratios(records, config.tau)
        print(f"Adversary profit {ratios['adv']:.6g}, trader cash {ratios['cash']:.6g}, "
              f"initial inventory credit {ratios['credit']:.6g}")
        print(f"Raw ratio {ratios['raw']:.6g}, amortized ratio {ratios['amortized']:.6g}")
        exceeded = [record.phase for record in records if record.alg_profit > record.bound + config.tau]
        if exceeded:
            print(f"Trader profit exceeded the per-phase bound in phases {exceeded[:20]}")
        dataset = records_to_dataset(records, construction=args.construction, trader=args.trader, w=args.w,
                                     eps=eps, v=config.v, d=config.d)
        datasets.append(dataset.assign(seed=("phase", np.full(len(records), -1 if seed is None else seed))))

    if config.output is not None:
        write_dataset_csv(xr.concat(datasets, dim="phase"), config.output, "phase")
        print(f"Phase records written to {config.output}")
    return 0


def _bench_command(args):
    config = _load_config(args)
    master_seed = 0 if config.seed is None else config.seed
    if config.output is None:
        raise ValueError("bench needs an output CSV path; pass --output or set 'output' in the config file")
    trace_dir = args.trace_dir or os.path.join(os.path.dirname(os.path.abspath(config.output)), "traces/")

    if args.audit:
        print("\n===== Auditing bench rows =====")
        mismatches = audit_bench(read_bench_csv(config.output), trace_dir, config.tau)
        for mismatch in mismatches:
            print(f"\t{mismatch}")
        print(f"{len(mismatches)} mismatch(es)")
        return 1 if mismatches else 0

    print(f"\n===== Bench sweep (master seed {master_seed}) =====")
    family = RandomFamilySpec(n=args.n, w=args.w, T=args.T, menu_size=args.menu_size,
                              customer_probability=args.customer_probability)
    dataset = bench_sweep(master_seed, args.v_grid, args.d_grid, args.eps_grid, family, config.algorithm,
                          workers=args.workers, trace_dir=None if args.no_traces else trace_dir,
                          with_lp=args.lp, tau=config.tau)
    write_dataset_csv(dataset, config.output, "cell")
    spread = dataset.attrs["normalized_spread"]
    print(f"Normalized ratio spread (max / min over non-degenerate cells): {spread:.6g} "
          f"(target at most {BENCH_NORMALIZED_SPREAD:g})")
    print(f"Rows written to {config.output}")
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="Flat JSON file of option values; flags take precedence")
    parser.add_argument("--tau", type=float, help="Numerical tolerance (default 1e-9)")
    parser.add_argument("--seed", type=int, help="Seed; falls back to the TRADING_BENCH_SEED environment variable")


def _add_bounds(parser):
    parser.add_argument("--eps", type=float, help="Augmentation parameter in (0, 1]")
    parser.add_argument("--v", type=float, help="Value bound v >= 1")
    parser.add_argument("--d", type=int, help="Bundle size bound d >= 1")


def _add_family(parser):
    defaults = RandomFamilySpec()
    parser.add_argument("--n", type=int, default=defaults.n, help="Number of item types")
    parser.add_argument("--w", type=int, default=defaults.w, help="Inventory cap per item type")
    parser.add_argument("--T", type=int, default=defaults.T, help="Number of events")
    parser.add_argument("--menu-size", type=int, default=defaults.menu_size)
    parser.add_argument("--customer-probability", type=float, default=defaults.customer_probability)


def build_parser():
    parser = argparse.ArgumentParser(prog=PROG, description="Online bundle trading: engines, offline benchmark, "
                                                            "dual-fitting verifier and lower-bound adversaries")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Draw a random instance")
    _add_common(gen)
    _add_bounds(gen)
    _add_family(gen)
    gen.add_argument("--output", required=True, help="Instance file to write (JSON Lines)")
    gen.add_argument("--ensure-assumption", action=argparse.BooleanOptionalAction, default=True,
                     help="Raise the caps so the large-inventory assumption holds")
    gen.add_argument("--params", choices=ALGORITHMS, default="trade",
                     help="Engine whose eta the cap widening uses")
    gen.set_defaults(func=_gen_command)

    run_parser = sub.add_parser("run", help="Run an engine over an instance")
    _add_common(run_parser)
    _add_bounds(run_parser)
    run_parser.add_argument("--instance", help="Instance file (JSON Lines)")
    run_parser.add_argument("--output", help="Trace file to write (JSON Lines)")
    run_parser.add_argument("--algorithm", choices=ALGORITHMS)
    run_parser.add_argument("--mu", type=float, help="Price scale override")
    run_parser.add_argument("--eta", type=float, help="Exponent scale override")
    run_parser.add_argument("--customer-rule", choices=CUSTOMER_RULES)
    run_parser.add_argument("--mode", choices=ASSUMPTION_MODES,
                            help="'strict' aborts when the large-inventory assumption fails, 'warn' runs anyway")
    run_parser.set_defaults(func=_run_command)

    opt = sub.add_parser("opt", help="Solve the augmented offline benchmark")
    _add_common(opt)
    opt.add_argument("--instance", help="Instance file (JSON Lines)")
    opt.add_argument("--output", help="Result file to write (JSON)")
    opt.add_argument("--augment", choices=AUGMENT_MODES)
    opt.add_argument("--method", choices=("simplex", "brute-force"), default="simplex")
    opt.set_defaults(func=_opt_command)

    verify = sub.add_parser("verify", help="Check the fitted dual and the per-step inequalities of a trace")
    _add_common(verify)
    verify.add_argument("--trace", help="Trace file (JSON Lines)")
    verify.add_argument("--output", help="Report file to write (JSON)")
    verify.add_argument("--opt-result", help="Result of `opt` on the same instance, for the weak-duality check")
    verify.set_defaults(func=_verify_command)

    attack = sub.add_parser("attack", help="Run an adaptive adversary against a trader")
    _add_common(attack)
    _add_bounds(attack)
    attack.add_argument("--construction", choices=CONSTRUCTIONS, required=True)
    attack.add_argument("--phases", type=int, required=True)
    attack.add_argument("--trader", choices=TRADER_KINDS, default="trade")
    attack.add_argument("--w", type=int, required=True, help="Inventory cap of every item type")
    attack.add_argument("--seeds", type=int, nargs="+", help="One attack per seed (randomized traders)")
    attack.add_argument("--command", dest="trader_command", help="Command line launching a custom-exe trader")
    attack.add_argument("--customer-rule", choices=CUSTOMER_RULES)
    attack.add_argument("--max-events", type=int, help="Stop the bundle attack after this many events")
    attack.add_argument("--output", help="Phase records CSV to write")
    attack.set_defaults(func=_attack_command)

    bench = sub.add_parser("bench", help="Sweep the random family over a parameter grid")
    _add_common(bench)
    _add_family(bench)
    bench.add_argument("--output", help="Bench CSV to write (or to audit)")
    bench.add_argument("--algorithm", choices=ALGORITHMS)
    bench.add_argument("--v-grid", type=float, nargs="+", default=list(BENCH_V_GRID))
    bench.add_argument("--d-grid", type=int, nargs="+", default=list(BENCH_D_GRID))
    bench.add_argument("--eps-grid", type=float, nargs="+", default=list(BENCH_EPS_GRID))
    bench.add_argument("--workers", type=int, default=1, help="Process pool size")
    bench.add_argument("--trace-dir", help="Directory of per-cell traces (default: 'traces/' next to the CSV)")
    bench.add_argument("--no-traces", action="store_true", help="Do not store per-cell traces")
    bench.add_argument("--lp", action="store_true", help="Also solve each cell's offline LP")
    bench.add_argument("--audit", action="store_true", help="Replay stored traces against an existing CSV")
    bench.set_defaults(func=_bench_command)
    return parser


def main(argv=None):
    """Parses `argv`, runs the subcommand and returns its exit status (2 on usage, input or numerical errors)."""
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except (TradingBenchError, ValueError, NotImplementedError, OSError) as error:
        print(f"{PROG}: error: {error}", file=sys.stderr)
        return 2
