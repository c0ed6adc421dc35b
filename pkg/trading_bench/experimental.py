"""
Random instance families and benchmark sweeps. Every random draw comes from a PCG64 generator seeded
explicitly, so an instance is a function of its `RandomFamilySpec` and a sweep is a function of its master seed.
"""

import itertools
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace

import numpy as np
import pandas as pd
import xarray as xr
from tqdm import tqdm

from trading_bench.analysis.dual import dual_gap, fit_dual
from trading_bench.analysis.offline import build_lp, solve_lp
from trading_bench.configurations import (BENCH_D_GRID, BENCH_EPS_GRID, BENCH_V_GRID, TAU, RandomFamilySpec,
                                          required_cap)
from trading_bench.core.errors import SizeCapError
from trading_bench.core.types import Bundle, Event, EventKind, Instance, ItemCatalog
from trading_bench.file_access import cell_trace_path, read_trace, trace_directory, write_trace
from trading_bench.trading.configurations import default_params, truthful_params
from trading_bench.trading.pricing import run
from trading_bench.trading.truthful import run_truthful

BENCH_COLUMNS = ("v", "d", "eps", "seed", "profit", "dual_objective", "lp_opt", "ratio", "eta_over_eps",
                 "ratio_normalized", "degenerate")


def family_params(spec):
    """Engine parameters whose eta the large-inventory widening of `spec` uses."""
    if spec.params == "truthful":
        return truthful_params(spec.v, spec.d, spec.eps)
    return default_params(spec.v, spec.d, spec.eps)


def _random_bundle(rng, spec):
    size = int(rng.integers(1, spec.d + 1))
    counts = rng.multinomial(size, np.full(spec.n, 1 / spec.n))
    return Bundle(counts, float(rng.uniform(1., spec.v)))


def generate_instance(spec):
    """
    Draws one instance of the random family.

    Each event is a customer with probability `spec.customer_probability`, else a supplier; every menu entry
    has a size uniform in {1, ..., d}, spread uniformly over the item types, and a value uniform in [1, v].

    Parameters
    ----------
    spec : `trading_bench.configurations.RandomFamilySpec`

    Returns
    -------
    `trading_bench.core.types.Instance`
        With `ensure_assumption`, every cap is raised to ceil((8 eta / eps) max a) so that
        `check_large_inventory` passes for the family's engine parameters.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    events = []
    for _ in range(spec.T):
        kind = EventKind.CUSTOMER if rng.random() < spec.customer_probability else EventKind.SUPPLIER
        events.append(Event(kind, [_random_bundle(rng, spec) for _ in range(spec.menu_size)]))

    w = spec.w
    if spec.ensure_assumption:
        largest = max((max(bundle.counts) for event in events for bundle in event.menu), default=1)
        w = max(w, required_cap(family_params(spec).eta, spec.eps, largest))
    return Instance(catalog=ItemCatalog((w,) * spec.n), eps=spec.eps, events=events, declared_v=spec.v,
                    declared_d=spec.d)


def cell_seed(master_seed, cell):
    """Seed of grid cell `cell`, an independent stream derived from the master seed."""
    return int(np.random.SeedSequence([master_seed, cell]).generate_state(1)[0])


def run_family_instance(inst, algorithm, seed, mode="strict"):
    if algorithm == "truthful":
        return run_truthful(inst, seed, mode=mode)
    if algorithm == "trade":
        return run(inst, default_params(inst.declared_v, inst.declared_d, inst.eps), mode=mode)
    raise NotImplementedError(f"Algorithm {algorithm!r} cannot be benchmarked; acceptable are 'trade', 'truthful'")


def offline_value(inst):
    """Simplex value of the instance's offline LP, or NaN when the LP is above the size cap."""
    try:
        return solve_lp(build_lp(inst)).value
    except SizeCapError:
        return math.nan


def row_from_trace(trace, seed, lp_opt=math.nan, tau=TAU):
    """
    One bench row: run parameters, profit, the fitted dual objective and the ratio witness.

    Every entry is recomputed from the trace alone, which is what the audit replays.
    """
    gap = dual_gap(trace, fit_dual(trace), tau)
    return {"v": trace.instance.declared_v, "d": trace.instance.declared_d, "eps": trace.instance.eps,
            "seed": seed, "profit": gap.profit, "dual_objective": gap.objective, "lp_opt": lp_opt,
            "ratio": gap.ratio, "eta_over_eps": gap.eta_over_eps, "ratio_normalized": gap.normalized,
            "degenerate": gap.degenerate}


def bench_cell(task):
    """
    Runs one grid cell; module-level so that process pools can pickle it.

    Parameters
    ----------
    task : `dict`
        Keys "cell", "family" (a `RandomFamilySpec` as a dict), "algorithm", "trace_dir" (or None),
        "with_lp" and "tau".

    Returns
    -------
    `dict`
        The cell's bench row, keyed by `BENCH_COLUMNS` plus "cell".
    """
    spec = RandomFamilySpec(**task["family"])
    inst = generate_instance(spec)
    trace = run_family_instance(inst, task["algorithm"], spec.seed)
    lp_opt = offline_value(inst) if task["with_lp"] else math.nan
    if task["trace_dir"] is not None:
        write_trace(cell_trace_path(task["trace_dir"], task["cell"]), trace)
    row = row_from_trace(trace, spec.seed, lp_opt, task["tau"])
    row["cell"] = task["cell"]
    return row


def bench_tasks(master_seed, v_grid=BENCH_V_GRID, d_grid=BENCH_D_GRID, eps_grid=BENCH_EPS_GRID, family=None,
                algorithm="trade", trace_dir=None, with_lp=False, tau=TAU):
    family = RandomFamilySpec(params=algorithm) if family is None else replace(family, params=algorithm)
    tasks = []
    for cell, (v, d, eps) in enumerate(itertools.product(v_grid, d_grid, eps_grid)):
        spec = replace(family, v=float(v), d=int(d), eps=float(eps), seed=cell_seed(master_seed, cell))
        tasks.append({"cell": cell, "family": asdict(spec), "algorithm": algorithm, "trace_dir": trace_dir,
                      "with_lp": with_lp, "tau": tau})
    return tasks


def rows_to_dataset(rows, **attrs):
    """Bench rows as an `xarray.Dataset` over dimension "cell"."""
    rows = sorted(rows, key=lambda row: row["cell"])
    data = {name: ("cell", np.array([row[name] for row in rows])) for name in BENCH_COLUMNS}
    dataset = xr.Dataset(data, coords={"cell": np.array([row["cell"] for row in rows], dtype=np.int64)})
    return dataset.assign_attrs({key: value for key, value in attrs.items() if value is not None})


def normalized_spread(dataset):
    """
    Max over min of the normalized ratio across the sweep's non-degenerate cells (NaN with fewer than two).
    """
    normalized = dataset["ratio_normalized"].values[~dataset["degenerate"].values.astype(bool)]
    if normalized.size < 2:
        return math.nan
    return float(normalized.max() / normalized.min())


def bench_sweep(master_seed, v_grid=BENCH_V_GRID, d_grid=BENCH_D_GRID, eps_grid=BENCH_EPS_GRID, family=None,
                algorithm="trade", workers=1, trace_dir=None, with_lp=False, tau=TAU, progress=True):
    """
    Runs the random family over the (v, d, eps) grid and collects one bench row per cell.

    Parameters
    ----------
    master_seed : `int`
        Cell i draws its instance (and rho) from `cell_seed(master_seed, i)`.
    v_grid, d_grid, eps_grid : iterables
    family : `trading_bench.configurations.RandomFamilySpec`, optional
        Shape of the instances (n, w, T, menu size, customer share); v, d, eps and seed are set per cell.
    algorithm : {"trade", "truthful"}, default="trade"
    workers : `int`, default=1
        Size of the process pool; 1 runs the cells in this process.
    trace_dir : `str`, optional
        Directory for the per-cell trace files; no traces are stored if None.
    with_lp : `bool`, default=False
        Also solve each cell's offline LP (NaN above the size cap).
    tau : `float`, default=1e-9
    progress : `bool`, default=True

    Returns
    -------
    `xarray.Dataset`
        Dimension "cell"; attrs hold the master seed, the algorithm and the normalized-ratio spread over the
        non-degenerate cells.
    """
    if trace_dir is not None:
        trace_dir = trace_directory(trace_dir)
    tasks = bench_tasks(master_seed, v_grid, d_grid, eps_grid, family, algorithm, trace_dir, with_lp, tau)
    rows = []
    with tqdm(total=len(tasks), unit="cell", file=sys.stdout, disable=not progress) as progress_bar:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                for row in executor.map(bench_cell, tasks):
                    rows.append(row)
                    progress_bar.update(1)
        else:
            for task in tasks:
                rows.append(bench_cell(task))
                progress_bar.update(1)

    degenerate = [row["cell"] for row in rows if row["degenerate"]]
    if degenerate:
        warnings.warn(f"Excluding {len(degenerate)} degenerate cell(s) {degenerate} from the ratio spread: their "
                      f"profit is at most tau, so dual objective / profit is not a meaningful ratio")
    dataset = rows_to_dataset(rows, master_seed=master_seed, algorithm=algorithm)
    dataset.attrs["normalized_spread"] = normalized_spread(dataset)
    return dataset


def read_bench_csv(path):
    """Bench CSV as a `pandas.DataFrame` indexed by cell, floats parsed to the exact doubles written."""
    return pd.read_csv(path, index_col="cell", float_precision="round_trip")


def audit_bench(frame, trace_dir, tau=TAU):
    """
    Replays the stored trace of every bench row and compares the recomputed row bit for bit.

    Parameters
    ----------
    frame : `pandas.DataFrame`
        As read by `read_bench_csv`.
    trace_dir : `str`
        Directory the sweep wrote its traces to.

    Returns
    -------
    `list` of `str`
        One message per mismatching entry or missing trace; empty when the sweep replays exactly.
    """
    mismatches = []
    for cell, stored in frame.iterrows():
        path = cell_trace_path(trace_dir, cell)
        try:
            trace = read_trace(path)
        except FileNotFoundError:
            mismatches.append(f"cell {cell}: trace file {path} is missing")
            continue
        lp_opt = math.nan if math.isnan(stored["lp_opt"]) else offline_value(trace.instance)
        recomputed = row_from_trace(trace, int(stored["seed"]), lp_opt, tau)
        for name in BENCH_COLUMNS:
            expected, actual = stored[name], recomputed[name]
            same = (expected == actual) or (isinstance(actual, float) and math.isnan(actual)
                                            and math.isnan(expected))
            if not same:
                mismatches.append(f"cell {cell}: {name} stored as {expected!r}, replayed as {actual!r}")
    return mismatches
