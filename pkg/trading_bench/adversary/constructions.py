"""
Adaptive lower-bound adversaries.

Each attack runs in phases against a trader it can inspect: waves of supplier offers walk the price down
while the trader keeps buying, and a wave of customers at a slightly higher price closes the phase. Every phase
is booked twice, once as the adversary's closed-form offline profit (cross-checked against its own offers) and
once as the trader's LIFO-realized profit, which must stay below the construction's per-phase bound.
"""

import math
import sys
from dataclasses import dataclass

import numpy as np
import xarray as xr
from tqdm import tqdm

from trading_bench.adversary.accounting import LifoLedger, check_interval_invariant
from trading_bench.adversary.configurations import (LevelSchedule, check_log_d, check_log_v, log_levels,
                                                    small_inventory_cap)
from trading_bench.configurations import TAU
from trading_bench.core.errors import InvariantBreachError
from trading_bench.core.helper import is_power_of_two, tolerance
from trading_bench.core.types import Bundle, EventKind, ItemCatalog

# Dataset column names that differ from the PhaseRecord attribute
PHASE_COLUMNS = {"level": "i_F"}


@dataclass(frozen=True)
class PhaseRecord:
    """
    Outcome of one adversary phase.

    Attributes
    ----------
    phase : `int`
    final_step : `int`
        Index (over the whole attack) of the last supplier offer of the phase.
    level : `int`
        Level i_F the phase ended at (the final wave's level, the trader's final inventory, or the lowest level);
        exported as the "i_F" column by `records_to_dataset`.
    adv_profit : `float`
        Closed-form offline profit of the phase.
    alg_profit : `float`
        Trader's LIFO-realized profit during the phase.
    alg_cash : `float`
        Trader's cash change during the phase.
    bound : `float`
        Per-phase upper bound on `alg_profit`.
    credit : `float`
        Notional cost of the trader's initial inventory (phase 0 only).
    events : `int`
    invariant_violations : `int`
        Interval cost violations found in the LIFO ledger at the end of the phase.
    """
    phase: int
    final_step: int
    level: int
    adv_profit: float
    alg_profit: float
    alg_cash: float
    bound: float
    credit: float
    events: int
    invariant_violations: int

    @property
    def ratio(self):
        return self.adv_profit / self.alg_profit if self.alg_profit > TAU else math.inf


@dataclass(frozen=True)
class _Offer:
    kind: EventKind
    value: float
    wave: int


class _Attack:
    """Bookkeeping shared by all constructions: offers, ledger, and per-phase records."""

    def __init__(self, trader, eps, bound_at, tau, event_budget):
        self.trader = trader
        self.eps = eps
        self.bound_at = bound_at
        self.tau = tau
        self.event_budget = event_budget
        self.ledger = LifoLedger.with_initial_inventory(trader.inventory, bound_at)
        self.credit = self.ledger.notional_cost()
        self.events = 0
        self.wave = 0
        self.final_step = -1
        self.records = []
        self.begin_phase()

    def begin_phase(self):
        self.offers = []
        self.phase_cash = self.trader.cash
        self.phase_realized = self.ledger.realized
        self.phase_events = 0
        self.ledger.touched.clear()

    def new_wave(self):
        self.wave += 1

    def offer(self, kind, bundle):
        if self.phase_events >= self.event_budget:
            raise InvariantBreachError(f"Phase {len(self.records)} exceeded its budget of {self.event_budget} events")
        before = self.trader.inventory
        cash = self.trader.cash
        if kind is EventKind.CUSTOMER:
            self.trader.on_customer([bundle])
        else:
            self.trader.on_supplier([bundle])
            self.final_step = self.events
        after = self.trader.inventory
        self.ledger.record(self.events, before, after, self.trader.cash - cash)
        self.offers.append(_Offer(kind, bundle.value, self.wave))
        self.events += 1
        self.phase_events += 1
        return after

    def recomputed_adv_profit(self):
        """Offline profit from the phase's own offers: all customers minus the final supplier wave at (1+eps)."""
        suppliers = [offer for offer in self.offers if offer.kind is EventKind.SUPPLIER]
        final_wave = suppliers[-1].wave
        paid = sum(offer.value for offer in suppliers if offer.wave == final_wave)
        received = sum(offer.value for offer in self.offers if offer.kind is EventKind.CUSTOMER)
        return received - (1 + self.eps) * paid

    def end_phase(self, level, adv_profit, bound):
        recomputed = self.recomputed_adv_profit()
        if abs(recomputed - adv_profit) > tolerance(self.tau, adv_profit, recomputed):
            raise InvariantBreachError(f"Closed-form adversary profit {adv_profit} of phase {len(self.records)} "
                                       f"disagrees with {recomputed} recomputed from its offers")
        violations = check_interval_invariant(self.ledger, self.bound_at, self.ledger.touched, self.tau)
        record = PhaseRecord(phase=len(self.records), final_step=self.final_step, level=level,
                             adv_profit=adv_profit, alg_profit=self.ledger.realized - self.phase_realized,
                             alg_cash=self.trader.cash - self.phase_cash, bound=bound,
                             credit=self.credit if not self.records else 0., events=self.phase_events,
                             invariant_violations=len(violations))
        self.records.append(record)
        self.begin_phase()
        return record


def _phases(phases, progress, unit="phase"):
    if not progress:
        return range(phases)
    return tqdm(range(phases), total=phases, unit=unit, file=sys.stdout)


def _single_type(trader):
    inventory = trader.inventory
    if inventory.shape != (1,):
        raise ValueError(f"This attack trades a single item type, but the trader holds {inventory.size} types")
    return float(inventory[0])


def _check_values(values, low, high, name):
    for value in values:
        if not low * (1 - 1e-12) <= value <= high * (1 + 1e-12):
            raise InvariantBreachError(f"{name} value {value} falls outside the declared range [{low}, {high}]")


def _level_index(y, c, w):
    return min(c, int(math.floor(y * c / w + 1e-9)))


def attack_log_v(trader, w, eps, v, phases, tau=TAU, progress=False):
    r"""
    Value-range attack on a single item type with unit bundles.

    Each wave offers w single-unit suppliers at :math:`v/(1+\varepsilon)^{2(i+1)}`, with
    :math:`i = \lfloor y c / w \rfloor` read from the trader's inventory y. The phase ends once a wave leaves
    :math:`y c \leq (i+1) w`; then w single-unit customers arrive at :math:`v/(1+\varepsilon)^{2i}`.

    Parameters
    ----------
    trader : `trading_bench.adversary.traders.TraderView`
    w : `int`
        Trader's inventory cap.
    eps : `float`
    v : `float`
        Needs :math:`v \geq (1+\varepsilon)^8`.
    phases : `int`
    tau : `float`, default=1e-9
    progress : `bool`, default=False
        Show a progress bar.

    Returns
    -------
    `list` of `PhaseRecord`
        Adversary profit :math:`w \varepsilon v / (1+\varepsilon)^{2i_F+1}` per phase, bound (2/c) times that.
    """
    c = check_log_v(v, eps)
    _single_type(trader)
    _check_values([v / (1 + eps) ** (2 * level) for level in range(c + 2)], 1, v, "Offer")

    def bound_at(position):
        return v / (1 + eps) ** (2 * (_level_index(position, c, w) + 1))

    attack = _Attack(trader, eps, bound_at, tau, event_budget=(c + 3) * w)
    for _ in _phases(phases, progress):
        while True:
            level = _level_index(_single_type(trader), c, w)
            attack.new_wave()
            for _ in range(w):
                after = attack.offer(EventKind.SUPPLIER, Bundle((1,), v / (1 + eps) ** (2 * (level + 1))))
            if after[0] * c <= (level + 1) * w + 1e-9:
                break
        for _ in range(w):
            attack.offer(EventKind.CUSTOMER, Bundle((1,), v / (1 + eps) ** (2 * level)))
        adv_profit = w * eps * v / (1 + eps) ** (2 * level + 1)
        attack.end_phase(level, adv_profit, 2 / c * adv_profit)
    return attack.records


def attack_log_d(trader, w, eps, d, phases, tau=TAU, progress=False):
    r"""
    Bundle-size attack on a single item type.

    Same phase protocol as `attack_log_v` with unit price :math:`(1+\varepsilon)^{-2k}` sold in bundles of
    :math:`d_k` units (the smallest power of 2 above the inverse price) worth :math:`v_k \in [1, 2]`.
    Suppliers use exponent i+1 and come as w/d_{i+1} bundles; customers use exponent i and come as w/d_i bundles.

    Raises
    ------
    `ValueError`
        If d is not a power of 2 with enough levels, or w is not divisible by every bundle size used.
    """
    c = check_log_d(d, eps)
    _single_type(trader)
    levels = [LevelSchedule.at_exponent(eps, k) for k in range(c + 2)]
    indivisible = sorted({level.d for level in levels if w % level.d})
    if indivisible:
        raise ValueError(f"The bundle-size attack needs w divisible by every bundle size used, but w = {w} is not "
                         f"divisible by {indivisible}")
    _check_values([level.v for level in levels], 1, 2, "Bundle")

    def bound_at(position):
        return (1 + eps) ** (-2 * (_level_index(position, c, w) + 1))

    attack = _Attack(trader, eps, bound_at, tau, event_budget=(c + 3) * w)
    for _ in _phases(phases, progress):
        while True:
            index = _level_index(_single_type(trader), c, w)
            supplier = levels[index + 1]
            attack.new_wave()
            for _ in range(w // supplier.d):
                after = attack.offer(EventKind.SUPPLIER, Bundle((supplier.d,), supplier.v))
            if after[0] * c <= (index + 1) * w + 1e-9:
                break
        customer = levels[index]
        for _ in range(w // customer.d):
            attack.offer(EventKind.CUSTOMER, Bundle((customer.d,), customer.v))
        adv_profit = w * eps / (1 + eps) ** (2 * index + 1)
        attack.end_phase(index, adv_profit, 2 / c * adv_profit)
    return attack.records


def _integral(inventory):
    rounded = np.round(inventory)
    if np.any(np.abs(inventory - rounded) > 1e-9):
        raise ValueError(f"The small-inventory attacks need an integral trader, but its inventory is "
                         f"{inventory.tolist()}")
    return rounded.astype(np.int64)


def attack_small_inventory_v(trader, w, eps, v, phases, tau=TAU, progress=False):
    r"""
    Unbounded-ratio attack in the small-inventory regime :math:`w \leq -1 + \frac{1}{2}\log_{1+\varepsilon} v`.

    While the trader keeps buying, single-unit suppliers arrive at :math:`v/(1+\varepsilon)^{2(Y+1)}` where Y is
    its inventory; at the first offer that leaves Y unchanged, one customer arrives at
    :math:`v/(1+\varepsilon)^{2Y}`. The adversary gains :math:`\varepsilon v/(1+\varepsilon)^{2Y+1}` per phase;
    the trader's LIFO profit is at most 0.

    Raises
    ------
    `ValueError`
        For parameters outside the regime, or a trader reporting fractional inventory.
    """
    if v < (1 + eps) ** 4 * (1 - 1e-12):
        raise ValueError(f"The small-inventory value attack needs v >= (1+eps)^4 = {(1 + eps) ** 4:.6g}, "
                         f"but got v = {v}")
    cap = small_inventory_cap(v, eps)
    if w > cap:
        raise ValueError(f"The small-inventory value attack needs w <= -1 + log_(1+eps)(v) / 2 = {cap}, but got w = {w}")
    _single_type(trader)
    _integral(trader.inventory)
    _check_values([v / (1 + eps) ** (2 * position) for position in range(w + 2)], 1, v, "Offer")

    def bound_at(position):
        return v / (1 + eps) ** (2 * (position + 1))

    attack = _Attack(trader, eps, bound_at, tau, event_budget=w + 3)
    for _ in _phases(phases, progress):
        while True:
            held = int(_integral(trader.inventory)[0])
            attack.new_wave()
            after = attack.offer(EventKind.SUPPLIER, Bundle((1,), v / (1 + eps) ** (2 * (held + 1))))
            if int(_integral(after)[0]) <= held:
                break
        attack.offer(EventKind.CUSTOMER, Bundle((1,), v / (1 + eps) ** (2 * held)))
        attack.end_phase(held, eps * v / (1 + eps) ** (2 * held + 1), 0.)
    return attack.records


def divisibility_violations(inventory, schedule):
    """
    Levels i at which d_i does not divide the number of item types holding at most i units.

    Parameters
    ----------
    inventory : array_like
        Integral inventory per item type.
    schedule : `trading_bench.adversary.configurations.LevelSchedule`

    Returns
    -------
    `list` of `int`
    """
    inventory = np.asarray(inventory)
    return [i for i, level in enumerate(schedule.levels) if int(np.sum(inventory <= i)) % level.d]


def small_inventory_d_schedule(w, eps, d):
    """
    Validates the bundle attack's parameters and returns its level schedule (levels 0..w).

    Raises
    ------
    `ValueError`
        Unless d is a power of 2 with d >= (1+eps)^8, c >= 3, w <= c and every level's bundle fits in d types.
    """
    if not is_power_of_two(d):
        raise ValueError(f"The small-inventory bundle attack needs d to be a power of 2, but got d = {d}")
    if d < (1 + eps) ** 8 * (1 - 1e-12):
        raise ValueError(f"The small-inventory bundle attack needs d >= (1+eps)^8 = {(1 + eps) ** 8:.6g}, "
                         f"but got d = {d}")
    c = log_levels(d, eps)
    if c < 3 or w > c:
        raise ValueError(f"The small-inventory bundle attack needs c = -1 + floor(log_(1+eps)(d) / 2) >= 3 and "
                         f"w <= c, but got c = {c}, w = {w}")
    schedule = LevelSchedule.build(eps, w + 1)
    problems = schedule.validate()
    if problems:
        raise InvariantBreachError(f"Level schedule is inconsistent: {problems}")
    if max(schedule.sizes) > d:
        raise ValueError(f"Bundle sizes {schedule.sizes} of levels 0..{w} exceed the {d} item types; lower w")
    return schedule


def attack_small_inventory_d(trader, w, eps, d, phases, tau=TAU, progress=False, max_events=None):
    r"""
    Unbounded-ratio attack with d item types of cap w and bundles of distinct types.

    With k the lowest inventory level over the item types, a supplier offers the d_k lowest-index types held at
    level k for :math:`v_k`; while the trader buys, this repeats. On refusal a customer offers
    :math:`v'_k = (1+\varepsilon)^2 v_k` for the same set. The adversary gains
    :math:`\varepsilon (1+\varepsilon) v_k` per phase; the trader's LIFO profit is at most 0. The divisibility of
    the number of types held at or below each level i by :math:`d_i` is checked after every event.

    Parameters
    ----------
    max_events : `int`, optional
        Stops starting new phases once this many events have been offered.

    Raises
    ------
    `trading_bench.core.errors.InvariantBreachError`
        If the divisibility property fails.
    """
    schedule = small_inventory_d_schedule(w, eps, d)
    if trader.inventory.shape != (d,):
        raise ValueError(f"The small-inventory bundle attack trades {d} item types, but the trader holds "
                         f"{trader.inventory.size}")

    def bound_at(position):
        return (1 + eps) ** (-2 * (position + 1))

    def check_divisibility(inventory):
        broken = divisibility_violations(inventory, schedule)
        if broken:
            raise InvariantBreachError(f"Divisibility of level counts fails at levels {broken} after event "
                                       f"{attack.events}")

    attack = _Attack(trader, eps, bound_at, tau, event_budget=d * w + 3)
    check_divisibility(_integral(trader.inventory))
    for _ in _phases(phases, progress):
        if max_events is not None and attack.events >= max_events:
            break
        while True:
            inventory = _integral(trader.inventory)
            k = int(inventory.min())
            level = schedule[k]
            chosen = np.nonzero(inventory == k)[0][:level.d]
            counts = np.zeros(d, dtype=np.int64)
            counts[chosen] = 1
            attack.new_wave()
            after = _integral(attack.offer(EventKind.SUPPLIER, Bundle(counts, level.v)))
            check_divisibility(after)
            if np.array_equal(after, inventory):
                break
        after = _integral(attack.offer(EventKind.CUSTOMER, Bundle(counts, level.v_raised)))
        check_divisibility(after)
        attack.end_phase(k, eps * (1 + eps) * level.v, 0.)
    return attack.records


def trader_setup(construction, w, eps, v=None, d=None):
    """
    Catalog and declared (v, d) a trader is built with for a construction.

    Returns
    -------
    `tuple`
        (`ItemCatalog`, declared v, declared d).
    """
    if construction in ("logv", "smallv"):
        if v is None:
            raise ValueError(f"Construction {construction!r} needs v")
        return ItemCatalog((w,)), float(v), 1
    if construction == "logd":
        if d is None:
            raise ValueError("Construction 'logd' needs d")
        c = check_log_d(d, eps)
        return ItemCatalog((w,)), 2., max(LevelSchedule.at_exponent(eps, k).d for k in range(c + 1))
    if construction == "smalld":
        if d is None:
            raise ValueError("Construction 'smalld' needs d")
        return ItemCatalog((w,) * d), 8., d
    raise NotImplementedError(f"Unknown construction {construction!r}")


def run_attack(construction, trader, w, eps, phases, v=None, d=None, tau=TAU, progress=False, max_events=None):
    """Dispatches to the attack named by `construction` ('logv', 'logd', 'smallv' or 'smalld')."""
    if construction == "logv":
        return attack_log_v(trader, w, eps, v, phases, tau, progress)
    if construction == "logd":
        return attack_log_d(trader, w, eps, d, phases, tau, progress)
    if construction == "smallv":
        return attack_small_inventory_v(trader, w, eps, v, phases, tau, progress)
    if construction == "smalld":
        return attack_small_inventory_d(trader, w, eps, d, phases, tau, progress, max_events)
    raise NotImplementedError(f"Unknown construction {construction!r}")


def aggregate_ratios(records, tau=TAU):
    """
    Whole-attack ratios.

    Returns
    -------
    `dict`
        "adv", "cash" and "credit" totals, the raw ratio adv / cash and the amortized ratio
        adv / (cash - credit); a ratio is infinite when its denominator is at most `tau`.
    """
    adv = math.fsum(record.adv_profit for record in records)
    cash = math.fsum(record.alg_cash for record in records)
    credit = math.fsum(record.credit for record in records)

    def ratio(denominator):
        return adv / denominator if denominator > tau else math.inf

    return {"adv": adv, "cash": cash, "credit": credit, "raw": ratio(cash), "amortized": ratio(cash - credit)}


def records_to_dataset(records, **attrs):
    """
    Phase records as an `xarray.Dataset` over dimension "phase", with attack parameters as attrs.

    Columns carry the record attribute names, except that `level` is exported as "i_F".
    """
    names = ("final_step", "level", "adv_profit", "alg_profit", "alg_cash", "bound", "credit", "events",
             "invariant_violations")
    data = {PHASE_COLUMNS.get(name, name): ("phase", np.array([getattr(record, name) for record in records]))
            for name in names}
    data["ratio"] = ("phase", np.array([record.ratio for record in records], dtype=float))
    dataset = xr.Dataset(data, coords={"phase": np.array([record.phase for record in records], dtype=np.int64)})
    return dataset.assign_attrs({key: value for key, value in attrs.items() if value is not None})
