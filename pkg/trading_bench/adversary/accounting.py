"""
Last-in-first-out cost accounting of a trader's inventory.

Each item type's inventory is a stack of segments filled bottom to top; a purchase pushes segments at the
price paid per unit, a sale pops from the top. Positions are counted in units from the bottom, which is what
the adversaries' per-position cost invariants are stated in.
"""

from dataclasses import dataclass, field

import numpy as np

from trading_bench.configurations import TAU
from trading_bench.core.types import Violation

QUANTITY_TOLERANCE = 1e-12


@dataclass
class Segment:
    quantity: float
    unit_cost: float
    step: int


@dataclass(frozen=True)
class Sale:
    """`quantity` units of `item` sold at `step`, taken from the purchase made at `purchase_step`."""
    step: int
    item: int
    quantity: float
    purchase_step: int
    unit_cost: float
    unit_revenue: float

    @property
    def profit(self):
        return self.quantity * (self.unit_revenue - self.unit_cost)


@dataclass
class LifoLedger:
    """
    Per-type LIFO stacks plus the realized profit of everything sold or disposed of.

    Parameters
    ----------
    n : `int`
        Number of item types.
    """
    n: int
    stacks: list = field(default=None)
    sales: list = field(default_factory=list)
    realized: float = 0.
    touched: set = field(default_factory=set)

    def __post_init__(self):
        if self.stacks is None:
            self.stacks = [[] for _ in range(self.n)]

    @classmethod
    def with_initial_inventory(cls, inventory, initial_cost):
        """
        Ledger whose stacks hold the initial inventory, one unit per segment, with unit cost `initial_cost(p)` at
        position p (the notional price of inventory the trader did not pay for).
        """
        inventory = np.asarray(inventory, dtype=float)
        ledger = cls(n=len(inventory))
        for i, amount in enumerate(inventory):
            position = 0
            while amount - position > QUANTITY_TOLERANCE:
                quantity = min(1., amount - position)
                ledger.stacks[i].append(Segment(quantity=quantity, unit_cost=initial_cost(position), step=-1))
                position += 1
        return ledger

    def holdings(self, i):
        return sum(segment.quantity for segment in self.stacks[i])

    def notional_cost(self):
        """Total cost of everything currently held."""
        return sum(segment.quantity * segment.unit_cost for stack in self.stacks for segment in stack)

    def record(self, step, before, after, cash_delta):
        """
        Books one event from the trader's inventory and cash before and after it.

        A purchase pushes the units kept (after the cap) at cost -cash_delta split evenly over them; paying for
        units that were all disposed of is a realized loss. A sale pops the units removed from the top of each
        stack, with revenue cash_delta split evenly over them (zero revenue when inventory left without payment).

        Returns
        -------
        `float`
            Profit realized by this event.
        """
        delta = np.asarray(after, dtype=float) - np.asarray(before, dtype=float)
        added = np.where(delta > QUANTITY_TOLERANCE, delta, 0.)
        removed = np.where(delta < -QUANTITY_TOLERANCE, -delta, 0.)
        if added.sum() and removed.sum():
            raise ValueError(f"Event {step} both added and removed inventory; a single menu trade moves "
                             f"inventory one way only")
        realized_before = self.realized
        if removed.sum():
            unit_revenue = cash_delta / removed.sum()
            for i in np.nonzero(removed)[0]:
                self._pop(int(i), float(removed[i]), step, unit_revenue)
        elif added.sum():
            unit_cost = -cash_delta / added.sum()
            for i in np.nonzero(added)[0]:
                self.stacks[i].append(Segment(quantity=float(added[i]), unit_cost=unit_cost, step=step))
                self.touched.add(int(i))
        else:
            # Paid for units that were all disposed of, or received money for nothing
            self.realized += cash_delta
        return self.realized - realized_before

    def _pop(self, i, quantity, step, unit_revenue):
        stack = self.stacks[i]
        self.touched.add(i)
        while quantity > QUANTITY_TOLERANCE:
            if not stack:
                raise ValueError(f"Item {i} sold {quantity} more units at event {step} than the ledger holds")
            top = stack[-1]
            taken = min(top.quantity, quantity)
            sale = Sale(step=step, item=i, quantity=taken, purchase_step=top.step, unit_cost=top.unit_cost,
                        unit_revenue=unit_revenue)
            self.sales.append(sale)
            self.realized += sale.profit
            top.quantity -= taken
            quantity -= taken
            if top.quantity <= QUANTITY_TOLERANCE:
                stack.pop()


def lifo_accounting(records, n, initial_inventory=None, initial_cost=None):
    """
    Replays an interaction into a LIFO ledger.

    Parameters
    ----------
    records : iterable of `tuple`
        (inventory before, inventory after, cash delta) per event, in order.
    n : `int`
        Number of item types.
    initial_inventory : array_like, optional
        Inventory before the first event; empty stacks if omitted.
    initial_cost : callable, optional
        Notional unit cost by position for the initial inventory (0 if omitted).

    Returns
    -------
    `LifoLedger`
    """
    if initial_inventory is None:
        ledger = LifoLedger(n=n)
    else:
        ledger = LifoLedger.with_initial_inventory(initial_inventory, initial_cost or (lambda position: 0.))
    for step, (before, after, cash_delta) in enumerate(records):
        ledger.record(step, before, after, cash_delta)
    return ledger


def check_interval_invariant(ledger, bound, items=None, tau=TAU):
    """
    Lists every held segment whose unit cost is below `bound(position)` at the segment's lowest position.

    `bound` is nonincreasing in the position for every construction, so the lowest position is the binding one.
    """
    violations = []
    items = range(ledger.n) if items is None else sorted(items)
    for i in items:
        position = 0.
        for segment in ledger.stacks[i]:
            required = bound(int(np.floor(position + QUANTITY_TOLERANCE)))
            if segment.unit_cost < required - max(tau, tau * required):
                violations.append(Violation("interval cost", f"item {i}: unit bought at event {segment.step} cost "
                                            f"{segment.unit_cost} at position {position}, below {required}",
                                            t=segment.step, i=i, slack=segment.unit_cost - required))
            position += segment.quantity
    return violations
