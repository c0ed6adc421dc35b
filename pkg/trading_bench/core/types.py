"""
Domain types shared by every module: the item catalog, bundles, events, instances, and the
per-step trace records that all verification works from. All types are immutable after construction.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np
import xarray as xr

from trading_bench.trading.configurations import EngineParams


class EventKind(str, Enum):
    CUSTOMER = "customer"
    SUPPLIER = "supplier"


@dataclass(frozen=True)
class ItemCatalog:
    """Item-type universe with per-type inventory caps `w` (units)."""
    w: tuple

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(int(cap) for cap in self.w))

    @property
    def n(self):
        return len(self.w)

    @cached_property
    def caps(self):
        """Caps as an integer `numpy.ndarray` (read-only view of `w`)."""
        caps = np.array(self.w, dtype=np.int64)
        caps.flags.writeable = False
        return caps


@dataclass(frozen=True)
class Bundle:
    """Integer item-count vector plus a scalar value; the unit of trade."""
    counts: tuple
    value: float

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(count) for count in self.counts))
        object.__setattr__(self, "value", float(self.value))

    @property
    def size(self):
        return sum(self.counts)


@dataclass(frozen=True)
class Event:
    """One arriving agent: a customer or a supplier with a menu of bundles."""
    kind: EventKind
    menu: tuple

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        object.__setattr__(self, "menu", tuple(self.menu))

    @cached_property
    def counts(self):
        """(menu length) x n matrix of bundle counts."""
        counts = np.array([bundle.counts for bundle in self.menu], dtype=np.int64)
        counts.flags.writeable = False
        return counts

    @cached_property
    def values(self):
        values = np.array([bundle.value for bundle in self.menu], dtype=float)
        values.flags.writeable = False
        return values


@dataclass(frozen=True)
class Instance:
    """Catalog, augmentation parameter `eps`, ordered events, and the declared bounds v and d."""
    catalog: ItemCatalog
    eps: float
    events: tuple
    declared_v: float
    declared_d: int

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "declared_v", float(self.declared_v))
        object.__setattr__(self, "declared_d", int(self.declared_d))

    @property
    def n(self):
        return self.catalog.n

    @property
    def T(self):  # noqa
        return len(self.events)


@dataclass(frozen=True)
class Violation:
    """
    One violated invariant or constraint. `t`, `s` and `i` locate it (step, menu entry, item type)
    where applicable; `slack` is the signed amount by which the constraint fails (negative = violated).
    """
    constraint: str
    message: str
    t: Optional[int] = None
    s: Optional[int] = None
    i: Optional[int] = None
    slack: Optional[float] = None

    def to_dict(self):
        return {"constraint": self.constraint, "t": self.t, "s": self.s, "i": self.i,
                "slack": self.slack, "message": self.message}


@dataclass(frozen=True)
class TraceStep:
    """
    Record of one event as processed by a trading engine.

    `traded` is whether money changed hands, `inventory_sold` whether inventory was decremented at a
    customer step (the two differ only in the truthful mechanism). `P` is the chosen bundle's price at the
    prices before the step; `price` is the money transferred; `value` the chosen bundle's stated value.
    """
    t: int
    kind: EventKind
    chosen: Optional[int]
    traded: bool
    inventory_sold: bool
    P: float
    price: float
    value: Optional[float]
    r_before: tuple
    r_after: tuple
    x_before: tuple
    x_after: tuple

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.traded and self.chosen is None:
            raise ValueError(f"Step {self.t} is marked as traded but names no chosen bundle")
        for name, cast in (("r_before", int), ("r_after", int), ("x_before", float), ("x_after", float)):
            object.__setattr__(self, name, tuple(cast(entry) for entry in getattr(self, name)))

    @property
    def bought(self):
        return self.kind is EventKind.SUPPLIER and self.traded

    @property
    def sold(self):
        """Inventory left through this customer step (whether or not the sale was charged)."""
        return self.kind is EventKind.CUSTOMER and self.inventory_sold


def signed_profit(steps):
    """Signed sum of step prices: customers pay in, suppliers are paid out."""
    profit = 0.0
    for step in steps:
        if step.traded:
            profit += step.price if step.kind is EventKind.CUSTOMER else -step.price
    return profit


@dataclass(frozen=True)
class Trace:
    """Complete run of an engine over an instance. `profit` = charged − paid over all steps."""
    instance: Instance
    params: EngineParams
    steps: tuple
    profit: float
    algorithm: str = "trade"
    delta: float = 0.0
    rho: float = 0.0
    seed: Optional[int] = None
    tags: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "tags", tuple(self.tags))
        object.__setattr__(self, "profit", float(self.profit))

    def recompute_profit(self):
        return signed_profit(self.steps)

    def x_matrix(self):
        """(T+1) x n matrix of prices x^0, ..., x^T."""
        if not self.steps:
            return np.zeros((1, self.instance.n))
        return np.array([self.steps[0].x_before] + [step.x_after for step in self.steps], dtype=float)

    def r_matrix(self):
        """(T+1) x n matrix of inventories r^0, ..., r^T."""
        if not self.steps:
            return np.array([self.instance.catalog.w], dtype=np.int64)
        return np.array([self.steps[0].r_before] + [step.r_after for step in self.steps], dtype=np.int64)

    def to_dataset(self):
        """
        Returns the trace as an `xarray.Dataset` with dimensions (step, item).

        Returns
        -------
        `xarray.Dataset`
            Inventory and price trajectories plus per-step scalars; run parameters are stored as attrs.
        """
        num_steps = len(self.steps)
        n = self.instance.n

        def stack(name, dtype):
            return np.array([getattr(step, name) for step in self.steps], dtype=dtype).reshape(num_steps, n)

        dataset = xr.Dataset(
            {"r_before": (("step", "item"), stack("r_before", np.int64)),
             "r_after": (("step", "item"), stack("r_after", np.int64)),
             "x_before": (("step", "item"), stack("x_before", float)),
             "x_after": (("step", "item"), stack("x_after", float)),
             "P": ("step", np.array([step.P for step in self.steps], dtype=float)),
             "price": ("step", np.array([step.price for step in self.steps], dtype=float)),
             "value": ("step", np.array([np.nan if step.value is None else step.value for step in self.steps],
                                        dtype=float)),
             "chosen": ("step", np.array([-1 if step.chosen is None else step.chosen for step in self.steps],
                                         dtype=np.int64)),
             "traded": ("step", np.array([step.traded for step in self.steps], dtype=bool)),
             "inventory_sold": ("step", np.array([step.inventory_sold for step in self.steps], dtype=bool)),
             "kind": ("step", np.array([step.kind.value for step in self.steps], dtype=str))},
            coords={"step": np.arange(num_steps),
                    "item": np.arange(n),
                    "w": ("item", np.array(self.instance.catalog.w, dtype=np.int64))})
        return dataset.assign_attrs({"algorithm": self.algorithm,
                                     "mu": self.params.mu,
                                     "eta": self.params.eta,
                                     "eps": self.params.eps,
                                     "v": self.params.v,
                                     "d": self.params.d,
                                     "delta": self.delta,
                                     "rho": self.rho,
                                     "seed": -1 if self.seed is None else self.seed,
                                     "profit": self.profit,
                                     "tags": ",".join(self.tags)})
