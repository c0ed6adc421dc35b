"""
Traders an adversary can drive. Every trader answers one single-agent menu at a time and exposes its
current (possibly fractional) inventory and its cumulative cash, which the adversaries read white-box.
"""

import json
import shlex
import subprocess
import warnings
from abc import ABC, abstractmethod

import numpy as np

from trading_bench.configurations import EXTERNAL_TRADER_TIMEOUT, TAU
from trading_bench.core.errors import ExternalTraderError
from trading_bench.core.types import Event, EventKind, Instance, Trace, signed_profit
from trading_bench.trading.configurations import default_params, rho_distribution, truthful_params
from trading_bench.trading.pricing import EngineState, check_large_inventory, step_customer, step_supplier
from trading_bench.trading.truthful import sample_rho, step_customer_truthful, step_supplier_truthful

TRADER_KINDS = ("trade", "truthful", "custom-exe")


class TraderView(ABC):
    """Interface between an adversary and the trader it attacks."""

    @abstractmethod
    def on_customer(self, menu):
        """Offer a customer menu (list of `Bundle`); returns the index sold, or None."""

    @abstractmethod
    def on_supplier(self, menu):
        """Offer a supplier menu; returns the index bought, or None."""

    @property
    @abstractmethod
    def inventory(self):
        """Current inventory as a float vector."""

    @property
    @abstractmethod
    def cash(self):
        """Money received minus money paid so far."""

    def close(self):
        pass


class EngineTrader(TraderView):
    """
    The known-valuation engine behind the trader interface.

    Runs in 'warn' mode: the large-inventory assumption is checked per menu and a single warning is issued the
    first time it fails, since several attacks violate it on purpose.
    """

    def __init__(self, catalog, params, tau=TAU):
        self.state = EngineState.full(catalog, params)
        self.tau = tau
        self.events = []
        self.steps = []
        self.tags = ()
        self._cash = 0.

    def _check_assumption(self, event):
        if self.tags:
            return
        params = self.state.params
        menu_instance = Instance(catalog=self.state.catalog, eps=params.eps, events=[event], declared_v=params.v,
                                 declared_d=params.d)
        if check_large_inventory(menu_instance, params):
            warnings.warn("Large-inventory assumption violated by the adversary's menus; the engine keeps trading")
            self.tags = ("large-inventory-violated",)

    def _customer_step(self, event):
        return step_customer(self.state, event, self.tau)

    def _supplier_step(self, event):
        return step_supplier(self.state, event, self.tau)

    def _offer(self, kind, menu):
        event = Event(kind, menu)
        self._check_assumption(event)
        step = self._customer_step(event) if kind is EventKind.CUSTOMER else self._supplier_step(event)
        self.events.append(event)
        self.steps.append(step)
        if step.traded:
            self._cash += step.price if kind is EventKind.CUSTOMER else -step.price
        return step.chosen if step.traded else None

    def on_customer(self, menu):
        return self._offer(EventKind.CUSTOMER, menu)

    def on_supplier(self, menu):
        return self._offer(EventKind.SUPPLIER, menu)

    @property
    def inventory(self):
        return self.state.r.astype(float)

    @property
    def cash(self):
        return self._cash

    def trace(self):
        """Everything offered so far as a `Trace`, for replay through the verifiers."""
        params = self.state.params
        instance = Instance(catalog=self.state.catalog, eps=params.eps, events=self.events, declared_v=params.v,
                            declared_d=params.d)
        return Trace(instance=instance, params=params, steps=self.steps, profit=signed_profit(self.steps),
                     algorithm="trade", tags=self.tags)


class TruthfulTrader(EngineTrader):
    """The posted-price mechanism behind the trader interface; rho is drawn once from `seed`."""

    def __init__(self, catalog, params, seed, rho=None, tau=TAU):
        super().__init__(catalog, params, tau)
        self.seed = seed
        self.dist = rho_distribution(params.v, params.eps)
        self.rho = sample_rho(self.dist, seed) if rho is None else float(rho)

    def _customer_step(self, event):
        return step_customer_truthful(self.state, event, self.rho, self.tau)

    def _supplier_step(self, event):
        return step_supplier_truthful(self.state, event, self.tau)

    def trace(self):
        base = super().trace()
        return Trace(instance=base.instance, params=base.params, steps=base.steps, profit=base.profit,
                     algorithm="truthful", delta=self.dist.delta, rho=self.rho, seed=self.seed, tags=base.tags)


class ExternalTrader(TraderView):
    """
    A trader running as a separate executable, spoken to in JSON Lines over stdin/stdout.

    Each request is {"kind": "customer" | "supplier", "menu": [{"counts": [...], "value": ...}, ...]};
    each reply is {"choice": int or null, "inventory": [...], "cash": float}.
    """

    def __init__(self, command, catalog):
        self.command = command
        self.catalog = catalog
        self.process = subprocess.Popen(shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                        text=True, encoding="utf-8")
        self._inventory = np.array(catalog.w, dtype=float)
        self._cash = 0.

    def _gone(self):
        return ExternalTraderError(f"External trader {self.command!r} exited without replying "
                                   f"(return code {self.process.poll()})")

    def _offer(self, kind, menu):
        request = {"kind": kind.value,
                   "menu": [{"counts": list(bundle.counts), "value": bundle.value} for bundle in menu]}
        try:
            self.process.stdin.write(json.dumps(request) + "\n")
            self.process.stdin.flush()
        except BrokenPipeError as error:
            raise self._gone() from error
        line = self.process.stdout.readline()
        if not line:
            raise self._gone()
        try:
            reply = json.loads(line)
            choice = reply["choice"]
            inventory = np.array(reply["inventory"], dtype=float)
            cash = float(reply["cash"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as error:
            raise ValueError(f"External trader {self.command!r} sent a malformed reply {line.strip()!r}; expected "
                             f"an object with 'choice', 'inventory' and 'cash'") from error
        if inventory.shape != (self.catalog.n,):
            raise ValueError(f"External trader reported {inventory.size} inventory entries for a catalog of "
                             f"{self.catalog.n} item types")
        self._inventory = inventory
        self._cash = cash
        return None if choice is None else int(choice)

    def on_customer(self, menu):
        return self._offer(EventKind.CUSTOMER, menu)

    def on_supplier(self, menu):
        return self._offer(EventKind.SUPPLIER, menu)

    @property
    def inventory(self):
        return self._inventory.copy()

    @property
    def cash(self):
        return self._cash

    def close(self, timeout=EXTERNAL_TRADER_TIMEOUT):
        """
        Closes the trader's stdin and waits `timeout` seconds for it to exit.

        Raises
        ------
        `trading_bench.core.errors.ExternalTraderError`
            If the process is still running after `timeout`; it is killed and reaped first.
        """
        if self.process.poll() is not None:
            return
        self.process.stdin.close()
        try:
            self.process.wait(timeout=timeout)
        except subprocess.TimeoutExpired as error:
            self.process.kill()
            self.process.wait()
            raise ExternalTraderError(f"External trader {self.command!r} did not exit within {timeout} s of the end "
                                      f"of its input and was killed") from error


def make_trader(kind, catalog, v, d, eps, seed=None, command=None, customer_rule="floored"):
    """
    Builds a trader for an attack.

    Parameters
    ----------
    kind : {"trade", "truthful", "custom-exe"}
    catalog : `trading_bench.core.types.ItemCatalog`
    v, d, eps
        Bounds the trader is told (and the augmentation).
    seed : `int`, optional
        Required for "truthful".
    command : `str`, optional
        Required for "custom-exe": the command line launching the external trader.
    customer_rule : {"floored", "standard"}, default="floored"
        Customer rule of the known-valuation engine.
    """
    if kind == "trade":
        return EngineTrader(catalog, default_params(v, d, eps, customer_rule))
    if kind == "truthful":
        if seed is None:
            raise ValueError("A truthful trader needs a seed for its rho draw")
        return TruthfulTrader(catalog, truthful_params(v, d, eps), seed)
    if kind == "custom-exe":
        if not command:
            raise ValueError("A custom-exe trader needs the command that launches it")
        return ExternalTrader(command, catalog)
    raise NotImplementedError(f"Trader kind {kind!r} is not available; acceptable kinds are {TRADER_KINDS}")
