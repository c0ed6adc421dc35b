import pytest

from trading_bench.configurations import RandomFamilySpec
from trading_bench.core.types import Bundle, Event, EventKind, Instance, ItemCatalog
from trading_bench.experimental import generate_instance
from trading_bench.trading.configurations import default_params


def customer(counts, value):
    return Event(EventKind.CUSTOMER, [Bundle(counts, value)])


def supplier(counts, value):
    return Event(EventKind.SUPPLIER, [Bundle(counts, value)])


@pytest.fixture
def single_item_instance():
    """One item type, cap 40 (enough for v = 2, d = 1, eps = 0.5): sell, sell, offer a cheap restock, sell."""
    events = [customer((1,), 2.), customer((1,), 1.5), supplier((1,), 0.01), customer((1,), 2.)]
    return Instance(catalog=ItemCatalog((40,)), eps=0.5, events=events, declared_v=2., declared_d=1)


@pytest.fixture
def single_item_params():
    return default_params(2., 1, 0.5)


@pytest.fixture
def random_instance():
    """Factory for seeded instances of the random family that satisfy the large-inventory assumption."""

    def make(seed, **overrides):
        return generate_instance(RandomFamilySpec(seed=seed, **overrides))

    return make
