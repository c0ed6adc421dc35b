"""
Package-wide defaults and run configuration.

Hard-coded constants live at module level; `resolve_run_config` layers a flat JSON config file and
command-line flags over them (flags win over the file, the file wins over the defaults).
"""

import math
import os
from dataclasses import dataclass, fields
from typing import Optional

TAU = 1e-9
OVERFLOW_EXPONENT = 700.

LP_SIZE_CAP = 2000
LP_MAX_PIVOTS = 50000
LP_PERTURBATION = 1e-9

BRUTE_FORCE_MAX_STEPS = 12
BRUTE_FORCE_MAX_BUNDLES = 16
BRUTE_FORCE_MAX_STATES = 4096

BENCH_V_GRID = (2, 4, 8, 16, 32, 64, 128, 256, 512, 1024)
BENCH_D_GRID = (1,)
BENCH_EPS_GRID = (0.5,)
BENCH_NORMALIZED_SPREAD = 20.

SEED_ENVIRONMENT_VARIABLE = "TRADING_BENCH_SEED"

# Seconds an external trader gets to exit once its input is closed
EXTERNAL_TRADER_TIMEOUT = 10.

ALGORITHMS = ("trade", "truthful")
ASSUMPTION_MODES = ("strict", "warn")
AUGMENT_MODES = ("suppliers", "customers")


@dataclass(frozen=True)
class RunConfig:
    """
    Resolved options of one CLI invocation.

    Every field except `subcommand` may be set in a flat JSON config file under the same name.
    """
    subcommand: str
    instance: Optional[str] = None
    trace: Optional[str] = None
    output: Optional[str] = None
    algorithm: str = "trade"
    eps: Optional[float] = None
    v: Optional[float] = None
    d: Optional[int] = None
    mu: Optional[float] = None
    eta: Optional[float] = None
    customer_rule: str = "floored"
    seed: Optional[int] = None
    tau: float = TAU
    mode: str = "strict"
    augment: str = "suppliers"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"Invalid algorithm {self.algorithm!r}; acceptable are {ALGORITHMS}")
        if self.mode not in ASSUMPTION_MODES:
            raise ValueError(f"Invalid assumption mode {self.mode!r}; acceptable are {ASSUMPTION_MODES}")
        if self.augment not in AUGMENT_MODES:
            raise ValueError(f"Invalid augmentation {self.augment!r}; acceptable are {AUGMENT_MODES}")
        if not self.tau > 0:
            raise ValueError(f"Tolerance tau must be positive, but got {self.tau}")
        if self.algorithm == "truthful" and self.subcommand == "run" and self.seed is None:
            raise ValueError("The truthful mechanism samples rho from a seeded generator; pass --seed or set the "
                             f"{SEED_ENVIRONMENT_VARIABLE} environment variable")


CONFIG_KEYS = tuple(field.name for field in fields(RunConfig) if field.name != "subcommand")


@dataclass(frozen=True)
class RandomFamilySpec:
    r"""
    Random instance family used by `gen` and `bench`.

    Attributes
    ----------
    n : `int`
        Number of item types.
    w : `int`
        Inventory cap of every item type (raised by `ensure_assumption`).
    T : `int`
        Number of events.
    menu_size : `int`
        Bundles per menu.
    v : `float`
        Customer values are uniform in [1, v]; supplier values are uniform in [1, v] as well.
    d : `int`
        Bundle sizes are uniform in {1, ..., d}.
    eps : `float`
    customer_probability : `float`
        Probability that an event is a customer.
    seed : `int`
    ensure_assumption : `bool`
        Raise w to :math:`\lceil (8\eta/\varepsilon) \max a \rceil` so the large-inventory assumption holds.
    params : {"trade", "truthful"}
        Which engine's eta the widening uses.
    """
    n: int = 2
    w: int = 100
    T: int = 50  # noqa
    menu_size: int = 2
    v: float = 8.
    d: int = 1
    eps: float = 0.5
    customer_probability: float = 0.6
    seed: int = 0
    ensure_assumption: bool = True
    params: str = "trade"

    def __post_init__(self):
        if self.n < 1 or self.w < 1 or self.T < 0 or self.menu_size < 1:
            raise ValueError(f"Random family needs n >= 1, w >= 1, T >= 0 and menu_size >= 1, but got "
                             f"n = {self.n}, w = {self.w}, T = {self.T}, menu_size = {self.menu_size}")
        if not self.v >= 1 or self.d < 1 or not 0 < self.eps <= 1:
            raise ValueError(f"Random family needs v >= 1, d >= 1 and 0 < eps <= 1, but got "
                             f"v = {self.v}, d = {self.d}, eps = {self.eps}")
        if not 0 <= self.customer_probability <= 1:
            raise ValueError(f"customer_probability must lie in [0, 1], but got {self.customer_probability}")
        if self.params not in ALGORITHMS:
            raise ValueError(f"Invalid params choice {self.params!r}; acceptable are {ALGORITHMS}")


def seed_from_environment(seed=None):
    """Returns `seed` if given, else the integer in TRADING_BENCH_SEED, else None."""
    if seed is not None:
        return int(seed)
    text = os.environ.get(SEED_ENVIRONMENT_VARIABLE)
    if text is None or text.strip() == "":
        return None
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"Environment variable {SEED_ENVIRONMENT_VARIABLE} must hold an integer seed, "
                         f"but holds {text!r}")


def check_config_keys(config):
    """Raise `ValueError` on keys a config file may not set."""
    if not isinstance(config, dict):
        raise ValueError(f"A config file must hold a flat JSON object, but holds {type(config).__name__}")
    unknown = sorted(set(config) - set(CONFIG_KEYS))
    if unknown:
        raise ValueError(f"Unknown config key(s) {unknown}; accepted keys are {list(CONFIG_KEYS)}")
    nested = [key for key, value in config.items() if isinstance(value, (dict, list))]
    if nested:
        raise ValueError(f"Config values must be scalars (flat key-value JSON), but {nested} are not")


def resolve_run_config(subcommand, flags, config=None):
    """
    Builds a `RunConfig` from defaults, then a config file's entries, then command-line flags.

    Parameters
    ----------
    subcommand : `str`
    flags : `dict`
        Flag values from the command line; entries that are `None` count as "not given".
    config : `dict`, optional
        Parsed flat JSON config file.

    Returns
    -------
    `RunConfig`
    """
    config = {} if config is None else dict(config)
    check_config_keys(config)
    merged = dict(config)
    merged.update({key: value for key, value in flags.items() if key in CONFIG_KEYS and value is not None})
    merged["seed"] = seed_from_environment(merged.get("seed"))
    return RunConfig(subcommand=subcommand, **merged)


def required_cap(eta, eps, largest_count):
    """Smallest integer cap satisfying the large-inventory assumption for bundles of `largest_count` units."""
    return max(1, math.ceil(8 * eta / eps * largest_count))
